use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde_json::Value;

use crate::config::ExperimentConfig;
use crate::error::RunError;
use crate::experiments::Ctx;
use crate::record::{Abort, RunRecord, RunStatus};

/// Overrides the output directory of every run.
pub const OUT_DIR_ENV: &str = "KGCHAIN_OUT_DIR";

/// Command-line overrides applied on top of the config document.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub record: RunRecord,
    pub out_dir: PathBuf,
}

impl RunOutcome {
    pub fn path(&self, file: &str) -> PathBuf {
        self.out_dir.join(file)
    }
}

fn resolve_out_dir(cfg: &ExperimentConfig, opts: &RunOptions) -> PathBuf {
    if let Some(d) = &opts.out_dir {
        return d.clone();
    }
    if let Some(d) = std::env::var_os(OUT_DIR_ENV) {
        return PathBuf::from(d);
    }
    cfg.out_dir
        .clone()
        .unwrap_or_else(|| Path::new("kgchain-out").join(cfg.experiment.name()))
}

/// Validates, then executes the configured experiment on a pool of
/// `workers` threads. On failure the manifest is left with
/// `finalized: false` and the abort reason, when the output directory exists.
pub fn run(mut cfg: ExperimentConfig, opts: &RunOptions) -> Result<RunOutcome, RunError> {
    if let Some(seed) = opts.seed {
        cfg.model.seed = seed;
    }
    if opts.workers == Some(0) {
        return Err(RunError::validation("workers must be >= 1"));
    }
    let params = cfg.validate()?;
    let workers = opts
        .workers
        .or(cfg.workers)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let out_dir = resolve_out_dir(&cfg, opts);
    std::fs::create_dir_all(&out_dir)?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| RunError::Io { detail: e.to_string() })?;

    let config = serde_json::json!({
        "experiment": cfg.experiment,
        "model": cfg.model,
        "params": cfg.params,
    });
    let mut record = RunRecord {
        experiment: cfg.experiment.name().into(),
        config_hash: cfg.hash(),
        config,
        master_seed: cfg.model.seed,
        seed_lineage: params.lineage(),
        artifact_version: env!("CARGO_PKG_VERSION").into(),
        workers,
        started_unix: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_secs()),
        wall_time_s: 0.0,
        files: Vec::new(),
        status: RunStatus::Running,
        finalized: false,
        abort: None,
        summary: Value::Null,
    };
    record.write(&out_dir)?;

    let start = Instant::now();
    let mut cx = Ctx::new(&cfg.model, &out_dir);
    let result = pool.install(|| params.execute(&mut cx));
    record.wall_time_s = start.elapsed().as_secs_f64();
    record.files = cx.into_files();
    match result {
        Ok(summary) => {
            record.summary = summary;
            record.status = RunStatus::Ok;
            record.finalized = true;
            record.write(&out_dir)?;
            Ok(RunOutcome { record, out_dir })
        }
        Err(e) => {
            record.status = RunStatus::Aborted;
            record.abort = Some(Abort {
                reason: e.reason().into(),
                detail: e.detail().into(),
            });
            record.write(&out_dir)?;
            Err(e)
        }
    }
}
