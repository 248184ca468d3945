//! One module per experiment. Each defines a `Params` struct (the `params`
//! object of the config, every field optional) and documents the tables it
//! writes.

pub mod correlator;
pub mod current;
pub mod decorrelation;
pub mod denominator;
pub mod expansion_residual;
pub mod gibbs_check;
pub mod green_kubo;
pub mod minami;
pub mod noneq_current;
pub mod spectrum;
pub mod wavepacket;
pub mod z_stats;

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use kgchain_core::dynamics::{IntegratorConfig, Scheme};
use kgchain_core::gibbs::SamplerConfig;
use kgchain_core::{derive_stream, Interval, Label, ModelConfig, StreamId};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::Experiment;
use crate::error::RunError;

pub(crate) type Outcome = Result<Value, RunError>;

/// Validated experiment parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum Params {
    Spectrum(spectrum::Params),
    Correlator(correlator::Params),
    Minami(minami::Params),
    Denominator(denominator::Params),
    GibbsCheck(gibbs_check::Params),
    Decorrelation(decorrelation::Params),
    Current(current::Params),
    GreenKubo(green_kubo::Params),
    NoneqCurrent(noneq_current::Params),
    ExpansionResidual(expansion_residual::Params),
    ZStats(z_stats::Params),
    Wavepacket(wavepacket::Params),
}

fn parse<T: DeserializeOwned>(v: &Value) -> Result<T, RunError> {
    let v = if v.is_null() { Value::Object(Default::default()) } else { v.clone() };
    serde_json::from_value(v).map_err(|e| RunError::validation(format!("params: {e}")))
}

macro_rules! dispatch {
    ($self:expr, $p:ident => $e:expr) => {
        match $self {
            Params::Spectrum($p) => $e,
            Params::Correlator($p) => $e,
            Params::Minami($p) => $e,
            Params::Denominator($p) => $e,
            Params::GibbsCheck($p) => $e,
            Params::Decorrelation($p) => $e,
            Params::Current($p) => $e,
            Params::GreenKubo($p) => $e,
            Params::NoneqCurrent($p) => $e,
            Params::ExpansionResidual($p) => $e,
            Params::ZStats($p) => $e,
            Params::Wavepacket($p) => $e,
        }
    };
}

impl Params {
    pub fn parse(experiment: Experiment, v: &Value) -> Result<Self, RunError> {
        Ok(match experiment {
            Experiment::Spectrum => Params::Spectrum(parse(v)?),
            Experiment::Correlator => Params::Correlator(parse(v)?),
            Experiment::Minami => Params::Minami(parse(v)?),
            Experiment::Denominator => Params::Denominator(parse(v)?),
            Experiment::GibbsCheck => Params::GibbsCheck(parse(v)?),
            Experiment::Decorrelation => Params::Decorrelation(parse(v)?),
            Experiment::Current => Params::Current(parse(v)?),
            Experiment::GreenKubo => Params::GreenKubo(parse(v)?),
            Experiment::NoneqCurrent => Params::NoneqCurrent(parse(v)?),
            Experiment::ExpansionResidual => Params::ExpansionResidual(parse(v)?),
            Experiment::ZStats => Params::ZStats(parse(v)?),
            Experiment::Wavepacket => Params::Wavepacket(parse(v)?),
        })
    }

    pub fn validate(&self, model: &ModelConfig) -> Result<(), String> {
        dispatch!(self, p => p.validate(model))
    }

    /// Label paths of the streams the experiment will derive.
    pub fn lineage(&self) -> Vec<String> {
        dispatch!(self, p => p.lineage())
    }

    pub(crate) fn execute(&self, cx: &mut Ctx) -> Outcome {
        dispatch!(self, p => p.run(cx))
    }
}

/// Run context: the model, the output directory and the emitted file list.
pub struct Ctx<'a> {
    pub model: &'a ModelConfig,
    dir: &'a Path,
    files: Vec<String>,
}

impl<'a> Ctx<'a> {
    pub(crate) fn new(model: &'a ModelConfig, dir: &'a Path) -> Self {
        Self {
            model,
            dir,
            files: Vec::new(),
        }
    }

    pub(crate) fn into_files(self) -> Vec<String> {
        self.files
    }

    pub fn stream(&self, labels: &[Label]) -> StreamId {
        derive_stream(self.model.seed, labels)
    }

    fn register(&mut self, name: &str) -> PathBuf {
        self.files.push(name.to_owned());
        self.dir.join(name)
    }

    pub fn file(&mut self, name: &str) -> Result<BufWriter<File>, RunError> {
        Ok(BufWriter::new(File::create(self.register(name))?))
    }

    pub fn csv(&mut self, name: &str) -> Result<csv::Writer<File>, RunError> {
        Ok(csv::Writer::from_path(self.register(name))?)
    }

    /// Writes serializable rows; the header comes from the field names.
    pub fn table<T: Serialize>(&mut self, name: &str, rows: impl IntoIterator<Item = T>) -> Result<(), RunError> {
        let mut w = self.csv(name)?;
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `n` consecutive sites centred on the origin: `[-(n/2), n - 1 - n/2]`.
pub fn centered_interval(n: usize) -> Interval {
    let a = -((n / 2) as i64);
    Interval {
        a,
        b: a + n as i64 - 1,
    }
}

pub(crate) fn within_lattice(model: &ModelConfig, iv: Interval, what: &str) -> Result<(), String> {
    let lattice = model.lattice();
    if iv.a > iv.b || !lattice.contains_interval(&iv) {
        return Err(format!(
            "{what} [{}, {}] does not fit in the lattice [{}, {}]",
            iv.a, iv.b, lattice.a, lattice.b
        ));
    }
    Ok(())
}

pub(crate) fn at_least(name: &str, v: usize, min: usize) -> Result<(), String> {
    if v < min {
        return Err(format!("{name} = {v} must be >= {min}"));
    }
    Ok(())
}

pub(crate) fn site_in(model: &ModelConfig, name: &str, x: i64) -> Result<(), String> {
    let l = model.lattice();
    if !l.contains(x) {
        return Err(format!("{name} = {x} outside the lattice [{}, {}]", l.a, l.b));
    }
    Ok(())
}

/// Time stepping shared by the trajectory experiments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stepping {
    pub dt: f64,
    pub scheme: Scheme,
}

impl Stepping {
    pub(crate) fn config(&self, t_max: f64, nu_plus: f64) -> Result<IntegratorConfig, String> {
        IntegratorConfig::new(self.dt, self.scheme, t_max, nu_plus).map_err(|e| e.to_string())
    }

    /// Checks stability against the largest frequency the law allows, and
    /// that the exact harmonic flow is only requested at `λ = 0`.
    pub(crate) fn validate(&self, model: &ModelConfig, t_max: f64, lambdas: &[f64]) -> Result<(), String> {
        self.config(t_max, model.nu_sq_max().sqrt())?;
        if self.scheme == Scheme::ExactHarmonic && lambdas.iter().any(|&l| l != 0.0) {
            return Err("exact_harmonic stepping requires lambda = 0".into());
        }
        Ok(())
    }
}

pub(crate) fn validate_sampler(cfg: &SamplerConfig) -> Result<(), String> {
    cfg.validate().map_err(|e| e.to_string())
}

pub(crate) fn validate_time(name: &str, t: f64) -> Result<(), String> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(format!("{name} = {t} must be positive"));
    }
    Ok(())
}

/// `(mean, stderr)` of each column of equally long rows.
pub(crate) fn column_stats(rows: &[Vec<f64>]) -> Vec<(f64, f64)> {
    let n = rows.first().map_or(0, |r| r.len());
    (0..n)
        .map(|j| {
            let col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
            kgchain_core::stats::mean_stderr(&col)
        })
        .collect()
}

/// `n` equilibrium states at unit temperature: exact harmonic draws at
/// `λ = 0`, otherwise the final state of `n` independent heat-bath chains.
pub(crate) fn equilibrium_states(
    dis: &kgchain_core::DisorderRealization,
    es: &kgchain_core::EigenSystem,
    lambda: f64,
    sampler: &SamplerConfig,
    stream: StreamId,
    n: usize,
) -> kgchain_core::Result<Vec<kgchain_core::ChainState>> {
    if lambda == 0.0 {
        return Ok(kgchain_core::gibbs::sample_harmonic(es, n, stream));
    }
    let chains = kgchain_core::gibbs::sample_gibbs_chains(dis, lambda, sampler, stream, n)?;
    Ok(chains
        .into_iter()
        .map(|mut c| c.pop().expect("sampler yields at least one state"))
        .collect())
}

/// One state per chain after `burn_in` sweeps.
pub(crate) fn single_state_sampler() -> SamplerConfig {
    SamplerConfig {
        burn_in: 1000,
        thinning: 1,
        n_samples: 1,
        proposal: Default::default(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn centered_interval_has_requested_size() {
        for n in 1..12 {
            let iv = centered_interval(n);
            assert_eq!((iv.b - iv.a + 1) as usize, n);
            assert!(iv.a <= 0 && iv.b >= 0);
            assert!(iv.b - iv.a.abs() <= 0 && iv.a.abs() - iv.b <= 1);
        }
        let iv = centered_interval(20);
        assert_eq!((iv.a, iv.b), (-10, 9));
    }
}
