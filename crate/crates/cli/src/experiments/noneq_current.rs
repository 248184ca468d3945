//! Integrated bond current from a two-temperature product state: sites left
//! of `split` start at inverse temperature `beta_left`, the rest at
//! `beta_right`, and the chain then evolves under the model Hamiltonian.
//!
//! Params: `beta_left` (0.5), `beta_right` (2.0), `split` (0), `site` (0),
//! `trajectories` (64), `t_max` (100), `record_every` (50 steps),
//! `realizations` (1), `sampler` (one state per chain after 1000 sweeps),
//! `stepping` (`{dt: 0.02, scheme: "yoshida4"}`).
//!
//! Table `noneq_current.csv`: `realization,t,mean_j0,stderr`.

use kgchain_core::dynamics::{record_trajectory, IntegratorConfig, RecordSpec, Scheme};
use kgchain_core::gibbs::{sample_noneq, NoneqProfile, SamplerConfig};
use kgchain_core::model::sample_disorder;
use kgchain_core::{labels, ModelConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    at_least, column_stats, single_state_sampler, site_in, validate_sampler, validate_time, Ctx, Outcome, Stepping,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub beta_left: f64,
    pub beta_right: f64,
    pub split: i64,
    pub site: i64,
    pub trajectories: usize,
    pub t_max: f64,
    pub record_every: usize,
    pub realizations: usize,
    pub sampler: SamplerConfig,
    pub stepping: Stepping,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            beta_left: 0.5,
            beta_right: 2.0,
            split: 0,
            site: 0,
            trajectories: 64,
            t_max: 100.0,
            record_every: 50,
            realizations: 1,
            sampler: single_state_sampler(),
            stepping: Stepping {
                dt: 0.02,
                scheme: Scheme::Yoshida4,
            },
        }
    }
}

#[derive(Serialize)]
struct Row {
    realization: usize,
    t: f64,
    mean_j0: f64,
    stderr: f64,
}

impl Params {
    fn profile(&self, model: &ModelConfig) -> kgchain_core::Result<NoneqProfile> {
        let l = model.lattice();
        let split = (self.split - l.a).clamp(0, l.len() as i64) as usize;
        NoneqProfile::step(l.len(), split, self.beta_left, self.beta_right)
    }

    pub fn validate(&self, model: &ModelConfig) -> Result<(), String> {
        at_least("trajectories", self.trajectories, 2)?;
        at_least("realizations", self.realizations, 1)?;
        at_least("record_every", self.record_every, 1)?;
        validate_time("t_max", self.t_max)?;
        validate_sampler(&self.sampler)?;
        site_in(model, "site", self.site)?;
        if self.site == model.lattice().a {
            return Err("the current site needs a left neighbour".into());
        }
        self.profile(model).map_err(|e| e.to_string())?;
        self.stepping.validate(model, self.t_max, &[model.lambda])
    }

    pub fn lineage(&self) -> Vec<String> {
        vec![
            format!("noneq_current/[0..{})/disorder", self.realizations),
            format!(
                "noneq_current/[0..{})/initial/<chain [0..{})>",
                self.realizations, self.trajectories
            ),
        ]
    }

    pub(crate) fn run(&self, cx: &mut Ctx) -> Outcome {
        let lambda = cx.model.lambda;
        let profile = self.profile(cx.model)?;
        let mut rows = Vec::new();
        let mut final_means = Vec::new();
        for r in 0..self.realizations {
            let dis = sample_disorder(
                cx.model,
                cx.model.lattice(),
                cx.stream(&labels!["noneq_current", r, "disorder"]),
            )?;
            let cfg = IntegratorConfig::for_realization(self.stepping.dt, self.stepping.scheme, self.t_max, &dis)?;
            let spec = RecordSpec {
                current_site: self.site,
                modes: Vec::new(),
                es: None,
                record_every: self.record_every,
            };
            let stream = cx.stream(&labels!["noneq_current", r, "initial"]);
            let runs = (0..self.trajectories)
                .into_par_iter()
                .map(|i| {
                    let mut states = sample_noneq(&dis, lambda, &profile, &self.sampler, stream.child(i))?;
                    let s0 = states.pop().expect("sampler yields at least one state");
                    record_trajectory(&s0, &dis, lambda, &cfg, &spec)
                })
                .collect::<kgchain_core::Result<Vec<_>>>()?;
            let ts: Vec<f64> = runs[0].iter().map(|row| row.t).collect();
            let j: Vec<Vec<f64>> = runs.iter().map(|rs| rs.iter().map(|row| row.j0).collect()).collect();
            let stats = column_stats(&j);
            final_means.push(stats.last().map_or(f64::NAN, |s| s.0));
            rows.extend(ts.iter().zip(stats).map(|(&t, (mean_j0, stderr))| Row {
                realization: r,
                t,
                mean_j0,
                stderr,
            }));
        }
        cx.table("noneq_current.csv", rows)?;
        Ok(serde_json::json!({
            "lambda": lambda,
            "trajectories": self.trajectories,
            "t_max": self.t_max,
            "final_mean_j0": final_means,
        }))
    }
}
