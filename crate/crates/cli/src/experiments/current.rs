//! Variance of the integrated bond current `J_0(t) = ∫_0^t j_{x0}(s) ds`
//! over equilibrium trajectories at the model's `λ`.
//!
//! Params: `trajectories` (200), `t_max` (1000), `site` (0), `record_every`
//! (20 steps), `realizations` (1), `sampler` (one state per chain after
//! 1000 sweeps; unused at `λ = 0`), `stepping` (`{dt: 0.05, scheme:
//! "exact_harmonic"}`).
//!
//! The trend statistic is the least-squares slope of `Var J_0(t)` over the
//! final decade `[t_max/10, t_max]`. Its standard error is a jackknife over
//! trajectories, because every time point reuses the same trajectories.
//!
//! Table `current.csv`: `realization,t,mean_j0,var_j0`.

use kgchain_core::dynamics::{record_trajectory, IntegratorConfig, RecordSpec, Scheme};
use kgchain_core::gibbs::SamplerConfig;
use kgchain_core::model::sample_disorder;
use kgchain_core::stats::{jackknife_stderr, linear_fit};
use kgchain_core::{labels, EigenSystem, ModelConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    at_least, equilibrium_states, single_state_sampler, site_in, validate_sampler, validate_time, Ctx, Outcome,
    Stepping,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub trajectories: usize,
    pub t_max: f64,
    pub site: i64,
    pub record_every: usize,
    pub realizations: usize,
    pub sampler: SamplerConfig,
    pub stepping: Stepping,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            trajectories: 200,
            t_max: 1000.0,
            site: 0,
            record_every: 20,
            realizations: 1,
            sampler: single_state_sampler(),
            stepping: Stepping {
                dt: 0.05,
                scheme: Scheme::ExactHarmonic,
            },
        }
    }
}

#[derive(Serialize)]
struct Row {
    realization: usize,
    t: f64,
    mean_j0: f64,
    var_j0: f64,
}

/// Slope of `Var(t)` on `ts` with its jackknife standard error, from the
/// per-trajectory values `j[i][t]`.
pub fn variance_trend(ts: &[f64], j: &[Vec<f64>]) -> (f64, f64) {
    let n = j.len() as f64;
    let cols = ts.len();
    let mut s1 = vec![0.0; cols];
    let mut s2 = vec![0.0; cols];
    for row in j {
        for c in 0..cols {
            s1[c] += row[c];
            s2[c] += row[c] * row[c];
        }
    }
    let var = |s1: f64, s2: f64, n: f64| (s2 - s1 * s1 / n) / (n - 1.0);
    let full: Vec<f64> = (0..cols).map(|c| var(s1[c], s2[c], n)).collect();
    let slope = linear_fit(ts, &full).slope;
    let loo: Vec<f64> = j
        .iter()
        .map(|row| {
            let v: Vec<f64> = (0..cols)
                .map(|c| var(s1[c] - row[c], s2[c] - row[c] * row[c], n - 1.0))
                .collect();
            linear_fit(ts, &v).slope
        })
        .collect();
    (slope, jackknife_stderr(&loo))
}

impl Params {
    pub fn validate(&self, model: &ModelConfig) -> Result<(), String> {
        at_least("trajectories", self.trajectories, 3)?;
        at_least("realizations", self.realizations, 1)?;
        at_least("record_every", self.record_every, 1)?;
        validate_time("t_max", self.t_max)?;
        validate_sampler(&self.sampler)?;
        site_in(model, "site", self.site)?;
        if self.site == model.lattice().a {
            return Err("the current site needs a left neighbour".into());
        }
        self.stepping.validate(model, self.t_max, &[model.lambda])
    }

    pub fn lineage(&self) -> Vec<String> {
        vec![
            format!("current/[0..{})/disorder", self.realizations),
            format!("current/[0..{})/initial", self.realizations),
        ]
    }

    pub(crate) fn run(&self, cx: &mut Ctx) -> Outcome {
        let lambda = cx.model.lambda;
        let mut rows = Vec::new();
        let mut trends = Vec::new();
        for r in 0..self.realizations {
            let dis = sample_disorder(cx.model, cx.model.lattice(), cx.stream(&labels!["current", r, "disorder"]))?;
            let es = EigenSystem::of(&dis)?;
            let initial = equilibrium_states(
                &dis,
                &es,
                lambda,
                &self.sampler,
                cx.stream(&labels!["current", r, "initial"]),
                self.trajectories,
            )?;
            let cfg = IntegratorConfig::for_realization(self.stepping.dt, self.stepping.scheme, self.t_max, &dis)?;
            let spec = RecordSpec {
                current_site: self.site,
                modes: Vec::new(),
                es: Some(&es),
                record_every: self.record_every,
            };
            let runs = initial
                .par_iter()
                .map(|s0| record_trajectory(s0, &dis, lambda, &cfg, &spec))
                .collect::<kgchain_core::Result<Vec<_>>>()?;
            let ts: Vec<f64> = runs[0].iter().map(|row| row.t).collect();
            let j: Vec<Vec<f64>> = runs.iter().map(|rs| rs.iter().map(|row| row.j0).collect()).collect();
            let n = j.len() as f64;
            for (c, &t) in ts.iter().enumerate() {
                let col: Vec<f64> = j.iter().map(|row| row[c]).collect();
                let mean = col.iter().sum::<f64>() / n;
                let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
                rows.push(Row {
                    realization: r,
                    t,
                    mean_j0: mean,
                    var_j0: var,
                });
            }
            let start = ts.partition_point(|&t| t < self.t_max / 10.0);
            let window: Vec<Vec<f64>> = j.iter().map(|row| row[start..].to_vec()).collect();
            let (slope, stderr) = variance_trend(&ts[start..], &window);
            trends.push(serde_json::json!({
                "realization": r,
                "window": [ts[start], ts[ts.len() - 1]],
                "points": ts.len() - start,
                "slope": slope,
                "slope_stderr": stderr,
                "z": slope / stderr,
            }));
        }
        cx.table("current.csv", rows)?;
        Ok(serde_json::json!({
            "lambda": lambda,
            "trajectories": self.trajectories,
            "t_max": self.t_max,
            "trend": trends,
        }))
    }
}
