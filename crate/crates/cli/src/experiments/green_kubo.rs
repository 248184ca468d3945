//! Second moment of the rescaled total current `𝓙(t) = J(t)/sqrt(t |Λ|)`,
//! `J(t) = ∫_0^t Σ_x j_x ds`, on the time grid `t = λ^{-n} τ` at fixed `L`.
//! Only the measured table is produced; no limit is taken or extrapolated.
//!
//! Params: `lambdas` (`[0.05, 0.1, 0.2]`), `n` (1), `taus` (`[1, 2, 5, 10]`),
//! `trajectories` (32), `realizations` (1), `sampler` (one state per chain
//! after 1000 sweeps), `stepping` (`{dt: 0.02, scheme: "yoshida4"}`).
//!
//! Table `green_kubo.csv`: `realization,lambda,tau,t,mean_sq,stderr`.

use kgchain_core::dynamics::{rescaled_current, total_current, CurrentAccumulator, Integrator, IntegratorConfig, Scheme};
use kgchain_core::gibbs::SamplerConfig;
use kgchain_core::model::sample_disorder;
use kgchain_core::stats::mean_stderr;
use kgchain_core::{labels, EigenSystem, ModelConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{at_least, equilibrium_states, single_state_sampler, validate_sampler, Ctx, Outcome, Stepping};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub lambdas: Vec<f64>,
    pub n: u32,
    pub taus: Vec<f64>,
    pub trajectories: usize,
    pub realizations: usize,
    pub sampler: SamplerConfig,
    pub stepping: Stepping,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            lambdas: vec![0.05, 0.1, 0.2],
            n: 1,
            taus: vec![1.0, 2.0, 5.0, 10.0],
            trajectories: 32,
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
    lambda: f64,
    tau: f64,
    t: f64,
    mean_sq: f64,
    stderr: f64,
}

impl Params {
    fn times(&self, lambda: f64) -> Vec<f64> {
        self.taus.iter().map(|tau| lambda.powi(-(self.n as i32)) * tau).collect()
    }

    pub fn validate(&self, model: &ModelConfig) -> Result<(), String> {
        at_least("trajectories", self.trajectories, 2)?;
        at_least("realizations", self.realizations, 1)?;
        validate_sampler(&self.sampler)?;
        if self.lambdas.is_empty() || self.lambdas.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
            return Err("lambdas must be a non-empty list of positive values".into());
        }
        if self.taus.is_empty() || self.taus.windows(2).any(|w| w[0] >= w[1]) || self.taus[0] <= 0.0 {
            return Err("taus must be positive and strictly increasing".into());
        }
        let t_max = self
            .lambdas
            .iter()
            .flat_map(|&l| self.times(l))
            .fold(0.0, f64::max);
        if !t_max.is_finite() {
            return Err("time grid overflows".into());
        }
        self.stepping.validate(model, t_max, &self.lambdas)
    }

    pub fn lineage(&self) -> Vec<String> {
        vec![
            format!("green_kubo/[0..{})/disorder", self.realizations),
            format!(
                "green_kubo/[0..{})/initial/[0..{})",
                self.realizations,
                self.lambdas.len()
            ),
        ]
    }

    pub(crate) fn run(&self, cx: &mut Ctx) -> Outcome {
        let mut rows = Vec::new();
        for r in 0..self.realizations {
            let dis = sample_disorder(
                cx.model,
                cx.model.lattice(),
                cx.stream(&labels!["green_kubo", r, "disorder"]),
            )?;
            let es = EigenSystem::of(&dis)?;
            for (li, &lambda) in self.lambdas.iter().enumerate() {
                let times = self.times(lambda);
                let t_end = *times.last().expect("non-empty taus");
                let cfg = IntegratorConfig::for_realization(self.stepping.dt, self.stepping.scheme, t_end, &dis)?;
                let targets: Vec<usize> = times.iter().map(|t| (t / cfg.dt).round().max(1.0) as usize).collect();
                let initial = equilibrium_states(
                    &dis,
                    &es,
                    lambda,
                    &self.sampler,
                    cx.stream(&labels!["green_kubo", r, "initial", li]),
                    self.trajectories,
                )?;
                let values = initial
                    .par_iter()
                    .map(|s0| {
                        let mut st = s0.clone();
                        let mut integ = Integrator::new(&dis, lambda, cfg)?;
                        let mut acc = CurrentAccumulator::new(0);
                        acc.push(st.t, total_current(&st, dis.eta));
                        let mut out = Vec::with_capacity(targets.len());
                        let mut step = 0;
                        for &target in &targets {
                            while step < target {
                                integ.step(&mut st)?;
                                acc.push(st.t, total_current(&st, dis.eta));
                                step += 1;
                            }
                            out.push(rescaled_current(acc.integral, st.t, dis.len())?);
                        }
                        Ok(out)
                    })
                    .collect::<kgchain_core::Result<Vec<Vec<f64>>>>()?;
                for (c, (&tau, &t)) in self.taus.iter().zip(&times).enumerate() {
                    let sq: Vec<f64> = values.iter().map(|v| v[c] * v[c]).collect();
                    let (mean_sq, stderr) = mean_stderr(&sq);
                    rows.push(Row {
                        realization: r,
                        lambda,
                        tau,
                        t,
                        mean_sq,
                        stderr,
                    });
                }
            }
        }
        let n_rows = rows.len();
        cx.table("green_kubo.csv", rows)?;
        Ok(serde_json::json!({
            "sites": cx.model.lattice().len(),
            "n": self.n,
            "rows": n_rows,
        }))
    }
}
