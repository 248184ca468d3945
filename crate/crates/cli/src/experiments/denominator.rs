//! Lower tail of the smallest small denominator
//! `Q = min |Σ_j σ_j ν_{k_j}|` over distinct ordered mode tuples.
//!
//! Params: `interval_size` (20), `realizations` (10000), `pattern`
//! (`[1, -1]`), `epsilons` (13 log-spaced points on `[1e-6, 1e-2]`),
//! `tuple_cap` (1e12 ordered tuples).
//!
//! Table `denominator.csv`: `epsilon,p_hat,stderr,trials,interval_size,m,sigma_pattern`.
//! The summary holds the fitted log-log slope and the comparison with
//! `C |I|^m ε^{1/(m+1)}`.

use kgchain_core::denominators::{
    default_epsilons, estimate_tail, ordered_tuple_count, verify_bound, SigmaPattern, DEFAULT_TUPLE_CAP,
};
use kgchain_core::ModelConfig;
use serde::{Deserialize, Serialize};

use super::{at_least, centered_interval, within_lattice, Ctx, Outcome};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub interval_size: usize,
    pub realizations: usize,
    pub pattern: Vec<i32>,
    pub epsilons: Vec<f64>,
    pub tuple_cap: u64,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            interval_size: 20,
            realizations: 10_000,
            pattern: vec![1, -1],
            epsilons: default_epsilons(),
            tuple_cap: DEFAULT_TUPLE_CAP as u64,
        }
    }
}

impl Params {
    pub fn validate(&self, model: &ModelConfig) -> Result<(), String> {
        at_least("realizations", self.realizations, 1)?;
        let pattern = SigmaPattern::new(self.pattern.clone()).map_err(|e| e.to_string())?;
        at_least("interval_size", self.interval_size, pattern.m())?;
        within_lattice(model, centered_interval(self.interval_size), "interval")?;
        let count = ordered_tuple_count(self.interval_size, pattern.m());
        if count > self.tuple_cap as u128 {
            return Err(format!("{count} ordered tuples exceed tuple_cap {}", self.tuple_cap));
        }
        if self.epsilons.is_empty() || self.epsilons.windows(2).any(|w| w[0] > w[1]) {
            return Err("epsilons must be a non-empty sorted list".into());
        }
        Ok(())
    }

    pub fn lineage(&self) -> Vec<String> {
        vec![format!("denominator/[0..{})", self.realizations)]
    }

    pub(crate) fn run(&self, cx: &mut Ctx) -> Outcome {
        let pattern = SigmaPattern::new(self.pattern.clone())?;
        let iv = centered_interval(self.interval_size);
        let est = estimate_tail(
            cx.model,
            &pattern,
            iv,
            &self.epsilons,
            self.realizations,
            self.tuple_cap as u128,
        )?;
        let bound = verify_bound(&est, &pattern);
        est.write_csv(cx.file("denominator.csv")?)?;
        Ok(serde_json::json!({
            "interval": [iv.a, iv.b],
            "pattern": pattern.label(),
            "realizations": self.realizations,
            "fit": est.loglog_slope(),
            "min_observed": est.min_observed,
            "bound": bound,
        }))
    }
}
