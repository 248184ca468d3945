//! Disorder average of the eigenfunction correlator
//! `Q(x, y) = Σ_k |ψ_k(x) ψ_k(y)|` as a function of `d = |y - x|`.
//!
//! Params: `realizations` (500), `site` (0), `fit_min` (1), `fit_max`
//! (largest distance present on both sides of `site`, at least 1).
//!
//! At each distance the two sides `x ± d` are averaged where both exist.
//! `ln E[Q]` is fitted linearly in `d` on `[fit_min, fit_max]`.
//!
//! Table `correlator.csv`: `d,mean,stderr`.

use kgchain_core::spectral::correlator_profile;
use kgchain_core::stats::{linear_fit, mean_stderr};
use kgchain_core::{labels, model::sample_disorder, EigenSystem, ModelConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{at_least, site_in, Ctx, Outcome};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub realizations: usize,
    pub site: i64,
    pub fit_min: usize,
    pub fit_max: Option<usize>,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            realizations: 500,
            site: 0,
            fit_min: 1,
            fit_max: None,
        }
    }
}

#[derive(Serialize)]
struct Row {
    d: usize,
    mean: f64,
    stderr: f64,
}

impl Params {
    fn max_distance(&self, model: &ModelConfig) -> usize {
        let l = model.lattice();
        (self.site - l.a).max(l.b - self.site) as usize
    }

    fn fit_range(&self, model: &ModelConfig) -> (usize, usize) {
        let l = model.lattice();
        let both = (self.site - l.a).min(l.b - self.site).max(1) as usize;
        (self.fit_min, self.fit_max.unwrap_or(both))
    }

    pub fn validate(&self, model: &ModelConfig) -> Result<(), String> {
        at_least("realizations", self.realizations, 1)?;
        site_in(model, "site", self.site)?;
        let (lo, hi) = self.fit_range(model);
        if lo >= hi || hi > self.max_distance(model) {
            return Err(format!(
                "fit range [{lo}, {hi}] must be increasing and within distance {}",
                self.max_distance(model)
            ));
        }
        Ok(())
    }

    pub fn lineage(&self) -> Vec<String> {
        vec![format!("correlator/[0..{})", self.realizations)]
    }

    pub(crate) fn run(&self, cx: &mut Ctx) -> Outcome {
        let lattice = cx.model.lattice();
        let dmax = self.max_distance(cx.model);
        let x = self.site;
        let profiles = (0..self.realizations)
            .into_par_iter()
            .map(|r| {
                let dis = sample_disorder(cx.model, lattice, cx.stream(&labels!["correlator", r]))?;
                let es = EigenSystem::of(&dis)?;
                let prof = correlator_profile(&es, x)?;
                let by_d: Vec<f64> = (0..=dmax as i64)
                    .map(|d| {
                        let sides: Vec<f64> = [x - d, x + d]
                            .into_iter()
                            .filter(|y| lattice.contains(*y))
                            .map(|y| prof[(y - lattice.a) as usize])
                            .collect();
                        sides.iter().sum::<f64>() / sides.len() as f64
                    })
                    .collect();
                Ok(by_d)
            })
            .collect::<kgchain_core::Result<Vec<_>>>()?;

        let rows: Vec<Row> = (0..=dmax)
            .map(|d| {
                let col: Vec<f64> = profiles.iter().map(|p| p[d]).collect();
                let (mean, stderr) = mean_stderr(&col);
                Row { d, mean, stderr }
            })
            .collect();
        let (lo, hi) = self.fit_range(cx.model);
        let (xs, ys): (Vec<f64>, Vec<f64>) = rows[lo..=hi]
            .iter()
            .filter(|r| r.mean > 0.0)
            .map(|r| (r.d as f64, r.mean.ln()))
            .unzip();
        let fit = (xs.len() >= 2).then(|| linear_fit(&xs, &ys));
        cx.table("correlator.csv", rows)?;
        Ok(serde_json::json!({
            "realizations": self.realizations,
            "site": x,
            "fit_range": [lo, hi],
            "fit": fit,
            "localization_length": fit.map(|f| -1.0 / f.slope),
        }))
    }
}
