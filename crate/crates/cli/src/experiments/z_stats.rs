//! Statistics of the site-level weight `Z(x)`: its upper tail on intervals
//! of several sizes, and how well windows `[x - ℓ, x + ℓ]` approximate it.
//!
//! Params: `sizes` (`[21, 41]`), `realizations` (1000), `site` (0),
//! `source` (`"current"` or `"mode_energy"`), `order` (1), `q` (0.2),
//! `lambda` (model value), `correlation_constant` (1), `mode` (exact
//! ledger), `local_size` (largest of `sizes`), `ells` (`[1, 2, 3, 4, 6, 8]`),
//! `local_realizations` (`realizations`), `profiles` (0).
//!
//! Realization `i` on every interval draws from the label path
//! `(z_stats, i, redraw)`, so nested intervals share their overlap; a
//! near-resonance triggers a redraw. The tail exponent is minus the
//! log-log slope of the exceedance curve between the 0.8 and 0.99 sample
//! quantiles; the Hill estimate (top 10%) is reported alongside.
//! `profiles > 0` adds the covariance of `Z` with distance, from that many
//! full profiles on the `local_size` interval.
//!
//! Tables:
//! - `z_samples.csv`: `size,realization,z`.
//! - `tail.csv`: `size,threshold,exceedance,count`.
//! - `local_approx.csv`: `ell,median,mean,fraction_within`.
//! - `covariance.csv` (when `profiles > 0`): `distance,covariance`.

use kgchain_core::model::sample_disorder;
use kgchain_core::perturbation::zstats::{covariance_by_distance, sample_z, tail_report, z_local_approx, z_profile};
use kgchain_core::perturbation::{LedgerMode, SourceKind, ZParams, ZSpec};
use kgchain_core::{labels, EigenSystem, ModelConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{at_least, centered_interval, within_lattice, Ctx, Outcome};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub sizes: Vec<usize>,
    pub realizations: usize,
    pub site: i64,
    pub source: SourceKind,
    pub order: usize,
    pub q: f64,
    pub lambda: Option<f64>,
    pub correlation_constant: f64,
    pub mode: LedgerMode,
    pub local_size: Option<usize>,
    pub ells: Vec<i64>,
    pub local_realizations: Option<usize>,
    pub profiles: usize,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            sizes: vec![21, 41],
            realizations: 1000,
            site: 0,
            source: SourceKind::Current,
            order: 1,
            q: 0.2,
            lambda: None,
            correlation_constant: 1.0,
            mode: LedgerMode::default(),
            local_size: None,
            ells: vec![1, 2, 3, 4, 6, 8],
            local_realizations: None,
            profiles: 0,
        }
    }
}

#[derive(Serialize)]
struct SampleRow {
    size: usize,
    realization: usize,
    z: f64,
}

#[derive(Serialize)]
struct TailRow {
    size: usize,
    threshold: f64,
    exceedance: f64,
    count: usize,
}

impl Params {
    fn spec(&self, model: &ModelConfig) -> ZSpec {
        ZSpec {
            source: self.source,
            order: self.order,
            params: ZParams {
                q: self.q,
                lambda: self.lambda.unwrap_or(model.lambda),
                correlation_constant: self.correlation_constant,
            },
            mode: self.mode,
        }
    }

    fn local_size(&self) -> usize {
        self.local_size
            .unwrap_or_else(|| self.sizes.iter().copied().max().unwrap_or(1))
    }

    pub fn validate(&self, model: &ModelConfig) -> Result<(), String> {
        at_least("realizations", self.realizations, 20)?;
        if self.sizes.is_empty() {
            return Err("sizes must not be empty".into());
        }
        self.spec(model).validate().map_err(|e| e.to_string())?;
        for &n in self.sizes.iter().chain([self.local_size()].iter()) {
            let iv = centered_interval(n);
            within_lattice(model, iv, "interval")?;
            if !iv.contains(self.site) || (self.source == SourceKind::Current && self.site == iv.a) {
                return Err(format!("site {} needs a left neighbour in [{}, {}]", self.site, iv.a, iv.b));
            }
        }
        if self.ells.iter().any(|&l| l < 1) || self.ells.windows(2).any(|w| w[0] >= w[1]) {
            return Err("ells must be positive and strictly increasing".into());
        }
        if let Some(n) = self.local_realizations {
            at_least("local_realizations", n, 1)?;
        }
        Ok(())
    }

    pub fn lineage(&self) -> Vec<String> {
        let mut out = vec![
            format!("z_stats/[0..{})/<redraw>", self.realizations),
            format!(
                "z_local/[0..{})/<redraw>",
                self.local_realizations.unwrap_or(self.realizations)
            ),
        ];
        if self.profiles > 0 {
            out.push(format!("z_profile/[0..{})", self.profiles));
        }
        out
    }

    pub(crate) fn run(&self, cx: &mut Ctx) -> Outcome {
        let spec = self.spec(cx.model);
        let mut samples = Vec::new();
        let mut tails = Vec::new();
        let mut reports = Vec::new();
        for &n in &self.sizes {
            let iv = centered_interval(n);
            let z = sample_z(cx.model, iv, self.site, &spec, self.realizations, "z_stats")?;
            let rep = tail_report(&z.values)?;
            samples.extend(z.values.iter().enumerate().map(|(realization, &z)| SampleRow {
                size: n,
                realization,
                z,
            }));
            tails.extend(rep.thresholds.iter().enumerate().map(|(j, &threshold)| TailRow {
                size: n,
                threshold,
                exceedance: rep.exceedance[j],
                count: rep.counts[j],
            }));
            reports.push(serde_json::json!({
                "size": n,
                "exponent": rep.exponent,
                "exponent_stderr": rep.exponent_stderr,
                "fit": rep.fit,
                "hill": rep.hill,
                "hill_k": rep.hill_k,
                "resampled": z.resampled,
            }));
        }
        cx.table("z_samples.csv", samples)?;
        cx.table("tail.csv", tails)?;

        let local_iv = centered_interval(self.local_size());
        let local = z_local_approx(
            cx.model,
            local_iv,
            self.site,
            &self.ells,
            &spec,
            self.local_realizations.unwrap_or(self.realizations),
            "z_local",
        )?;
        let medians: Vec<f64> = local.rows.iter().map(|r| r.median).collect();
        cx.table("local_approx.csv", local.rows.iter())?;

        if self.profiles > 0 {
            let profiles = (0..self.profiles)
                .into_par_iter()
                .map(|r| {
                    let dis = sample_disorder(cx.model, local_iv, cx.stream(&labels!["z_profile", r]))?;
                    let es = EigenSystem::of(&dis)?;
                    Ok(z_profile(&es, cx.model.eta, &spec)?.into_iter().map(|v| v.1).collect())
                })
                .collect::<kgchain_core::Result<Vec<Vec<f64>>>>()?;
            // current profiles start at the first site with a left neighbour
            let first = local_iv.a + i64::from(self.source == SourceKind::Current);
            let origin = (self.site - first) as usize;
            cx.table(
                "covariance.csv",
                covariance_by_distance(&profiles, origin)
                    .into_iter()
                    .map(|(distance, covariance)| serde_json::json!({"distance": distance, "covariance": covariance})),
            )?;
        }

        Ok(serde_json::json!({
            "site": self.site,
            "q": self.q,
            "order": self.order,
            "realizations": self.realizations,
            "tails": reports,
            "local": {
                "interval": [local_iv.a, local_iv.b],
                "ells": self.ells,
                "medians": medians,
                "constant": local.constant,
                "rate": local.rate,
                "resampled": local.resampled,
            },
        }))
    }
}
