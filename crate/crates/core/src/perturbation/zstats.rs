//! Site-indexed random sums `Z(x)` built from `q`-th powers of expansion
//! coefficients, and their tail and locality statistics.
//!
//! With a constant correlation factor `C` the pairwise sums factorise:
//! `G = C^q (Σ |ĝ|^q)²` and `U = C^q (Σ_i λ^{(i-1)q} Σ |û⁽ⁱ⁾|^q)²`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::expansion::{Source, RESONANCE_THRESHOLD};
use super::ledger::{ledger_modes, visit_ledger, ExpansionTerm, Ledger, LedgerConfig, LedgerMode, TermKind};
use super::modes::AnharmonicTensor;
use crate::error::{Error, Result};
use crate::labels;
use crate::model::{sample_disorder, DisorderRealization, Interval, ModelConfig};
use crate::rng::derive_stream;
use crate::spectral::EigenSystem;
use crate::stats::{self, LinearFit};

pub const DEFAULT_Q: f64 = 0.2;

/// Fresh disorder draws allowed per realization after a near-resonance.
pub const MAX_RESAMPLES: usize = 16;

fn default_q() -> f64 {
    DEFAULT_Q
}

fn default_c() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZParams {
    #[serde(default = "default_q")]
    pub q: f64,
    #[serde(default)]
    pub lambda: f64,
    /// Constant bounding the correlation factor in the pairwise sums.
    #[serde(default = "default_c")]
    pub correlation_constant: f64,
}

impl Default for ZParams {
    fn default() -> Self {
        Self {
            q: DEFAULT_Q,
            lambda: 0.0,
            correlation_constant: 1.0,
        }
    }
}

impl ZParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.q > 0.0 && self.q < 1.0) {
            return Err(Error::InvalidParameter(format!("q = {} must lie in (0, 1)", self.q)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!("lambda = {} must be >= 0", self.lambda)));
        }
        if !(self.correlation_constant > 0.0 && self.correlation_constant.is_finite()) {
            return Err(Error::InvalidParameter("correlation constant must be > 0".into()));
        }
        Ok(())
    }
}

/// One source's contribution to `Z(x)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZComponent {
    /// Source mode for the mode-energy sum; `None` for the current.
    pub k0: Option<usize>,
    pub weight: f64,
    /// `Σ |ĝ|^q` over the `g` terms.
    pub g_sum: f64,
    /// `Σ |û⁽ⁱ⁾|^q` per order.
    pub u_sums: Vec<f64>,
    /// `C^q (Σ|ĝ|^q)²`.
    pub g: f64,
    /// `C^q (Σ_i λ^{(i-1)q} Σ|û⁽ⁱ⁾|^q)²`.
    pub u: f64,
}

impl ZComponent {
    fn new(k0: Option<usize>, weight: f64, g_sum: f64, u_sums: Vec<f64>, p: &ZParams) -> Self {
        let cq = p.correlation_constant.powf(p.q);
        let lq = p.lambda.powf(p.q);
        let mut w = 1.0;
        let mut su = 0.0;
        for s in &u_sums {
            su += w * s;
            w *= lq;
        }
        Self {
            k0,
            weight,
            g_sum,
            u_sums,
            g: cq * g_sum * g_sum,
            u: cq * su * su,
        }
    }

    /// `U` split into its `(i, i')` pair terms `C^q λ^{(i+i'-2)q} S_i S_{i'}`.
    pub fn u_pairs(&self, p: &ZParams) -> Vec<Vec<f64>> {
        let cq = p.correlation_constant.powf(p.q);
        let lq = p.lambda.powf(p.q);
        let n = self.u_sums.len();
        (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| cq * lq.powi((i + j) as i32) * self.u_sums[i] * self.u_sums[j])
                    .collect()
            })
            .collect()
    }
}

/// `Z(x)` with its breakdown.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZEstimate {
    pub site: i64,
    pub q: f64,
    pub value: f64,
    /// `Σ weight · G`.
    pub g_part: f64,
    /// `Σ weight · U`.
    pub u_part: f64,
    pub components: Vec<ZComponent>,
}

impl ZEstimate {
    fn from_components(site: i64, q: f64, components: Vec<ZComponent>) -> Self {
        let g_part = components.iter().map(|c| c.weight * c.g).sum::<f64>();
        let u_part = components.iter().map(|c| c.weight * c.u).sum::<f64>();
        Self {
            site,
            q,
            value: g_part + u_part,
            g_part,
            u_part,
            components,
        }
    }
}

#[inline]
fn qpow(x: f64, q: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        (q * x.abs().ln()).exp()
    }
}

/// Running `q`-power sums over a ledger stream.
#[derive(Debug, Clone)]
pub struct ZAccumulator {
    order: usize,
    q: f64,
    pub g_sum: f64,
    pub u_sums: Vec<f64>,
}

impl ZAccumulator {
    pub fn new(order: usize, q: f64) -> Self {
        Self {
            order,
            q,
            g_sum: 0.0,
            u_sums: vec![0.0; order],
        }
    }

    pub fn push(&mut self, t: &ExpansionTerm) {
        let c = qpow(t.coefficient().norm(), self.q);
        match t.kind {
            TermKind::F if t.order == self.order + 1 => self.g_sum += c,
            TermKind::U => self.u_sums[t.order - 1] += c,
            TermKind::F => {}
        }
    }
}

fn source_weight(source: &Source, es: &EigenSystem, x: i64) -> Result<f64> {
    match *source {
        Source::Current { x0 } if x0 == x => Ok(1.0),
        Source::Current { x0 } => Err(Error::InvalidParameter(format!(
            "current ledger at {x0} cannot estimate Z at {x}"
        ))),
        Source::ModeEnergy { k0 } => Ok(es.psi_at(k0, x)?.powi(2)),
    }
}

/// `Z(x)` from a stored ledger: the single-source component, weighted by
/// `|ψ_{k0}(x)|²` for a mode-energy ledger. An empty ledger gives `Z = 0`.
pub fn z_estimate(ledger: &Ledger, es: &EigenSystem, x: i64, params: &ZParams) -> Result<ZEstimate> {
    params.validate()?;
    let weight = source_weight(&ledger.source, es, x)?;
    let mut acc = ZAccumulator::new(ledger.order, params.q);
    for t in &ledger.terms {
        acc.push(t);
    }
    let k0 = match ledger.source {
        Source::ModeEnergy { k0 } => Some(k0),
        Source::Current { .. } => None,
    };
    let comp = ZComponent::new(k0, weight, acc.g_sum, acc.u_sums, params);
    Ok(ZEstimate::from_components(x, params.q, vec![comp]))
}

/// Single-source component by streaming the ledger without storing it.
pub fn z_component_streaming(
    source: &Source,
    es: &EigenSystem,
    cfg: &LedgerConfig,
    x: i64,
    params: &ZParams,
) -> Result<ZComponent> {
    let weight = source_weight(source, es, x)?;
    let mut acc = ZAccumulator::new(cfg.order, params.q);
    visit_ledger(source, es, cfg, &mut |t| {
        acc.push(t);
        Ok(())
    })?;
    let k0 = match *source {
        Source::ModeEnergy { k0 } => Some(k0),
        Source::Current { .. } => None,
    };
    Ok(ZComponent::new(k0, weight, acc.g_sum, acc.u_sums, params))
}

/// Site-level sums shared by every `x₀` for the first-order current ledger:
/// `T[m][o] = Σ |Ĥ(m, a, b, c)|^q` over ordered `(a, b, c)` with signs and
/// the four contraction slots, excluding completions of `(o, ·)` that are
/// pairable.
#[derive(Debug, Clone)]
pub struct FirstOrderCurrent {
    modes: Vec<usize>,
    q: f64,
    t: Vec<f64>,
}

impl FirstOrderCurrent {
    pub fn new(es: &EigenSystem, modes: Vec<usize>, q: f64) -> Self {
        let tensor = AnharmonicTensor::new(es, modes.clone());
        let m = modes.len();
        let pw: Vec<f64> = tensor.values().iter().map(|&v| qpow(v, q)).collect();
        let at = |a: usize, b: usize, c: usize, d: usize| pw[((a * m + b) * m + c) * m + d];
        let s3: Vec<f64> = (0..m).map(|a| pw[a * m * m * m..(a + 1) * m * m * m].iter().sum()).collect();
        let mut t = vec![0.0; m * m];
        for a in 0..m {
            for o in 0..m {
                let mut corr = 3.0 * at(a, o, o, o);
                for k in 0..m {
                    if k != o {
                        corr += 6.0 * at(a, o, k, k);
                    }
                }
                t[a * m + o] = 4.0 * (8.0 * s3[a] - corr);
            }
        }
        Self { modes, q, t }
    }

    /// `Σ |û⁽¹⁾|^q` and `Σ |ĝ|^q` for the current into `x0`.
    pub fn sums(&self, es: &EigenSystem, x0: i64, eta: f64) -> Result<(f64, f64)> {
        Source::Current { x0 }.validate(es)?;
        let i = es.interval.index(x0)?;
        let m = self.modes.len();
        let (mut u_sum, mut g_sum) = (0.0, 0.0);
        for a in 0..m {
            let k1 = self.modes[a];
            let d1 = es.psi(k1)[i - 1] - es.psi(k1)[i];
            for b in 0..m {
                let k2 = self.modes[b];
                let f = (0.5 * eta * d1 * es.psi(k2)[i] * (es.nu[k2] / es.nu[k1]).sqrt()).abs();
                if f == 0.0 {
                    continue;
                }
                // two sign patterns per |Δ| value
                let deltas: &[f64] = if a == b {
                    &[2.0 * es.nu[k1]]
                } else {
                    &[es.nu[k1] + es.nu[k2], (es.nu[k1] - es.nu[k2]).abs()]
                };
                let contr = self.t[a * m + b] + self.t[b * m + a];
                for &d in deltas {
                    if d < RESONANCE_THRESHOLD {
                        return Err(Error::NearResonance {
                            delta: d,
                            monomial: format!("a±{k1}*a∓{k2}"),
                        });
                    }
                    let w = 2.0 * qpow(f / d, self.q);
                    u_sum += w;
                    g_sum += w * contr;
                }
            }
        }
        Ok((u_sum, g_sum))
    }

    pub fn component(&self, es: &EigenSystem, x0: i64, eta: f64, params: &ZParams) -> Result<ZComponent> {
        let (u, g) = self.sums(es, x0, eta)?;
        Ok(ZComponent::new(None, 1.0, g, vec![u], params))
    }
}

/// Which observable seeds the site-level sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    /// `Σ_{k0} |ψ_{k0}(x)|² (G_{k0} + U_{k0})`.
    ModeEnergy,
    /// `G_x + U_x` for the current into `x`.
    Current,
}

/// Everything that defines a site-level `Z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZSpec {
    pub source: SourceKind,
    pub order: usize,
    #[serde(flatten)]
    pub params: ZParams,
    #[serde(default)]
    pub mode: LedgerMode,
}

impl ZSpec {
    pub fn validate(&self) -> Result<()> {
        if self.order == 0 {
            return Err(Error::InvalidParameter("expansion order must be >= 1".into()));
        }
        self.params.validate()
    }

    fn first_order_current(&self) -> bool {
        self.source == SourceKind::Current
            && self.order == 1
            && match self.mode {
                LedgerMode::Exact { .. } => true,
                LedgerMode::Truncated { floor, .. } => floor == 0.0,
            }
    }
}

/// `Z(x)` on one realization.
pub fn z_site(es: &EigenSystem, x: i64, eta: f64, spec: &ZSpec) -> Result<ZEstimate> {
    spec.validate()?;
    let cfg = LedgerConfig {
        order: spec.order,
        eta,
        mode: spec.mode,
    };
    let comps = match spec.source {
        SourceKind::Current if spec.first_order_current() => {
            let src = Source::Current { x0: x };
            src.validate(es)?;
            let fast = FirstOrderCurrent::new(es, ledger_modes(&src, es, &spec.mode), spec.params.q);
            vec![fast.component(es, x, eta, &spec.params)?]
        }
        SourceKind::Current => vec![z_component_streaming(&Source::Current { x0: x }, es, &cfg, x, &spec.params)?],
        SourceKind::ModeEnergy => (0..es.dim())
            .map(|k0| z_component_streaming(&Source::ModeEnergy { k0 }, es, &cfg, x, &spec.params))
            .collect::<Result<_>>()?,
    };
    Ok(ZEstimate::from_components(x, spec.params.q, comps))
}

/// `Z(x)` at every site where it is defined (all sites but the left edge for
/// the current). The first-order current path shares its mode sums.
pub fn z_profile(es: &EigenSystem, eta: f64, spec: &ZSpec) -> Result<Vec<(i64, f64)>> {
    spec.validate()?;
    let sites: Vec<i64> = match spec.source {
        SourceKind::Current => es.interval.sites().skip(1).collect(),
        SourceKind::ModeEnergy => es.interval.sites().collect(),
    };
    if spec.first_order_current() && matches!(spec.mode, LedgerMode::Exact { .. }) {
        let fast = FirstOrderCurrent::new(es, (0..es.dim()).collect(), spec.params.q);
        return sites
            .into_iter()
            .map(|x| Ok((x, ZEstimate::from_components(x, spec.params.q, vec![fast.component(es, x, eta, &spec.params)?]).value)))
            .collect();
    }
    sites.into_iter().map(|x| Ok((x, z_site(es, x, eta, spec)?.value))).collect()
}

/// Draws disorder for realization `i`, redrawing after near-resonances.
/// Returns the value and the number of redraws.
fn with_resampling<T>(
    config: &ModelConfig,
    interval: Interval,
    label: &str,
    i: usize,
    mut f: impl FnMut(&DisorderRealization) -> Result<T>,
) -> Result<(T, usize)> {
    let mut last = None;
    for r in 0..MAX_RESAMPLES {
        let stream = derive_stream(config.seed, &labels![label, i, r]);
        let real = sample_disorder(config, interval, stream)?;
        match f(&real) {
            Ok(v) => return Ok((v, r)),
            Err(e @ Error::NearResonance { .. }) => last = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last.expect("at least one attempt"))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZSamples {
    pub values: Vec<f64>,
    /// Total disorder redraws caused by near-resonances.
    pub resampled: usize,
}

/// `Z(site)` over `trials` independent realizations on `interval`.
pub fn sample_z(
    config: &ModelConfig,
    interval: Interval,
    site: i64,
    spec: &ZSpec,
    trials: usize,
    label: &str,
) -> Result<ZSamples> {
    spec.validate()?;
    let out: Vec<(f64, usize)> = (0..trials)
        .into_par_iter()
        .map(|i| {
            with_resampling(config, interval, label, i, |r| {
                let es = EigenSystem::of(r)?;
                Ok(z_site(&es, site, config.eta, spec)?.value)
            })
        })
        .collect::<Result<_>>()?;
    Ok(ZSamples {
        values: out.iter().map(|v| v.0).collect(),
        resampled: out.iter().map(|v| v.1).sum(),
    })
}

/// Empirical tail of a `Z` sample.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailReport {
    pub samples: usize,
    /// Thresholds `M`, log-spaced between the upper quantiles.
    pub thresholds: Vec<f64>,
    /// `P̂(Z > M)`.
    pub exceedance: Vec<f64>,
    pub counts: Vec<usize>,
    /// Fit of `ln P̂(Z > M)` against `ln M`.
    pub fit: Option<LinearFit>,
    /// `μ̂ = -slope`.
    pub exponent: f64,
    pub exponent_stderr: f64,
    /// Hill estimate from the top `hill_k` samples.
    pub hill: Option<(f64, f64)>,
    pub hill_k: usize,
}

/// Quantile range over which the exceedance curve is fitted.
pub const TAIL_QUANTILES: (f64, f64) = (0.8, 0.99);
pub const TAIL_POINTS: usize = 10;

pub fn tail_report(samples: &[f64]) -> Result<TailReport> {
    if samples.len() < 20 {
        return Err(Error::EmptyEnsemble);
    }
    let mut s = samples.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let quant = |p: f64| s[((s.len() - 1) as f64 * p).round() as usize];
    let (lo, hi) = (quant(TAIL_QUANTILES.0), quant(TAIL_QUANTILES.1));
    let thresholds = if lo > 0.0 && hi > lo {
        stats::log_spaced(lo, hi, TAIL_POINTS)
    } else {
        Vec::new()
    };
    let counts: Vec<usize> = thresholds
        .iter()
        .map(|&m| s.len() - s.partition_point(|&v| v <= m))
        .collect();
    let n = s.len();
    let exceedance = counts.iter().map(|&c| c as f64 / n as f64).collect();
    let fit = stats::cdf_loglog_slope(&thresholds, &counts, n);
    let (exponent, exponent_stderr) = fit.as_ref().map_or((f64::NAN, f64::NAN), |f| (-f.slope, f.slope_stderr));
    let hill_k = (n / 10).max(2);
    Ok(TailReport {
        samples: n,
        thresholds,
        exceedance,
        counts,
        fit,
        exponent,
        exponent_stderr,
        hill: stats::hill_estimator(samples, hill_k),
        hill_k,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalApproxRow {
    pub ell: i64,
    pub median: f64,
    pub mean: f64,
    /// Fraction of realizations with difference `<= C e^{-c ℓ}`.
    pub fraction_within: f64,
}

/// `|Z_I(x) - Z_{I(x,ℓ)}(x)|` on common disorder.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalApproxReport {
    pub site: i64,
    pub rows: Vec<LocalApproxRow>,
    /// `(C, c)` from a fit of `ln median` against `ℓ` (points with positive median).
    pub constant: f64,
    pub rate: f64,
    pub fit: Option<LinearFit>,
    /// `differences[r][j]` for realization `r`, `ℓ = ells[j]`.
    pub differences: Vec<Vec<f64>>,
    pub resampled: usize,
}

pub fn z_local_approx(
    config: &ModelConfig,
    interval: Interval,
    x: i64,
    ells: &[i64],
    spec: &ZSpec,
    trials: usize,
    label: &str,
) -> Result<LocalApproxReport> {
    spec.validate()?;
    if ells.iter().any(|&l| l < 1) {
        return Err(Error::InvalidParameter("ell must be >= 1".into()));
    }
    if !interval.contains(x) {
        return Err(Error::SiteOutOfRange {
            site: x,
            a: interval.a,
            b: interval.b,
        });
    }
    let out: Vec<(Vec<f64>, usize)> = (0..trials)
        .into_par_iter()
        .map(|i| {
            with_resampling(config, interval, label, i, |r| {
                let es = EigenSystem::of(r)?;
                let full = z_site(&es, x, config.eta, spec)?.value;
                ells.iter()
                    .map(|&l| {
                        let sub = r.restrict(interval.window(x, l)?)?;
                        let es_l = EigenSystem::of(&sub)?;
                        Ok((full - z_site(&es_l, x, config.eta, spec)?.value).abs())
                    })
                    .collect()
            })
        })
        .collect::<Result<_>>()?;
    let resampled = out.iter().map(|v| v.1).sum();
    let differences: Vec<Vec<f64>> = out.into_iter().map(|v| v.0).collect();
    let column = |j: usize| differences.iter().map(|d| d[j]).collect::<Vec<f64>>();
    let medians: Vec<f64> = (0..ells.len()).map(|j| stats::median(&column(j))).collect();
    let (fx, fy): (Vec<f64>, Vec<f64>) = ells
        .iter()
        .zip(&medians)
        .filter(|(_, m)| **m > 0.0)
        .map(|(&l, &m)| (l as f64, m.ln()))
        .unzip();
    let fit = (fx.len() >= 2).then(|| stats::linear_fit(&fx, &fy));
    let (constant, rate) = fit.as_ref().map_or((f64::NAN, f64::NAN), |f| (f.intercept.exp(), -f.slope));
    let rows = ells
        .iter()
        .enumerate()
        .map(|(j, &ell)| {
            let col = column(j);
            let bound = constant * (-rate * ell as f64).exp();
            let within = if bound.is_finite() {
                col.iter().filter(|&&d| d <= bound).count() as f64 / col.len().max(1) as f64
            } else {
                f64::NAN
            };
            LocalApproxRow {
                ell,
                median: medians[j],
                mean: stats::mean(&col),
                fraction_within: within,
            }
        })
        .collect();
    Ok(LocalApproxReport {
        site: x,
        rows,
        constant,
        rate,
        fit,
        differences,
        resampled,
    })
}

/// `cov(Z(x₀), Z(x₀ + d))` for `d = 0, 1, ...` from per-realization profiles
/// indexed by site offset.
pub fn covariance_by_distance(profiles: &[Vec<f64>], origin: usize) -> Vec<(usize, f64)> {
    let width = profiles.iter().map(|p| p.len()).min().unwrap_or(0);
    (origin..width)
        .map(|j| {
            let a: Vec<f64> = profiles.iter().map(|p| p[origin]).collect();
            let b: Vec<f64> = profiles.iter().map(|p| p[j]).collect();
            let (ma, mb) = (stats::mean(&a), stats::mean(&b));
            let cov = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (a.len().max(2) - 1) as f64;
            (j - origin, cov)
        })
        .collect()
}
