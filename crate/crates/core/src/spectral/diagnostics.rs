use serde::Serialize;

use super::EigenSystem;
use crate::error::{Error, Result};
use crate::model::Interval;

/// `N_W` such that `W(x) = N_W (1 + x²)` satisfies `Σ_{x∈I} 1/W(x) = 1`.
pub fn weight_normalization(interval: Interval) -> f64 {
    interval.sites().map(|x| 1.0 / (1.0 + (x * x) as f64)).sum()
}

/// Center of a mode together with the weight-threshold diagnostic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CenterInfo {
    pub center: i64,
    pub weight: f64,
    pub threshold: f64,
    pub satisfies_weight: bool,
}

/// `argmax_x |ψ(x)|` (first maximum wins) plus the check
/// `|ψ(x)|² ≥ 1/W(x)`, which is reported rather than enforced.
pub fn center_criterion(psi: &[f64], interval: Interval, norm: f64) -> Result<CenterInfo> {
    if psi.len() != interval.len() {
        return Err(Error::LengthMismatch {
            expected: interval.len(),
            got: psi.len(),
        });
    }
    let mut best = 0usize;
    for (i, v) in psi.iter().enumerate() {
        if v.abs() > psi[best].abs() {
            best = i;
        }
    }
    if psi[best] == 0.0 {
        return Err(Error::ZeroVector);
    }
    let center = interval.site(best);
    let weight = psi[best] * psi[best];
    let threshold = 1.0 / (norm * (1.0 + (center * center) as f64));
    Ok(CenterInfo {
        center,
        weight,
        threshold,
        satisfies_weight: weight >= threshold,
    })
}

pub fn localization_center(psi: &[f64], interval: Interval) -> Result<CenterInfo> {
    center_criterion(psi, interval, weight_normalization(interval))
}

/// `Q_I(x, y) = Σ_k |ψ_k(x) ψ_k(y)|`.
pub fn eigenfunction_correlator(es: &EigenSystem, x: i64, y: i64) -> Result<f64> {
    let i = es.interval.index(x)?;
    let j = es.interval.index(y)?;
    let n = es.dim();
    Ok((0..n)
        .map(|k| (es.vectors[k * n + i] * es.vectors[k * n + j]).abs())
        .sum())
}

/// `Q_I(x, y)` for every `y` in the interval, in one pass.
pub fn correlator_profile(es: &EigenSystem, x: i64) -> Result<Vec<f64>> {
    let i = es.interval.index(x)?;
    let n = es.dim();
    let mut out = vec![0.0; n];
    for k in 0..n {
        let row = es.psi(k);
        let a = row[i].abs();
        for (o, v) in out.iter_mut().zip(row) {
            *o += a * v.abs();
        }
    }
    Ok(out)
}

/// Smallest gap between distinct eigenvalues `ν_k²`.
pub fn min_level_spacing(nu_sq: &[f64]) -> Result<f64> {
    if nu_sq.len() < 2 {
        return Err(Error::TooFewEigenvalues {
            needed: 2,
            have: nu_sq.len(),
        });
    }
    let mut v = nu_sq.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    Ok(v.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min))
}

/// Smallest `A` with `|ψ_k(y)|² ≤ A (1 + (x_k - x)⁴) e^{-|y - x_k|/ξ}` for all
/// modes `k` and sites `y`. The maximum is taken in log space; the result is
/// `inf` if it overflows.
pub fn envelope_constant(es: &EigenSystem, x: i64, xi: f64) -> Result<f64> {
    if !(xi > 0.0) {
        return Err(Error::InvalidParameter(format!("xi = {xi} must be > 0")));
    }
    es.interval.index(x)?;
    let mut best = f64::NEG_INFINITY;
    for k in 0..es.dim() {
        let c = es.centers[k];
        let dc = (c - x) as f64;
        let poly = (1.0 + dc * dc * dc * dc).ln();
        for (i, v) in es.psi(k).iter().enumerate() {
            if *v == 0.0 {
                continue;
            }
            let y = es.interval.site(i);
            let r = (v * v).ln() - poly + ((y - c).abs() as f64) / xi;
            if r > best {
                best = r;
            }
        }
    }
    Ok(best.exp())
}
