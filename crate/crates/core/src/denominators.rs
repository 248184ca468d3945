//! Small denominators `Q = min |Σ_k σ_k ν_{t_k}|` over ordered tuples of
//! distinct modes, and Monte-Carlo estimates of their lower tail.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels;
use crate::model::{sample_disorder, Interval, ModelConfig};
use crate::rng::derive_stream;
use crate::spectral::{build_operator, eigenvalues, EigenSystem};
use crate::stats::{cdf_loglog_slope, log_spaced, LinearFit};

/// Default cap on the number of ordered tuples `n!/(n-m)!`.
pub const DEFAULT_TUPLE_CAP: u128 = 1_000_000_000_000;

/// Signs/multiplicities `σ_1..σ_m` of a denominator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<i32>", into = "Vec<i32>")]
pub struct SigmaPattern {
    coeffs: Vec<i32>,
}

impl SigmaPattern {
    pub fn new(coeffs: Vec<i32>) -> Result<Self> {
        let m = coeffs.len();
        if m < 2 || m % 2 != 0 {
            return Err(Error::InvalidPattern(format!("m = {m} must be even and >= 2")));
        }
        if let Some(c) = coeffs.iter().find(|&&c| c == 0 || c.unsigned_abs() as usize > m) {
            return Err(Error::InvalidPattern(format!(
                "coefficient {c} must be nonzero with |σ| <= m = {m}"
            )));
        }
        Ok(Self { coeffs })
    }

    pub fn m(&self) -> usize {
        self.coeffs.len()
    }

    pub fn coeffs(&self) -> &[i32] {
        &self.coeffs
    }

    pub fn negated(&self) -> Self {
        Self {
            coeffs: self.coeffs.iter().map(|c| -c).collect(),
        }
    }

    /// `"1;-1"` style rendering used in CSV output.
    pub fn label(&self) -> String {
        self.coeffs
            .iter()
            .map(|c| c.to_string())
            .collect::<Vec<_>>()
            .join(";")
    }
}

impl TryFrom<Vec<i32>> for SigmaPattern {
    type Error = Error;
    fn try_from(v: Vec<i32>) -> Result<Self> {
        SigmaPattern::new(v)
    }
}

impl From<SigmaPattern> for Vec<i32> {
    fn from(p: SigmaPattern) -> Self {
        p.coeffs
    }
}

/// `n!/(n-m)!`, saturating.
pub fn ordered_tuple_count(n: usize, m: usize) -> u128 {
    if m > n {
        return 0;
    }
    (0..m).fold(1u128, |acc, i| acc.saturating_mul((n - i) as u128))
}

/// Exact `Q` for the eigenfrequencies of `es`.
pub fn min_denominator(es: &EigenSystem, pattern: &SigmaPattern) -> Result<f64> {
    min_denominator_nu(&es.nu, pattern, DEFAULT_TUPLE_CAP)
}

/// Exact `Q` over the frequencies `nu` (any order), refusing when more than
/// `cap` ordered tuples would have to be considered.
pub fn min_denominator_nu(nu: &[f64], pattern: &SigmaPattern, cap: u128) -> Result<f64> {
    let n = nu.len();
    let m = pattern.m();
    if n < m {
        return Err(Error::TooFewEigenvalues { needed: m, have: n });
    }
    let count = ordered_tuple_count(n, m);
    if count > cap {
        return Err(Error::BudgetExceeded { count, cap });
    }
    let mut sorted = nu.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let s = pattern.coeffs();
    if m == 2 {
        Ok(min_pair(&sorted, s[0] as f64, s[1] as f64))
    } else {
        Ok(meet_in_the_middle(&sorted, s))
    }
}

/// `min_{i≠j} |s1 ν_i + s2 ν_j|`: for each `i` the best partner is a
/// neighbour of `-s1 ν_i / s2` in the sorted list.
fn min_pair(nu: &[f64], s1: f64, s2: f64) -> f64 {
    let mut best = f64::INFINITY;
    for (i, &vi) in nu.iter().enumerate() {
        let target = -s1 * vi / s2;
        let pos = nu.partition_point(|&v| v < target);
        let mut j = pos;
        while j < nu.len() {
            if j != i {
                best = best.min((s1 * vi + s2 * nu[j]).abs());
                break;
            }
            j += 1;
        }
        let mut j = pos;
        while j > 0 {
            j -= 1;
            if j != i {
                best = best.min((s1 * vi + s2 * nu[j]).abs());
                break;
            }
        }
    }
    best
}

/// Ordered tuples of `h` distinct indices with their weighted sums, sorted by sum.
fn half_tuples(nu: &[f64], s: &[i32]) -> (Vec<f64>, Vec<u32>) {
    let n = nu.len();
    let h = s.len();
    let mut sums = Vec::new();
    let mut idx = Vec::new();
    let mut cur = vec![0u32; h];
    fn rec(
        depth: usize,
        acc: f64,
        nu: &[f64],
        s: &[i32],
        cur: &mut Vec<u32>,
        out: &mut Vec<(f64, Vec<u32>)>,
    ) {
        if depth == s.len() {
            out.push((acc, cur.clone()));
            return;
        }
        for i in 0..nu.len() as u32 {
            if cur[..depth].contains(&i) {
                continue;
            }
            cur[depth] = i;
            rec(depth + 1, acc + s[depth] as f64 * nu[i as usize], nu, s, cur, out);
        }
    }
    let mut all = Vec::with_capacity(ordered_tuple_count(n, h) as usize);
    rec(0, 0.0, nu, s, &mut cur, &mut all);
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    for (v, t) in all {
        sums.push(v);
        idx.extend(t);
    }
    (sums, idx)
}

fn meet_in_the_middle(nu: &[f64], s: &[i32]) -> f64 {
    let h = s.len() / 2;
    let (left_sums, left_idx) = half_tuples(nu, &s[..h]);
    let hr = s.len() - h;
    let (right_sums, right_idx) = half_tuples(nu, &s[h..]);
    let disjoint = |a: &[u32], b: &[u32]| a.iter().all(|x| !b.contains(x));
    let mut best = f64::INFINITY;
    for (li, &ls) in left_sums.iter().enumerate() {
        let lt = &left_idx[li * h..(li + 1) * h];
        let target = -ls;
        let pos = right_sums.partition_point(|&v| v < target);
        let mut j = pos;
        while j < right_sums.len() {
            let d = (ls + right_sums[j]).abs();
            if d >= best {
                break;
            }
            if disjoint(lt, &right_idx[j * hr..(j + 1) * hr]) {
                best = d;
                break;
            }
            j += 1;
        }
        let mut j = pos;
        while j > 0 {
            j -= 1;
            let d = (ls + right_sums[j]).abs();
            if d >= best {
                break;
            }
            if disjoint(lt, &right_idx[j * hr..(j + 1) * hr]) {
                best = d;
                break;
            }
        }
    }
    best
}

/// Empirical lower tail of `Q` on a threshold grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailEstimate {
    pub epsilons: Vec<f64>,
    pub probabilities: Vec<f64>,
    pub stderrs: Vec<f64>,
    pub counts: Vec<usize>,
    pub trials: usize,
    pub interval_size: usize,
    pub pattern: SigmaPattern,
    /// Smallest `Q` seen over all trials.
    pub min_observed: f64,
}

impl TailEstimate {
    /// Builds the estimate from per-trial samples of `Q`.
    pub fn from_samples(samples: &[f64], epsilons: &[f64], interval_size: usize, pattern: SigmaPattern) -> Self {
        let cdf = crate::stats::empirical_cdf(samples, epsilons);
        Self {
            epsilons: epsilons.to_vec(),
            probabilities: cdf.iter().map(|c| c.0).collect(),
            stderrs: cdf.iter().map(|c| c.1).collect(),
            counts: cdf.iter().map(|c| c.2).collect(),
            trials: samples.len(),
            interval_size,
            pattern,
            min_observed: samples.iter().cloned().fold(f64::INFINITY, f64::min),
        }
    }

    /// Weighted log-log slope of `P(Q ≤ ε)` in `ε`.
    pub fn loglog_slope(&self) -> Option<LinearFit> {
        cdf_loglog_slope(&self.epsilons, &self.counts, self.trials)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "epsilon",
            "p_hat",
            "stderr",
            "trials",
            "interval_size",
            "m",
            "sigma_pattern",
        ])?;
        let label = self.pattern.label();
        for i in 0..self.epsilons.len() {
            w.write_record([
                format!("{:e}", self.epsilons[i]),
                format!("{:e}", self.probabilities[i]),
                format!("{:e}", self.stderrs[i]),
                self.trials.to_string(),
                self.interval_size.to_string(),
                self.pattern.m().to_string(),
                label.clone(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// The default threshold grid: 13 log-spaced points on `[1e-6, 1e-2]`.
pub fn default_epsilons() -> Vec<f64> {
    log_spaced(1e-6, 1e-2, 13)
}

/// `Q` for `trials` independent realizations on `interval`. Trial `i` draws
/// its disorder from stream `(seed, "denominator", i)`, so results do not
/// depend on scheduling.
pub fn sample_min_denominators(
    config: &ModelConfig,
    pattern: &SigmaPattern,
    interval: Interval,
    trials: usize,
    cap: u128,
) -> Result<Vec<f64>> {
    let n = interval.len();
    if n < pattern.m() {
        return Err(Error::TooFewEigenvalues {
            needed: pattern.m(),
            have: n,
        });
    }
    let count = ordered_tuple_count(n, pattern.m());
    if count > cap {
        return Err(Error::BudgetExceeded { count, cap });
    }
    (0..trials)
        .into_par_iter()
        .map(|i| {
            let stream = derive_stream(config.seed, &labels!["denominator", i]);
            let r = sample_disorder(config, interval, stream)?;
            let nu: Vec<f64> = eigenvalues(&build_operator(&r))?
                .into_iter()
                .map(f64::sqrt)
                .collect();
            min_denominator_nu(&nu, pattern, cap)
        })
        .collect()
}

pub fn estimate_tail(
    config: &ModelConfig,
    pattern: &SigmaPattern,
    interval: Interval,
    epsilons: &[f64],
    trials: usize,
    cap: u128,
) -> Result<TailEstimate> {
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be >= 1".into()));
    }
    if epsilons.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidParameter("epsilons must be sorted".into()));
    }
    let q = sample_min_denominators(config, pattern, interval, trials, cap)?;
    Ok(TailEstimate::from_samples(&q, epsilons, interval.len(), pattern.clone()))
}

/// Outcome of comparing an estimate with `C |I|^m ε^{1/(m+1)}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    /// Smallest `C` such that `p + 2 se ≤ C |I|^m ε^{1/(m+1)}` at every grid point.
    pub constant: f64,
    pub exponent: f64,
    pub slope: Option<LinearFit>,
    pub pass: bool,
}

/// Only grid points with `0 < ε ≤ 1/|I|`, the range where the bound is
/// claimed, enter. `pass` requires a finite envelope constant and, when a
/// log-log slope can be fitted, that the slope is not significantly below
/// `1/(m+1)` (two standard errors).
pub fn verify_bound(estimate: &TailEstimate, pattern: &SigmaPattern) -> BoundReport {
    let m = pattern.m() as f64;
    let exponent = 1.0 / (m + 1.0);
    let scale = (estimate.interval_size as f64).powf(m);
    let eps_max = 1.0 / estimate.interval_size as f64;
    let mut constant = 0.0f64;
    let (mut eps, mut counts) = (Vec::new(), Vec::new());
    for i in 0..estimate.epsilons.len() {
        let e = estimate.epsilons[i];
        if !(e > 0.0 && e <= eps_max) {
            continue;
        }
        eps.push(e);
        counts.push(estimate.counts[i]);
        let p = estimate.probabilities[i] + 2.0 * estimate.stderrs[i];
        if p > 0.0 {
            constant = constant.max(p / (scale * e.powf(exponent)));
        }
    }
    let slope = cdf_loglog_slope(&eps, &counts, estimate.trials);
    let slope_ok = match &slope {
        Some(f) => f.slope + 2.0 * f.slope_stderr.max(0.0) >= exponent,
        None => true,
    };
    BoundReport {
        constant,
        exponent,
        slope,
        pass: constant.is_finite() && slope_ok,
    }
}
