//! The Anderson operator `V - eta Δ` on an interval and its eigensystem.
//!
//! Eigenvectors are stored row-major, one row per mode and one column per
//! site, with the sign of every row fixed so that its largest-magnitude entry
//! is positive (ties resolved towards the smallest site).

mod diagnostics;
mod export;
mod matching;
mod tridiag;

pub use diagnostics::{
    center_criterion, correlator_profile, eigenfunction_correlator, envelope_constant,
    localization_center, min_level_spacing, weight_normalization, CenterInfo,
};
pub use export::{read_eigenvectors, write_eigensystem_csv, write_eigenvectors};
pub use matching::{match_eigenpairs, MatchReport, MatchedPair, UnmatchedPair};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DisorderRealization, Interval};

/// Symmetric tridiagonal matrix `diag(ω² + η·deg) - η(shift + shift^T)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TridiagonalOperator {
    pub interval: Interval,
    pub diag: Vec<f64>,
    pub offdiag: Vec<f64>,
}

impl TridiagonalOperator {
    pub fn new(interval: Interval, diag: Vec<f64>, offdiag: Vec<f64>) -> Result<Self> {
        if diag.len() != interval.len() {
            return Err(Error::LengthMismatch {
                expected: interval.len(),
                got: diag.len(),
            });
        }
        if offdiag.len() + 1 != diag.len() {
            return Err(Error::LengthMismatch {
                expected: diag.len() - 1,
                got: offdiag.len(),
            });
        }
        Ok(Self {
            interval,
            diag,
            offdiag,
        })
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut out = vec![0.0; n];
        for i in 0..n {
            let mut s = self.diag[i] * v[i];
            if i > 0 {
                s += self.offdiag[i - 1] * v[i - 1];
            }
            if i + 1 < n {
                s += self.offdiag[i] * v[i + 1];
            }
            out[i] = s;
        }
        out
    }

    pub fn trace(&self) -> f64 {
        self.diag.iter().sum()
    }

    /// Gershgorin-type bounds `[min ω², max ω² + 4η]` recovered from the entries.
    pub fn spectral_bounds(&self) -> (f64, f64) {
        let n = self.dim();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let left = if i > 0 { self.offdiag[i - 1].abs() } else { 0.0 };
            let right = if i + 1 < n { self.offdiag[i].abs() } else { 0.0 };
            lo = lo.min(self.diag[i] - left - right);
            hi = hi.max(self.diag[i] + left + right);
        }
        (lo, hi)
    }
}

/// Builds `V - ηΔ` with free boundary conditions.
pub fn build_operator(realization: &DisorderRealization) -> TridiagonalOperator {
    let n = realization.len();
    let eta = realization.eta;
    let diag = (0..n)
        .map(|i| {
            let degree = usize::from(i > 0) + usize::from(i + 1 < n);
            realization.omega_sq[i] + eta * degree as f64
        })
        .collect();
    let offdiag = vec![-eta; n.saturating_sub(1)];
    TridiagonalOperator {
        interval: realization.interval,
        diag,
        offdiag,
    }
}

/// Eigenvalues `ν_k²` and gauge-fixed eigenvectors `ψ_k` of the Anderson operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenSystem {
    pub interval: Interval,
    /// Ascending `ν_k²`.
    pub nu_sq: Vec<f64>,
    /// `ν_k = sqrt(ν_k²)`.
    pub nu: Vec<f64>,
    /// Row `k` is `ψ_k`, length `n` per row.
    pub vectors: Vec<f64>,
    /// Localization center (absolute site) of each mode.
    pub centers: Vec<i64>,
    /// Whether `|ψ_k(x_k)|² ≥ 1/W(x_k)` holds at the center.
    pub center_ok: Vec<bool>,
}

impl EigenSystem {
    pub fn of(realization: &DisorderRealization) -> Result<Self> {
        diagonalize(&build_operator(realization))
    }

    pub fn dim(&self) -> usize {
        self.nu_sq.len()
    }

    pub fn psi(&self, k: usize) -> &[f64] {
        let n = self.dim();
        &self.vectors[k * n..(k + 1) * n]
    }

    /// `ψ_k(x)` at absolute site `x`.
    pub fn psi_at(&self, k: usize, x: i64) -> Result<f64> {
        Ok(self.psi(k)[self.interval.index(x)?])
    }

    /// `[v, ψ_k]` for every mode.
    pub fn project(&self, v: &[f64]) -> Vec<f64> {
        (0..self.dim())
            .map(|k| self.psi(k).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `Σ_k c_k ψ_k`.
    pub fn reconstruct(&self, coeffs: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut out = vec![0.0; n];
        for (k, &c) in coeffs.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            for (o, p) in out.iter_mut().zip(self.psi(k)) {
                *o += c * p;
            }
        }
        out
    }

    /// Copy with `ψ_k → -ψ_k` for every `k` where `flip[k]`. The stored gauge
    /// is no longer canonical afterwards; used to test gauge invariance.
    pub fn with_flipped_signs(&self, flip: &[bool]) -> Self {
        let mut out = self.clone();
        let n = self.dim();
        for (k, &f) in flip.iter().enumerate() {
            if f {
                for v in &mut out.vectors[k * n..(k + 1) * n] {
                    *v = -*v;
                }
            }
        }
        out
    }

    /// Modes sorted by center, nearest to `x` first.
    pub fn modes_near(&self, x: i64, radius: i64) -> Vec<usize> {
        let mut ks: Vec<usize> = (0..self.dim())
            .filter(|&k| (self.centers[k] - x).abs() <= radius)
            .collect();
        ks.sort_by_key(|&k| ((self.centers[k] - x).abs(), k));
        ks
    }
}

/// Full eigendecomposition: eigenvalues ascending, eigenvectors gauge-fixed.
pub fn diagonalize(op: &TridiagonalOperator) -> Result<EigenSystem> {
    let n = op.dim();
    let mut d = op.diag.clone();
    let mut z = vec![0.0; n * n];
    for i in 0..n {
        z[i * n + i] = 1.0;
    }
    tridiag::ql_implicit(&mut d, &op.offdiag, Some(&mut z))?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[i].total_cmp(&d[j]).then(i.cmp(&j)));
    let mut vectors = Vec::with_capacity(n * n);
    let mut nu_sq = Vec::with_capacity(n);
    for &k in &order {
        nu_sq.push(d[k]);
        let row = &z[k * n..(k + 1) * n];
        let sign = gauge_sign(row);
        vectors.extend(row.iter().map(|v| sign * v));
    }
    if let Some(&bad) = nu_sq.iter().find(|v| !(**v > 0.0)) {
        return Err(Error::InvalidParameter(format!(
            "operator is not positive definite (eigenvalue {bad})"
        )));
    }
    let nu = nu_sq.iter().map(|v| v.sqrt()).collect();
    let norm = weight_normalization(op.interval);
    let mut centers = Vec::with_capacity(n);
    let mut center_ok = Vec::with_capacity(n);
    for k in 0..n {
        let row = &vectors[k * n..(k + 1) * n];
        let info = center_criterion(row, op.interval, norm)?;
        centers.push(info.center);
        center_ok.push(info.satisfies_weight);
    }
    Ok(EigenSystem {
        interval: op.interval,
        nu_sq,
        nu,
        vectors,
        centers,
        center_ok,
    })
}

/// Eigenvalues only, ascending. `O(n²)`.
pub fn eigenvalues(op: &TridiagonalOperator) -> Result<Vec<f64>> {
    let mut d = op.diag.clone();
    tridiag::ql_implicit(&mut d, &op.offdiag, None)?;
    d.sort_by(|a, b| a.total_cmp(b));
    Ok(d)
}

fn gauge_sign(row: &[f64]) -> f64 {
    let mut best = 0usize;
    for (i, v) in row.iter().enumerate() {
        if v.abs() > row[best].abs() {
            best = i;
        }
    }
    if row[best] < 0.0 {
        -1.0
    } else {
        1.0
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::labels;
    use crate::model::{sample_disorder, DisorderLaw, ModelConfig};
    use crate::rng::derive_stream;
    use proptest::prelude::*;

    pub(crate) fn random_system(half: i64, seed: u64) -> (DisorderRealization, EigenSystem) {
        let cfg = ModelConfig::new(half, 1.0, 0.0, DisorderLaw::default(), seed);
        let r = sample_disorder(&cfg, cfg.lattice(), derive_stream(seed, &labels!["spectral-test"])).unwrap();
        let es = EigenSystem::of(&r).unwrap();
        (r, es)
    }

    #[test]
    fn two_site_operator() {
        let r = DisorderRealization::new(Interval::new(0, 1).unwrap(), vec![1.0, 1.0], 1.0).unwrap();
        let op = build_operator(&r);
        assert_eq!(op.diag, vec![2.0, 2.0]);
        assert_eq!(op.offdiag, vec![-1.0]);
        let es = diagonalize(&op).unwrap();
        assert!((es.nu_sq[0] - 1.0).abs() < 1e-14 && (es.nu_sq[1] - 3.0).abs() < 1e-14);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((es.psi(0)[0] - h).abs() < 1e-14 && (es.psi(0)[1] - h).abs() < 1e-14);
        // gauge: largest magnitude positive, tie -> first site
        assert!((es.psi(1)[0] - h).abs() < 1e-14 && (es.psi(1)[1] + h).abs() < 1e-14);
    }

    #[test]
    fn single_site_operator() {
        let r = DisorderRealization::new(Interval::new(4, 4).unwrap(), vec![1.7], 1.0).unwrap();
        let op = build_operator(&r);
        assert_eq!(op.diag, vec![1.7]);
        assert!(op.offdiag.is_empty());
        let es = diagonalize(&op).unwrap();
        assert_eq!(es.nu_sq, vec![1.7]);
        assert_eq!(es.psi(0), &[1.0]);
        assert_eq!(es.centers, vec![4]);
    }

    #[test]
    fn constant_vector_sees_only_potential() {
        let (r, _) = random_system(10, 4);
        let op = build_operator(&r);
        let out = op.apply(&vec![2.0; r.len()]);
        for (o, w) in out.iter().zip(&r.omega_sq) {
            assert!((o - 2.0 * w).abs() < 1e-13);
        }
    }

    #[test]
    fn operator_matches_ghost_laplacian() {
        let (r, _) = random_system(6, 8);
        let op = build_operator(&r);
        let n = r.len();
        let f: Vec<f64> = (0..n).map(|i| ((i * 7 + 3) % 5) as f64 - 2.0).collect();
        let out = op.apply(&f);
        for i in 0..n {
            let left = if i > 0 { f[i - 1] } else { f[i] };
            let right = if i + 1 < n { f[i + 1] } else { f[i] };
            let expect = r.omega_sq[i] * f[i] - r.eta * (right - 2.0 * f[i] + left);
            assert!((out[i] - expect).abs() < 1e-13);
        }
    }

    #[test]
    fn invariants_on_random_systems() {
        for seed in 0..20 {
            let (r, es) = random_system(25, seed);
            let op = build_operator(&r);
            let n = es.dim();
            let (lo, hi) = (
                r.omega_sq.iter().cloned().fold(f64::INFINITY, f64::min),
                r.omega_sq.iter().cloned().fold(0.0, f64::max) + 4.0 * r.eta,
            );
            assert!(es.nu_sq.windows(2).all(|w| w[0] <= w[1]));
            assert!(es.nu_sq.iter().all(|&v| v >= lo - 1e-12 && v <= hi + 1e-12));
            let tr: f64 = es.nu_sq.iter().sum();
            assert!((tr - op.trace()).abs() <= 1e-9 * op.trace());
            for k in 0..n {
                let hv = op.apply(es.psi(k));
                let res: f64 = hv
                    .iter()
                    .zip(es.psi(k))
                    .map(|(a, b)| (a - es.nu_sq[k] * b).powi(2))
                    .sum::<f64>()
                    .sqrt();
                assert!(res <= 1e-10 * hi, "residual {res}");
                for l in 0..=k {
                    let dot: f64 = es.psi(k).iter().zip(es.psi(l)).map(|(a, b)| a * b).sum();
                    let expect = if k == l { 1.0 } else { 0.0 };
                    assert!((dot - expect).abs() < 1e-10);
                }
            }
            // completeness
            for i in 0..n {
                for j in 0..n {
                    let s: f64 = (0..n).map(|k| es.psi(k)[i] * es.psi(k)[j]).sum();
                    assert!((s - if i == j { 1.0 } else { 0.0 }).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn matches_dense_oracle() {
        for seed in 0..5 {
            let (r, es) = random_system(50, 1000 + seed);
            let op = build_operator(&r);
            let n = op.dim();
            let m = nalgebra::DMatrix::from_fn(n, n, |i, j| {
                if i == j {
                    op.diag[i]
                } else if i + 1 == j {
                    op.offdiag[i]
                } else if j + 1 == i {
                    op.offdiag[j]
                } else {
                    0.0
                }
            });
            let mut dense: Vec<f64> = m.symmetric_eigen().eigenvalues.iter().cloned().collect();
            dense.sort_by(|a, b| a.total_cmp(b));
            for (a, b) in dense.iter().zip(&es.nu_sq) {
                assert!((a - b).abs() <= 1e-9);
            }
            let fast = eigenvalues(&op).unwrap();
            for (a, b) in fast.iter().zip(&es.nu_sq) {
                assert!((a - b).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn projection_roundtrip() {
        let (_, es) = random_system(8, 3);
        let v: Vec<f64> = (0..es.dim()).map(|i| (i as f64).sin()).collect();
        let back = es.reconstruct(&es.project(&v));
        for (a, b) in v.iter().zip(&back) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn gauge_is_canonical(seed in 0u64..500) {
            let (_, es) = random_system(5, seed);
            for k in 0..es.dim() {
                let row = es.psi(k);
                let imax = row.iter().enumerate().fold(0, |b, (i, v)| if v.abs() > row[b].abs() { i } else { b });
                prop_assert!(row[imax] > 0.0);
            }
        }
    }
}
