//! Complex mode coordinates `a^±_k` and the quartic coupling tensor.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::ChainState;
use crate::spectral::EigenSystem;

/// `a⁺_k = (ν_k^{1/2} [q,ψ_k] - i ν_k^{-1/2} [p,ψ_k]) / √2` for every mode;
/// `a⁻_k` is the complex conjugate.
pub fn to_modes(state: &ChainState, es: &EigenSystem) -> Result<Vec<Complex64>> {
    if state.len() != es.dim() {
        return Err(Error::LengthMismatch {
            expected: es.dim(),
            got: state.len(),
        });
    }
    let c = es.project(&state.q);
    let s = es.project(&state.p);
    Ok((0..es.dim())
        .map(|k| {
            let r = es.nu[k].sqrt();
            Complex64::new(r * c[k], -s[k] / r) * std::f64::consts::FRAC_1_SQRT_2
        })
        .collect())
}

/// Inverse of [`to_modes`].
pub fn from_modes(a_plus: &[Complex64], es: &EigenSystem) -> Result<ChainState> {
    if a_plus.len() != es.dim() {
        return Err(Error::LengthMismatch {
            expected: es.dim(),
            got: a_plus.len(),
        });
    }
    let sq2 = std::f64::consts::SQRT_2;
    let c: Vec<f64> = a_plus
        .iter()
        .zip(&es.nu)
        .map(|(a, nu)| sq2 * a.re / nu.sqrt())
        .collect();
    let s: Vec<f64> = a_plus
        .iter()
        .zip(&es.nu)
        .map(|(a, nu)| -sq2 * nu.sqrt() * a.im)
        .collect();
    Ok(ChainState {
        q: es.reconstruct(&c),
        p: es.reconstruct(&s),
        t: 0.0,
    })
}

/// `Ĥ_an(k₁..k₄) = Σ_x ψ_{k₁}ψ_{k₂}ψ_{k₃}ψ_{k₄}(x) / (16 (ν_{k₁}ν_{k₂}ν_{k₃}ν_{k₄})^{1/2})`.
pub fn anharmonic_coefficient(es: &EigenSystem, k: [usize; 4]) -> f64 {
    let n = es.dim();
    let mut s = 0.0;
    for x in 0..n {
        s += es.vectors[k[0] * n + x] * es.vectors[k[1] * n + x] * es.vectors[k[2] * n + x] * es.vectors[k[3] * n + x];
    }
    s / (16.0 * (es.nu[k[0]] * es.nu[k[1]] * es.nu[k[2]] * es.nu[k[3]]).sqrt())
}

/// Dense symmetric tensor `Ĥ_an` over a subset of modes. Each unordered
/// quadruple is computed once and copied to its permutations.
#[derive(Debug, Clone)]
pub struct AnharmonicTensor {
    /// Global mode index of each local slot.
    pub modes: Vec<usize>,
    values: Vec<f64>,
}

impl AnharmonicTensor {
    pub fn new(es: &EigenSystem, modes: Vec<usize>) -> Self {
        let m = modes.len();
        let n = es.dim();
        let mut values = vec![0.0; m * m * m * m];
        // pair products ψ_a ψ_b restricted to the sites, reused across quadruples
        let mut pair = vec![0.0; n];
        for a in 0..m {
            for b in a..m {
                let (pa, pb) = (es.psi(modes[a]), es.psi(modes[b]));
                for x in 0..n {
                    pair[x] = pa[x] * pb[x];
                }
                for c in b..m {
                    let pc = es.psi(modes[c]);
                    for d in c..m {
                        let pd = es.psi(modes[d]);
                        let mut s = 0.0;
                        for x in 0..n {
                            s += pair[x] * pc[x] * pd[x];
                        }
                        let v = s
                            / (16.0
                                * (es.nu[modes[a]] * es.nu[modes[b]] * es.nu[modes[c]] * es.nu[modes[d]])
                                    .sqrt());
                        for p in permutations([a, b, c, d]) {
                            values[((p[0] * m + p[1]) * m + p[2]) * m + p[3]] = v;
                        }
                    }
                }
            }
        }
        Self { modes, values }
    }

    pub fn full(es: &EigenSystem) -> Self {
        Self::new(es, (0..es.dim()).collect())
    }

    pub fn size(&self) -> usize {
        self.modes.len()
    }

    /// Entry at local slots.
    #[inline]
    pub fn get(&self, a: usize, b: usize, c: usize, d: usize) -> f64 {
        let m = self.modes.len();
        self.values[((a * m + b) * m + c) * m + d]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

fn permutations(v: [usize; 4]) -> impl Iterator<Item = [usize; 4]> {
    const P: [[usize; 4]; 24] = [
        [0, 1, 2, 3], [0, 1, 3, 2], [0, 2, 1, 3], [0, 2, 3, 1], [0, 3, 1, 2], [0, 3, 2, 1],
        [1, 0, 2, 3], [1, 0, 3, 2], [1, 2, 0, 3], [1, 2, 3, 0], [1, 3, 0, 2], [1, 3, 2, 0],
        [2, 0, 1, 3], [2, 0, 3, 1], [2, 1, 0, 3], [2, 1, 3, 0], [2, 3, 0, 1], [2, 3, 1, 0],
        [3, 0, 1, 2], [3, 0, 2, 1], [3, 1, 0, 2], [3, 1, 2, 0], [3, 2, 0, 1], [3, 2, 1, 0],
    ];
    P.into_iter().map(move |p| [v[p[0]], v[p[1]], v[p[2]], v[p[3]]])
}
