//! Polynomials in the mode variables with merged, canonically keyed monomials.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::modes::to_modes;
use crate::error::{Error, Result};
use crate::model::ChainState;
use crate::spectral::EigenSystem;

/// Relative tolerance below which merged coefficients are dropped.
pub const PRUNE_TOL: f64 = 1e-14;

/// Sign `σ` of a mode factor `a^σ_k`.
pub type Sign = i8;

#[inline]
pub(crate) fn code(k: usize, sigma: Sign) -> u32 {
    2 * k as u32 + (sigma > 0) as u32
}

#[inline]
pub(crate) fn decode(c: u32) -> (usize, Sign) {
    ((c >> 1) as usize, if c & 1 == 1 { 1 } else { -1 })
}

/// Product of factors `a^σ_k`, stored sorted by `(k, σ)` with `-` before `+`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct ModeMonomial(Vec<u32>);

impl ModeMonomial {
    pub fn new(factors: &[(usize, Sign)]) -> Self {
        Self::from_codes(factors.iter().map(|&(k, s)| code(k, s)).collect())
    }

    pub(crate) fn from_codes(mut codes: Vec<u32>) -> Self {
        codes.sort_unstable();
        Self(codes)
    }

    pub(crate) fn codes(&self) -> &[u32] {
        &self.0
    }

    pub fn degree(&self) -> usize {
        self.0.len()
    }

    pub fn factors(&self) -> impl Iterator<Item = (usize, Sign)> + '_ {
        self.0.iter().map(|&c| decode(c))
    }

    /// `Δ(k, σ) = Σ_j σ_j ν_{k_j}`.
    pub fn denominator(&self, nu: &[f64]) -> f64 {
        self.factors().map(|(k, s)| s as f64 * nu[k]).sum()
    }

    /// Whether the factors can be exhausted by pairs with equal mode and
    /// opposite sign (the monomial then Poisson-commutes with `H_har`).
    pub fn is_pairable(&self) -> bool {
        is_pairable_codes(&self.0)
    }

    /// Image under `σ → -σ`.
    pub fn flipped(&self) -> Self {
        Self::from_codes(self.0.iter().map(|c| c ^ 1).collect())
    }

    /// Number of distinct orderings of the factor multiset.
    pub fn orderings(&self) -> u64 {
        let mut n = 1u64;
        let mut run = 0u64;
        for (i, c) in self.0.iter().enumerate() {
            run = if i > 0 && self.0[i - 1] == *c { run + 1 } else { 1 };
            n = n * (i as u64 + 1) / run;
        }
        n
    }

    pub fn to_pairs(&self) -> Vec<(usize, Sign)> {
        self.factors().collect()
    }
}

impl fmt::Display for ModeMonomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "1");
        }
        for (i, (k, s)) in self.factors().enumerate() {
            if i > 0 {
                write!(f, "*")?;
            }
            write!(f, "a{}{}", if s > 0 { '+' } else { '-' }, k)?;
        }
        Ok(())
    }
}

/// Pairability test on an arbitrary (unsorted) code list.
pub(crate) fn is_pairable_codes(codes: &[u32]) -> bool {
    if codes.len() % 2 == 1 {
        return false;
    }
    let mut buf: Vec<u32> = codes.to_vec();
    buf.sort_unstable();
    let mut i = 0;
    while i < buf.len() {
        let k = buf[i] >> 1;
        let mut balance = 0i32;
        while i < buf.len() && buf[i] >> 1 == k {
            balance += if buf[i] & 1 == 1 { 1 } else { -1 };
            i += 1;
        }
        if balance != 0 {
            return false;
        }
    }
    true
}

/// Finite sum of monomials with complex coefficients. Keys are canonical, so
/// every stored coefficient is the merged total of its monomial.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModePolynomial {
    pub terms: BTreeMap<ModeMonomial, Complex64>,
}

impl ModePolynomial {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: Complex64) -> Self {
        let mut p = Self::zero();
        p.add_term(ModeMonomial::default(), c);
        p
    }

    pub fn monomial(m: ModeMonomial, c: Complex64) -> Self {
        let mut p = Self::zero();
        p.add_term(m, c);
        p
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn add_term(&mut self, m: ModeMonomial, c: Complex64) {
        *self.terms.entry(m).or_insert(Complex64::new(0.0, 0.0)) += c;
    }

    pub fn coefficient(&self, m: &ModeMonomial) -> Complex64 {
        self.terms.get(m).copied().unwrap_or_default()
    }

    pub fn max_abs(&self) -> f64 {
        self.terms.values().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Drops coefficients below `PRUNE_TOL` of the largest one.
    pub fn prune(&mut self) {
        let cut = PRUNE_TOL * self.max_abs();
        self.terms.retain(|_, c| c.norm() > cut);
    }

    /// Removes pairable monomials.
    pub fn drop_pairable(&mut self) {
        self.terms.retain(|m, _| !m.is_pairable());
    }

    pub fn scaled(&self, s: Complex64) -> Self {
        Self {
            terms: self.terms.iter().map(|(m, c)| (m.clone(), c * s)).collect(),
        }
    }

    pub fn add_scaled(&mut self, other: &ModePolynomial, s: Complex64) {
        for (m, c) in &other.terms {
            self.add_term(m.clone(), c * s);
        }
    }

    /// Distinct degrees present.
    pub fn degrees(&self) -> Vec<usize> {
        let mut d: Vec<usize> = self.terms.keys().map(|m| m.degree()).collect();
        d.sort_unstable();
        d.dedup();
        d
    }

    /// Largest `|c(σ→-σ) - parity·c|` relative to `max_abs`; `parity = -1`
    /// tests antisymmetry, `+1` symmetry.
    pub fn sigma_parity_defect(&self, parity: f64) -> f64 {
        let scale = self.max_abs();
        if scale == 0.0 {
            return 0.0;
        }
        self.terms
            .iter()
            .map(|(m, c)| (self.coefficient(&m.flipped()) - c * parity).norm())
            .fold(0.0, f64::max)
            / scale
    }

    /// Value at mode coordinates `a⁺` (with `a⁻ = conj(a⁺)`).
    pub fn evaluate_modes(&self, a_plus: &[Complex64]) -> Complex64 {
        let mut total = Complex64::new(0.0, 0.0);
        for (m, c) in &self.terms {
            let mut v = *c;
            for &cd in m.codes() {
                v *= mode_value(a_plus, cd);
            }
            total += v;
        }
        total
    }

    /// Value at a real phase point, with the reality invariant enforced to
    /// `1e-10` of the term magnitude scale.
    pub fn evaluate(&self, state: &ChainState, es: &EigenSystem) -> Result<f64> {
        let a = to_modes(state, es)?;
        let (v, scale) = self.evaluate_with_scale(&a);
        check_value(v, scale, state.t)
    }

    fn evaluate_with_scale(&self, a_plus: &[Complex64]) -> (Complex64, f64) {
        let mut total = Complex64::new(0.0, 0.0);
        let mut scale = 0.0;
        for (m, c) in &self.terms {
            let mut v = *c;
            for &cd in m.codes() {
                v *= mode_value(a_plus, cd);
            }
            scale += v.norm();
            total += v;
        }
        (total, scale)
    }

    /// Partial derivatives `(∂/∂a⁺_k, ∂/∂a⁻_k)` at `a⁺`.
    pub fn mode_gradient(&self, a_plus: &[Complex64]) -> (Vec<Complex64>, Vec<Complex64>) {
        let n = a_plus.len();
        let zero = Complex64::new(0.0, 0.0);
        let (mut dp, mut dm) = (vec![zero; n], vec![zero; n]);
        let mut prefix = Vec::new();
        for (m, c) in &self.terms {
            let codes = m.codes();
            if codes.is_empty() {
                continue;
            }
            prefix.clear();
            let mut acc = *c;
            for &cd in codes {
                prefix.push(acc);
                acc *= mode_value(a_plus, cd);
            }
            let mut suffix = Complex64::new(1.0, 0.0);
            for j in (0..codes.len()).rev() {
                let d = prefix[j] * suffix;
                let (k, s) = decode(codes[j]);
                if s > 0 {
                    dp[k] += d;
                } else {
                    dm[k] += d;
                }
                suffix *= mode_value(a_plus, codes[j]);
            }
        }
        (dp, dm)
    }

    /// `(∇_q P, ∇_p P)` at a real phase point, by the chain rule through
    /// `c_k = [q,ψ_k]`, `s_k = [p,ψ_k]`.
    pub fn gradient(&self, state: &ChainState, es: &EigenSystem) -> Result<(Vec<f64>, Vec<f64>)> {
        let a = to_modes(state, es)?;
        let (dp, dm) = self.mode_gradient(&a);
        let n = es.dim();
        let mut dc = vec![0.0; n];
        let mut ds = vec![0.0; n];
        let h = std::f64::consts::FRAC_1_SQRT_2;
        for k in 0..n {
            let r = es.nu[k].sqrt();
            dc[k] = (h * r * (dp[k] + dm[k])).re;
            // ∂a^±/∂s = ∓ i / (√2 ν^{1/2})
            let i = Complex64::new(0.0, 1.0);
            ds[k] = (h / r * (-i * dp[k] + i * dm[k])).re;
        }
        Ok((es.reconstruct(&dc), es.reconstruct(&ds)))
    }
}

#[inline]
fn mode_value(a_plus: &[Complex64], cd: u32) -> Complex64 {
    let a = a_plus[(cd >> 1) as usize];
    if cd & 1 == 1 {
        a
    } else {
        a.conj()
    }
}

pub(crate) fn check_value(v: Complex64, scale: f64, t: f64) -> Result<f64> {
    if !v.re.is_finite() || !v.im.is_finite() {
        return Err(Error::NonFinite {
            t,
            detail: "polynomial evaluation".into(),
        });
    }
    if v.im.abs() > 1e-10 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::InvalidParameter(format!(
            "polynomial is not real: imaginary part {:e} at scale {:e}",
            v.im, scale
        )));
    }
    Ok(v.re)
}

/// Poisson bracket of two polynomials under `{a^σ_k, a^{σ'}_{k'}} = -iσ δ(σ+σ') δ(k-k')`:
/// `{A, B} = -i Σ_k (∂_{a⁺_k}A ∂_{a⁻_k}B - ∂_{a⁻_k}A ∂_{a⁺_k}B)`.
pub fn bracket(a: &ModePolynomial, b: &ModePolynomial) -> ModePolynomial {
    // index B by the codes it contains
    let b_terms: Vec<(&ModeMonomial, &Complex64)> = b.terms.iter().collect();
    let mut by_code: HashMap<u32, Vec<usize>> = HashMap::new();
    for (i, (m, _)) in b_terms.iter().enumerate() {
        let mut last = None;
        for &cd in m.codes() {
            if last != Some(cd) {
                by_code.entry(cd).or_default().push(i);
                last = Some(cd);
            }
        }
    }
    let mut out = ModePolynomial::zero();
    let mut buf = Vec::new();
    for (ma, ca) in &a.terms {
        let codes = ma.codes();
        let mut j = 0;
        while j < codes.len() {
            let alpha = codes[j];
            let mut mult_a = 0;
            while j < codes.len() && codes[j] == alpha {
                mult_a += 1;
                j += 1;
            }
            let (_, sa) = decode(alpha);
            let factor = Complex64::new(0.0, -(sa as f64)) * (mult_a as f64) * ca;
            let Some(list) = by_code.get(&(alpha ^ 1)) else {
                continue;
            };
            for &bi in list {
                let (mb, cb) = b_terms[bi];
                let mult_b = mb.codes().iter().filter(|&&c| c == alpha ^ 1).count();
                buf.clear();
                buf.extend(without_one(codes, alpha));
                buf.extend(without_one(mb.codes(), alpha ^ 1));
                out.add_term(ModeMonomial::from_codes(buf.clone()), factor * cb * mult_b as f64);
            }
        }
    }
    out
}

fn without_one(codes: &[u32], c: u32) -> impl Iterator<Item = u32> + '_ {
    let pos = codes.iter().position(|&x| x == c);
    codes
        .iter()
        .enumerate()
        .filter(move |(i, _)| Some(*i) != pos)
        .map(|(_, &x)| x)
}

/// Serialised form used by the JSONL exports.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MonomialRecord {
    pub monomial: Vec<(usize, Sign)>,
    pub coefficient: [f64; 2],
}

impl ModePolynomial {
    pub fn records(&self) -> Vec<MonomialRecord> {
        self.terms
            .iter()
            .map(|(m, c)| MonomialRecord {
                monomial: m.to_pairs(),
                coefficient: [c.re, c.im],
            })
            .collect()
    }
}
