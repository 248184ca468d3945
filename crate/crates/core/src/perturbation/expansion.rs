//! Order-by-order solution of `f = -{H, u} + λⁿ g` on merged polynomials.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::modes::AnharmonicTensor;
use super::poly::{bracket, ModeMonomial, ModePolynomial, Sign};
use crate::error::{Error, Result};
use crate::model::ChainState;
use crate::spectral::EigenSystem;

/// Denominators with `|Δ|` below this abort the construction.
pub const RESONANCE_THRESHOLD: f64 = 1e-13;

/// Default cap on `|H_an terms| × |u terms|` per bracket.
pub const DEFAULT_BRACKET_BUDGET: u128 = 2_000_000_000;

/// Observable whose time derivative seeds the expansion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Source {
    /// `f = {H_an, E_{k0}}`, the anharmonic drift of one mode energy.
    ModeEnergy { k0: usize },
    /// `f = η (q_{x0-1} - q_{x0}) p_{x0}`, the harmonic current into `x0`.
    Current { x0: i64 },
}

impl Source {
    /// Degree `d₁` of the source polynomial.
    pub fn degree(&self) -> usize {
        match self {
            Source::ModeEnergy { .. } => 4,
            Source::Current { .. } => 2,
        }
    }

    pub fn validate(&self, es: &EigenSystem) -> Result<()> {
        match *self {
            Source::ModeEnergy { k0 } if k0 >= es.dim() => Err(Error::InvalidParameter(format!(
                "mode {k0} out of range for {} modes",
                es.dim()
            ))),
            Source::Current { x0 } if !es.interval.contains(x0) || x0 == es.interval.a => {
                Err(Error::InvalidParameter(format!(
                    "current site {x0} needs a left neighbour in [{}, {}]",
                    es.interval.a, es.interval.b
                )))
            }
            _ => Ok(()),
        }
    }

    /// Direct value of the source at a phase point, without mode algebra.
    pub fn direct_value(&self, state: &ChainState, es: &EigenSystem, eta: f64) -> Result<f64> {
        self.validate(es)?;
        match *self {
            Source::Current { x0 } => {
                let i = es.interval.index(x0)?;
                Ok(eta * (state.q[i - 1] - state.q[i]) * state.p[i])
            }
            Source::ModeEnergy { k0 } => {
                // {H_an, E} = -∇_q H_an · ∇_p E with ∇_q H_an = q³, ∇_p E = s_{k0} ψ_{k0}
                let psi = es.psi(k0);
                let s: f64 = psi.iter().zip(&state.p).map(|(a, b)| a * b).sum();
                let cubic: f64 = psi.iter().zip(&state.q).map(|(a, q)| a * q * q * q).sum();
                Ok(-s * cubic)
            }
        }
    }
}

/// Ordered-tuple coefficients `f̂(k, σ)` of the source over the given modes,
/// excluding pairable tuples and structural zeros. Tuples are over global
/// mode indices.
pub(crate) fn source_terms(
    source: &Source,
    es: &EigenSystem,
    eta: f64,
    modes: &[usize],
    tensor: &AnharmonicTensor,
) -> Result<Vec<(Vec<(usize, Sign)>, Complex64)>> {
    source.validate(es)?;
    let mut out = Vec::new();
    match *source {
        Source::Current { x0 } => {
            let i = es.interval.index(x0)?;
            for &k1 in modes {
                let d1 = es.psi(k1)[i - 1] - es.psi(k1)[i];
                for &k2 in modes {
                    let base = 0.5 * eta * d1 * es.psi(k2)[i] * (es.nu[k2] / es.nu[k1]).sqrt();
                    for s1 in [-1i8, 1] {
                        for s2 in [-1i8, 1] {
                            if k1 == k2 && s1 == -s2 {
                                continue;
                            }
                            out.push((vec![(k1, s1), (k2, s2)], Complex64::new(0.0, base * s2 as f64)));
                        }
                    }
                }
            }
        }
        Source::ModeEnergy { k0 } => {
            let m = modes.len();
            let nu0 = es.nu[k0];
            for a in 0..m {
                for b in 0..m {
                    for c in 0..m {
                        for d in 0..m {
                            let h = tensor.get(a, b, c, d);
                            let ks = [modes[a], modes[b], modes[c], modes[d]];
                            for bits in 0..16u8 {
                                let sig: [Sign; 4] =
                                    std::array::from_fn(|j| if bits >> j & 1 == 1 { 1 } else { -1 });
                                let weight: i32 = (0..4)
                                    .filter(|&j| ks[j] == k0)
                                    .map(|j| sig[j] as i32)
                                    .sum();
                                if weight == 0 {
                                    continue;
                                }
                                let t: Vec<(usize, Sign)> = (0..4).map(|j| (ks[j], sig[j])).collect();
                                out.push((t, Complex64::new(0.0, -nu0 * h * weight as f64)));
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Merged source polynomial `f⁽¹⁾`.
pub fn source_f1(source: &Source, es: &EigenSystem, eta: f64) -> Result<ModePolynomial> {
    let modes: Vec<usize> = (0..es.dim()).collect();
    let tensor = match source {
        Source::ModeEnergy { .. } => AnharmonicTensor::full(es),
        Source::Current { .. } => AnharmonicTensor::new(es, Vec::new()),
    };
    let mut p = ModePolynomial::zero();
    for (t, c) in source_terms(source, es, eta, &modes, &tensor)? {
        p.add_term(ModeMonomial::new(&t), c);
    }
    p.drop_pairable();
    p.prune();
    Ok(p)
}

/// Merged `H_an = Σ Ĥ_an(k) a^{(k,σ)}`: each sorted monomial carries
/// `Ĥ_an` times its number of orderings.
pub fn anharmonic_polynomial(es: &EigenSystem) -> ModePolynomial {
    let tensor = AnharmonicTensor::full(es);
    let nc = 2 * es.dim() as u32;
    let mut p = ModePolynomial::zero();
    for c1 in 0..nc {
        for c2 in c1..nc {
            for c3 in c2..nc {
                for c4 in c3..nc {
                    let m = ModeMonomial::from_codes(vec![c1, c2, c3, c4]);
                    let k = [c1 >> 1, c2 >> 1, c3 >> 1, c4 >> 1].map(|v| v as usize);
                    let h = tensor.get(k[0], k[1], k[2], k[3]);
                    let w = m.orderings() as f64;
                    p.add_term(m, Complex64::new(h * w, 0.0));
                }
            }
        }
    }
    p.prune();
    p
}

/// `û = i f̂ / Δ`, the solution of `-{H_har, u} = f`.
pub fn solve_cohomological(f: &ModePolynomial, es: &EigenSystem) -> Result<ModePolynomial> {
    let i = Complex64::new(0.0, 1.0);
    let mut u = ModePolynomial::zero();
    for (m, c) in &f.terms {
        if m.is_pairable() {
            return Err(Error::InvalidParameter(format!(
                "source has a component on the pairable monomial {m}"
            )));
        }
        let delta = m.denominator(&es.nu);
        if delta.abs() < RESONANCE_THRESHOLD {
            return Err(Error::NearResonance {
                delta: delta.abs(),
                monomial: m.to_string(),
            });
        }
        u.add_term(m.clone(), i * c / delta);
    }
    Ok(u)
}

/// `{H_an, u}` without pairable monomials.
pub fn bracket_with_anharmonic(
    u: &ModePolynomial,
    h_an: &ModePolynomial,
    budget: u128,
) -> Result<ModePolynomial> {
    let work = h_an.len() as u128 * u.len() as u128;
    if work > budget {
        return Err(Error::BudgetExceeded { count: work, cap: budget });
    }
    let mut f = bracket(h_an, u);
    f.drop_pairable();
    f.prune();
    Ok(f)
}

/// `u = Σ_{i=1}^{n} λ^{i-1} u⁽ⁱ⁾`, `g = f⁽ⁿ⁺¹⁾`, all orders kept.
#[derive(Debug, Clone)]
pub struct Expansion {
    pub source: Source,
    pub eta: f64,
    /// `f⁽¹⁾ .. f⁽ⁿ⁺¹⁾`.
    pub f: Vec<ModePolynomial>,
    /// `u⁽¹⁾ .. u⁽ⁿ⁾`.
    pub u: Vec<ModePolynomial>,
}

pub fn build_expansion(
    source: Source,
    es: &EigenSystem,
    eta: f64,
    order: usize,
    budget: u128,
) -> Result<Expansion> {
    if order == 0 {
        return Err(Error::InvalidParameter("expansion order must be >= 1".into()));
    }
    let h_an = anharmonic_polynomial(es);
    let mut f = vec![source_f1(&source, es, eta)?];
    let mut u = Vec::with_capacity(order);
    for i in 0..order {
        let ui = solve_cohomological(&f[i], es)?;
        f.push(bracket_with_anharmonic(&ui, &h_an, budget)?);
        u.push(ui);
    }
    Ok(Expansion { source, eta, f, u })
}

/// Pointwise decomposition of `f + {H, u} - λⁿ g`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Residual {
    pub source: f64,
    pub bracket: f64,
    pub remainder: f64,
    pub defect: f64,
    /// `|defect| / (|f| + |{H,u}| + |λⁿ g|)`.
    pub relative: f64,
}

impl Expansion {
    pub fn order(&self) -> usize {
        self.u.len()
    }

    pub fn g(&self) -> &ModePolynomial {
        self.f.last().expect("expansion has at least one order")
    }

    /// Degrees `d_i` of `f⁽ⁱ⁾` (each must be a single value).
    pub fn degrees(&self) -> Vec<Vec<usize>> {
        self.f.iter().map(|p| p.degrees()).collect()
    }

    pub fn evaluate_u(&self, state: &ChainState, es: &EigenSystem, lambda: f64) -> Result<f64> {
        let mut total = 0.0;
        let mut w = 1.0;
        for ui in &self.u {
            total += w * ui.evaluate(state, es)?;
            w *= lambda;
        }
        Ok(total)
    }

    pub fn u_gradient(&self, state: &ChainState, es: &EigenSystem, lambda: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = es.dim();
        let (mut gq, mut gp) = (vec![0.0; n], vec![0.0; n]);
        let mut w = 1.0;
        for ui in &self.u {
            let (a, b) = ui.gradient(state, es)?;
            for x in 0..n {
                gq[x] += w * a[x];
                gp[x] += w * b[x];
            }
            w *= lambda;
        }
        Ok((gq, gp))
    }

    /// Residual of the commutator equation with `{H, u}` from explicit
    /// gradients of the full Hamiltonian.
    pub fn residual(&self, state: &ChainState, es: &EigenSystem, lambda: f64) -> Result<Residual> {
        let f = self.source.direct_value(state, es, self.eta)?;
        let (gq, gp) = self.u_gradient(state, es, lambda)?;
        let dh_dq = hamiltonian_q_gradient(state, es, lambda);
        let br = poisson(&state.p, &dh_dq, &gq, &gp);
        let ln = lambda.powi(self.order() as i32);
        let rem = ln * self.g().evaluate(state, es)?;
        let defect = f + br - rem;
        let scale = f.abs() + br.abs() + rem.abs();
        Ok(Residual {
            source: f,
            bracket: br,
            remainder: rem,
            defect,
            relative: if scale > 0.0 { defect.abs() / scale } else { 0.0 },
        })
    }
}

/// `∇_q H = A q + λ q³`, with `A` applied through the eigensystem.
pub fn hamiltonian_q_gradient(state: &ChainState, es: &EigenSystem, lambda: f64) -> Vec<f64> {
    let c = es.project(&state.q);
    let ac: Vec<f64> = c.iter().zip(&es.nu_sq).map(|(c, w)| c * w).collect();
    let mut g = es.reconstruct(&ac);
    for (gx, q) in g.iter_mut().zip(&state.q) {
        *gx += lambda * q * q * q;
    }
    g
}

/// `{F, G} = ∇_p F · ∇_q G - ∇_q F · ∇_p G`.
pub fn poisson(fp: &[f64], fq: &[f64], gq: &[f64], gp: &[f64]) -> f64 {
    let a: f64 = fp.iter().zip(gq).map(|(x, y)| x * y).sum();
    let b: f64 = fq.iter().zip(gp).map(|(x, y)| x * y).sum();
    a - b
}

/// `{H_har, P}` at a phase point via explicit gradients.
pub fn harmonic_bracket(p: &ModePolynomial, state: &ChainState, es: &EigenSystem) -> Result<f64> {
    let (gq, gp) = p.gradient(state, es)?;
    let dh_dq = hamiltonian_q_gradient(state, es, 0.0);
    Ok(poisson(&state.p, &dh_dq, &gq, &gp))
}
