//! The disordered Klein-Gordon chain: configuration, quenched disorder,
//! phase-space states, energies and forces.
//!
//! Sites carry absolute integer coordinates `a..=b`; vectors are stored with
//! index `x - a`. Both ends use free boundary conditions, so the bond term
//! `(eta/2)(q_x - q_{x+1})^2` is absent at the right end and the lattice
//! Laplacian reads `(Δq)_a = q_{a+1} - q_a`, `(Δq)_b = q_{b-1} - q_b`.

use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::StreamId;

/// Integer interval `[a, b]`, `a <= b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Interval {
    pub a: i64,
    pub b: i64,
}

impl Interval {
    pub fn new(a: i64, b: i64) -> Result<Self> {
        if a > b {
            return Err(Error::InvalidInterval { a, b });
        }
        Ok(Self { a, b })
    }

    /// `[-half, half]`.
    pub fn centered(half: i64) -> Result<Self> {
        Self::new(-half, half)
    }

    pub fn len(&self) -> usize {
        (self.b - self.a + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, x: i64) -> bool {
        self.a <= x && x <= self.b
    }

    pub fn contains_interval(&self, other: &Interval) -> bool {
        self.a <= other.a && other.b <= self.b
    }

    /// Vector index of site `x`.
    pub fn index(&self, x: i64) -> Result<usize> {
        if !self.contains(x) {
            return Err(Error::SiteOutOfRange {
                site: x,
                a: self.a,
                b: self.b,
            });
        }
        Ok((x - self.a) as usize)
    }

    pub fn site(&self, i: usize) -> i64 {
        self.a + i as i64
    }

    pub fn sites(&self) -> impl Iterator<Item = i64> {
        self.a..=self.b
    }

    /// `[x - ell, x + ell] ∩ self`.
    pub fn window(&self, x: i64, ell: i64) -> Result<Interval> {
        Interval::new((x - ell).max(self.a), (x + ell).min(self.b))
    }
}

/// Law of the on-site frequencies `omega_x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum DisorderLaw {
    /// `omega` uniform on `[lo, hi]`.
    Uniform { lo: f64, hi: f64 },
    /// `omega = lo + (hi - lo) * B` with `B ~ Beta(3, 3)`: a polynomial
    /// density `∝ t^2 (1-t)^2` that vanishes smoothly at the support edges.
    Bump { lo: f64, hi: f64 },
    /// Degenerate law at `omega`.
    Point { omega: f64 },
    /// Prescribed `omega_x^2` for the sites of `[-L, L]`, listed left to right.
    Fixed { omega_sq: Vec<f64> },
}

impl DisorderLaw {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidDisorderLaw(m));
        match self {
            DisorderLaw::Uniform { lo, hi } | DisorderLaw::Bump { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite()) || *lo <= 0.0 || hi < lo {
                    return bad(format!("support [{lo}, {hi}] must satisfy 0 < lo <= hi"));
                }
            }
            DisorderLaw::Point { omega } => {
                if !omega.is_finite() || *omega <= 0.0 {
                    return bad(format!("point mass at {omega} must be positive"));
                }
            }
            DisorderLaw::Fixed { omega_sq } => {
                if omega_sq.is_empty() {
                    return bad("empty fixed disorder".into());
                }
                if let Some(v) = omega_sq.iter().find(|v| !v.is_finite() || **v <= 0.0) {
                    return bad(format!("fixed omega^2 = {v} must be positive"));
                }
            }
        }
        Ok(())
    }

    /// Bounds on `omega^2` implied by the law.
    pub fn omega_sq_support(&self) -> (f64, f64) {
        match self {
            DisorderLaw::Uniform { lo, hi } | DisorderLaw::Bump { lo, hi } => (lo * lo, hi * hi),
            DisorderLaw::Point { omega } => (omega * omega, omega * omega),
            DisorderLaw::Fixed { omega_sq } => omega_sq
                .iter()
                .fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v))),
        }
    }

    fn draw_omega<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            DisorderLaw::Uniform { lo, hi } => {
                if lo == hi {
                    *lo
                } else {
                    rng.random_range(*lo..*hi)
                }
            }
            DisorderLaw::Bump { lo, hi } => {
                let beta = Beta::new(3.0, 3.0).expect("valid beta parameters");
                lo + (hi - lo) * beta.sample(rng)
            }
            DisorderLaw::Point { omega } => *omega,
            DisorderLaw::Fixed { .. } => unreachable!("fixed disorder is not drawn"),
        }
    }
}

impl Default for DisorderLaw {
    fn default() -> Self {
        DisorderLaw::Uniform { lo: 0.5, hi: 1.5 }
    }
}

/// Model parameters. JSON keys: `L`, `eta`, `lambda`, `disorder`, `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    #[serde(rename = "L")]
    pub half_length: i64,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default)]
    pub lambda: f64,
    #[serde(default)]
    pub disorder: DisorderLaw,
    #[serde(default)]
    pub seed: u64,
}

fn default_eta() -> f64 {
    1.0
}

impl ModelConfig {
    pub fn new(half_length: i64, eta: f64, lambda: f64, disorder: DisorderLaw, seed: u64) -> Self {
        Self {
            half_length,
            eta,
            lambda,
            disorder,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.half_length < 0 {
            return Err(Error::InvalidParameter(format!(
                "L = {} must be >= 0",
                self.half_length
            )));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::InvalidParameter(format!("eta = {} must be >= 0", self.eta)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "lambda = {} must be >= 0",
                self.lambda
            )));
        }
        self.disorder.validate()?;
        if let DisorderLaw::Fixed { omega_sq } = &self.disorder {
            let expected = (2 * self.half_length + 1) as usize;
            if omega_sq.len() != expected {
                return Err(Error::LengthMismatch {
                    expected,
                    got: omega_sq.len(),
                });
            }
        }
        Ok(())
    }

    /// `Λ_L = [-L, L]`.
    pub fn lattice(&self) -> Interval {
        Interval {
            a: -self.half_length,
            b: self.half_length,
        }
    }

    /// Upper bound on the harmonic spectrum, `max omega^2 + 4 eta`.
    pub fn nu_sq_max(&self) -> f64 {
        self.disorder.omega_sq_support().1 + 4.0 * self.eta
    }
}

/// One quenched draw of the on-site frequencies on an interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisorderRealization {
    pub interval: Interval,
    pub omega_sq: Vec<f64>,
    pub eta: f64,
}

impl DisorderRealization {
    pub fn new(interval: Interval, omega_sq: Vec<f64>, eta: f64) -> Result<Self> {
        if omega_sq.len() != interval.len() {
            return Err(Error::LengthMismatch {
                expected: interval.len(),
                got: omega_sq.len(),
            });
        }
        if let Some(v) = omega_sq.iter().find(|v| !v.is_finite() || **v <= 0.0) {
            return Err(Error::InvalidDisorderLaw(format!("omega^2 = {v} must be positive")));
        }
        if !(eta >= 0.0) {
            return Err(Error::InvalidParameter(format!("eta = {eta} must be >= 0")));
        }
        Ok(Self {
            interval,
            omega_sq,
            eta,
        })
    }

    pub fn len(&self) -> usize {
        self.omega_sq.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega_sq.is_empty()
    }

    /// Same disorder seen on a sub-interval.
    pub fn restrict(&self, sub: Interval) -> Result<Self> {
        if !self.interval.contains_interval(&sub) {
            return Err(Error::NotNested);
        }
        let lo = (sub.a - self.interval.a) as usize;
        Ok(Self {
            interval: sub,
            omega_sq: self.omega_sq[lo..lo + sub.len()].to_vec(),
            eta: self.eta,
        })
    }

    pub fn omega_sq_at(&self, x: i64) -> Result<f64> {
        Ok(self.omega_sq[self.interval.index(x)?])
    }

    fn check(&self, state: &ChainState) -> Result<()> {
        if state.q.len() != self.len() || state.p.len() != self.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                got: state.q.len().max(state.p.len()),
            });
        }
        Ok(())
    }
}

/// Draw `omega_x^2` on `interval` from the configured law. Each site uses its
/// own sub-stream, so nested intervals sampled from the same stream see the
/// same values on their overlap.
pub fn sample_disorder(
    config: &ModelConfig,
    interval: Interval,
    stream: StreamId,
) -> Result<DisorderRealization> {
    if interval.a > interval.b {
        return Err(Error::InvalidInterval {
            a: interval.a,
            b: interval.b,
        });
    }
    config.disorder.validate()?;
    let omega_sq = match &config.disorder {
        DisorderLaw::Fixed { omega_sq } => {
            let lattice = config.lattice();
            if !lattice.contains_interval(&interval) || omega_sq.len() != lattice.len() {
                return Err(Error::InvalidDisorderLaw(format!(
                    "fixed disorder covers [{}, {}] with {} values; requested [{}, {}]",
                    lattice.a,
                    lattice.b,
                    omega_sq.len(),
                    interval.a,
                    interval.b
                )));
            }
            interval
                .sites()
                .map(|x| omega_sq[(x - lattice.a) as usize])
                .collect()
        }
        law => interval
            .sites()
            .map(|x| {
                let w = law.draw_omega(&mut stream.site_rng(x));
                w * w
            })
            .collect(),
    };
    DisorderRealization::new(interval, omega_sq, config.eta)
}

/// Phase-space point `(q, p)` at time `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainState {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub t: f64,
}

impl ChainState {
    pub fn new(q: Vec<f64>, p: Vec<f64>) -> Result<Self> {
        if q.len() != p.len() {
            return Err(Error::LengthMismatch {
                expected: q.len(),
                got: p.len(),
            });
        }
        Ok(Self { q, p, t: 0.0 })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            q: vec![0.0; n],
            p: vec![0.0; n],
            t: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(&self.p).all(|v| v.is_finite())
    }
}

#[inline]
fn site_energy(q: &[f64], p: &[f64], omega_sq: &[f64], eta: f64, lambda: f64, i: usize) -> f64 {
    let qi = q[i];
    let bond = if i + 1 < q.len() {
        let d = qi - q[i + 1];
        0.5 * eta * d * d
    } else {
        0.0
    };
    0.5 * p[i] * p[i] + 0.5 * omega_sq[i] * qi * qi + bond + 0.25 * lambda * qi * qi * qi * qi
}

/// Total energy `H(q, p)`.
pub fn hamiltonian(state: &ChainState, realization: &DisorderRealization, lambda: f64) -> Result<f64> {
    realization.check(state)?;
    Ok((0..state.len())
        .map(|i| {
            site_energy(
                &state.q,
                &state.p,
                &realization.omega_sq,
                realization.eta,
                lambda,
                i,
            )
        })
        .sum())
}

/// Harmonic part `H_har = H(λ = 0)`.
pub fn harmonic_energy(state: &ChainState, realization: &DisorderRealization) -> Result<f64> {
    hamiltonian(state, realization, 0.0)
}

/// Local energy `H_x` owning the bond to its right neighbour.
pub fn local_energy(
    state: &ChainState,
    realization: &DisorderRealization,
    lambda: f64,
    x: i64,
) -> Result<f64> {
    realization.check(state)?;
    let i = realization.interval.index(x)?;
    Ok(site_energy(
        &state.q,
        &state.p,
        &realization.omega_sq,
        realization.eta,
        lambda,
        i,
    ))
}

/// All local energies, left to right.
pub fn local_energies(
    state: &ChainState,
    realization: &DisorderRealization,
    lambda: f64,
) -> Result<Vec<f64>> {
    realization.check(state)?;
    Ok((0..state.len())
        .map(|i| {
            site_energy(
                &state.q,
                &state.p,
                &realization.omega_sq,
                realization.eta,
                lambda,
                i,
            )
        })
        .collect())
}

/// Writes `-∇_q H` into `out`. Hot loop of every integrator.
#[inline]
pub fn force_into(q: &[f64], omega_sq: &[f64], eta: f64, lambda: f64, out: &mut [f64]) {
    let n = q.len();
    debug_assert_eq!(out.len(), n);
    if n == 1 {
        out[0] = -omega_sq[0] * q[0] - lambda * q[0] * q[0] * q[0];
        return;
    }
    for i in 0..n {
        let qi = q[i];
        let left = if i > 0 { q[i - 1] - qi } else { 0.0 };
        let right = if i + 1 < n { q[i + 1] - qi } else { 0.0 };
        out[i] = -omega_sq[i] * qi + eta * (left + right) - lambda * qi * qi * qi;
    }
}

/// Force `-∇_q H`: `-omega_x^2 q_x + eta (Δq)_x - lambda q_x^3`.
pub fn force(state: &ChainState, realization: &DisorderRealization, lambda: f64) -> Result<Vec<f64>> {
    realization.check(state)?;
    let mut out = vec![0.0; state.len()];
    force_into(&state.q, &realization.omega_sq, realization.eta, lambda, &mut out);
    Ok(out)
}
