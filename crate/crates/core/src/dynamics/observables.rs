use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ChainState, DisorderRealization};
use crate::spectral::EigenSystem;

/// `E_k = ([p,ψ_k]² + ν_k² [q,ψ_k]²)/2`.
pub fn mode_energy(state: &ChainState, es: &EigenSystem, k: usize) -> Result<f64> {
    if k >= es.dim() {
        return Err(Error::InvalidParameter(format!("mode {k} out of range 0..{}", es.dim())));
    }
    if state.len() != es.dim() {
        return Err(Error::LengthMismatch {
            expected: es.dim(),
            got: state.len(),
        });
    }
    let psi = es.psi(k);
    let c: f64 = psi.iter().zip(&state.q).map(|(a, b)| a * b).sum();
    let s: f64 = psi.iter().zip(&state.p).map(|(a, b)| a * b).sum();
    Ok(0.5 * (s * s + es.nu_sq[k] * c * c))
}

/// All mode energies.
pub fn mode_energies(state: &ChainState, es: &EigenSystem) -> Result<Vec<f64>> {
    if state.len() != es.dim() {
        return Err(Error::LengthMismatch {
            expected: es.dim(),
            got: state.len(),
        });
    }
    let c = es.project(&state.q);
    let s = es.project(&state.p);
    Ok((0..es.dim())
        .map(|k| 0.5 * (s[k] * s[k] + es.nu_sq[k] * c[k] * c[k]))
        .collect())
}

/// `j_x = η (q_{x-1} - q_x) p_x`, the energy flowing from `x - 1` into `x`.
pub fn local_current(state: &ChainState, realization: &DisorderRealization, x: i64) -> Result<f64> {
    let iv = realization.interval;
    let i = iv.index(x)?;
    if i == 0 {
        return Err(Error::SiteOutOfRange {
            site: x - 1,
            a: iv.a,
            b: iv.b,
        });
    }
    if state.len() != iv.len() {
        return Err(Error::LengthMismatch {
            expected: iv.len(),
            got: state.len(),
        });
    }
    Ok(realization.eta * (state.q[i - 1] - state.q[i]) * state.p[i])
}

/// `Σ_{x=a+1}^{b} j_x`; under free boundary conditions no current crosses the ends.
pub fn total_current(state: &ChainState, eta: f64) -> f64 {
    let (q, p) = (&state.q, &state.p);
    let mut s = 0.0;
    for i in 1..q.len() {
        s += (q[i - 1] - q[i]) * p[i];
    }
    eta * s
}

/// Trapezoidal running integral `J(t) = ∫_0^t j(s) ds` of a sampled signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurrentAccumulator {
    pub site: i64,
    pub integral: f64,
    pub samples: usize,
    last: Option<(f64, f64)>,
}

impl CurrentAccumulator {
    pub fn new(site: i64) -> Self {
        Self {
            site,
            integral: 0.0,
            samples: 0,
            last: None,
        }
    }

    /// Adds the sample `j(t)`; times must be nondecreasing.
    pub fn push(&mut self, t: f64, j: f64) {
        if let Some((t0, j0)) = self.last {
            self.integral += 0.5 * (t - t0) * (j0 + j);
        }
        self.last = Some((t, j));
        self.samples += 1;
    }

    pub fn push_state(&mut self, state: &ChainState, realization: &DisorderRealization) -> Result<()> {
        let j = local_current(state, realization, self.site)?;
        self.push(state.t, j);
        Ok(())
    }

    pub fn last_time(&self) -> Option<f64> {
        self.last.map(|l| l.0)
    }

    /// Combines with the accumulator of the following segment; the later
    /// segment must start at the sample where this one ends.
    pub fn merge(&self, later: &CurrentAccumulator) -> CurrentAccumulator {
        CurrentAccumulator {
            site: self.site,
            integral: self.integral + later.integral,
            samples: self.samples + later.samples.saturating_sub(1),
            last: later.last.or(self.last),
        }
    }
}

/// `𝓙(t) = (t |Λ|)^{-1/2} Σ_x ∫_0^t j_x`, given the integrated total current.
pub fn rescaled_current(integrated_total: f64, t: f64, sites: usize) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::InvalidParameter(format!("t = {t} must be > 0")));
    }
    Ok(integrated_total / (t * sites as f64).sqrt())
}

/// `w = sqrt(Σ x² q_x² / Σ q_x²)` with absolute coordinates.
pub fn wavepacket_width(state: &ChainState, realization: &DisorderRealization) -> Result<f64> {
    let iv = realization.interval;
    if state.len() != iv.len() {
        return Err(Error::LengthMismatch {
            expected: iv.len(),
            got: state.len(),
        });
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, q) in state.q.iter().enumerate() {
        let x = iv.site(i) as f64;
        num += x * x * q * q;
        den += q * q;
    }
    if den == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok((num / den).sqrt())
}
