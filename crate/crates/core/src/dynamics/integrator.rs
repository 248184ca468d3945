use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{force_into, ChainState, DisorderRealization};
use crate::spectral::EigenSystem;

/// Largest admissible `dt · ν_+` for the symplectic schemes.
pub const STABILITY_MARGIN: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Verlet,
    Yoshida4,
    /// Exact flow of `H_har`; only meaningful at `λ = 0`.
    ExactHarmonic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub scheme: Scheme,
    pub t_max: f64,
}

impl IntegratorConfig {
    /// Validates `dt > 0`, `t_max ≥ 0` and, for the symplectic schemes,
    /// `dt · ν_+ ≤ 0.5` where `ν_+ = sqrt(max ω² + 4η)`.
    pub fn new(dt: f64, scheme: Scheme, t_max: f64, nu_plus: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt = {dt} must be > 0")));
        }
        if !(t_max >= 0.0 && t_max.is_finite()) {
            return Err(Error::InvalidParameter(format!("t_max = {t_max} must be >= 0")));
        }
        if scheme != Scheme::ExactHarmonic && dt * nu_plus > STABILITY_MARGIN {
            return Err(Error::UnstableStep {
                value: dt * nu_plus,
                limit: STABILITY_MARGIN,
            });
        }
        Ok(Self { dt, scheme, t_max })
    }

    /// As [`IntegratorConfig::new`] with `ν_+` read off the realization.
    pub fn for_realization(dt: f64, scheme: Scheme, t_max: f64, r: &DisorderRealization) -> Result<Self> {
        Self::new(dt, scheme, t_max, nu_plus(r))
    }

    pub fn steps(&self) -> usize {
        (self.t_max / self.dt).round() as usize
    }
}

/// `sqrt(max ω² + 4η)`.
pub fn nu_plus(r: &DisorderRealization) -> f64 {
    (r.omega_sq.iter().cloned().fold(0.0, f64::max) + 4.0 * r.eta).sqrt()
}

const YOSHIDA_W1: f64 = 1.351_207_191_959_657_8; // 1/(2 - 2^{1/3})
const YOSHIDA_W0: f64 = -1.702_414_383_919_315_3; // -2^{1/3}/(2 - 2^{1/3})

/// Reusable stepper; caches the force between velocity-Verlet substeps.
pub struct Integrator<'a> {
    realization: &'a DisorderRealization,
    es: Option<&'a EigenSystem>,
    lambda: f64,
    cfg: IntegratorConfig,
    force: Vec<f64>,
    /// Positions at which `force` was last evaluated.
    force_q: Vec<f64>,
    force_valid: bool,
    steps_since_check: usize,
}

impl<'a> Integrator<'a> {
    pub fn new(realization: &'a DisorderRealization, lambda: f64, cfg: IntegratorConfig) -> Result<Self> {
        if cfg.scheme == Scheme::ExactHarmonic {
            return Err(Error::InvalidParameter(
                "exact_harmonic needs an eigensystem; use Integrator::harmonic".into(),
            ));
        }
        Ok(Self {
            realization,
            es: None,
            lambda,
            cfg,
            force: vec![0.0; realization.len()],
            force_q: vec![0.0; realization.len()],
            force_valid: false,
            steps_since_check: 0,
        })
    }

    pub fn harmonic(realization: &'a DisorderRealization, es: &'a EigenSystem, cfg: IntegratorConfig) -> Self {
        Self {
            realization,
            es: Some(es),
            lambda: 0.0,
            cfg,
            force: vec![0.0; realization.len()],
            force_q: vec![0.0; realization.len()],
            force_valid: false,
            steps_since_check: 0,
        }
    }

    pub fn config(&self) -> &IntegratorConfig {
        &self.cfg
    }

    fn refresh_force(&mut self, q: &[f64]) {
        if !(self.force_valid && self.force_q == q) {
            force_into(q, &self.realization.omega_sq, self.realization.eta, self.lambda, &mut self.force);
            self.force_q.copy_from_slice(q);
            self.force_valid = true;
        }
    }

    fn verlet(&mut self, st: &mut ChainState, h: f64) {
        self.refresh_force(&st.q);
        let half = 0.5 * h;
        for (p, f) in st.p.iter_mut().zip(&self.force) {
            *p += half * f;
        }
        for (q, p) in st.q.iter_mut().zip(&st.p) {
            *q += h * p;
        }
        st.t += h;
        self.refresh_force(&st.q);
        for (p, f) in st.p.iter_mut().zip(&self.force) {
            *p += half * f;
        }
    }

    /// Advances `st` by one step of size `dt`.
    pub fn step(&mut self, st: &mut ChainState) -> Result<()> {
        let dt = self.cfg.dt;
        let t0 = st.t;
        match self.cfg.scheme {
            Scheme::Verlet => self.verlet(st, dt),
            Scheme::Yoshida4 => {
                self.verlet(st, YOSHIDA_W1 * dt);
                self.verlet(st, YOSHIDA_W0 * dt);
                self.verlet(st, YOSHIDA_W1 * dt);
            }
            Scheme::ExactHarmonic => {
                let es = self.es.expect("harmonic integrator carries an eigensystem");
                *st = exact_harmonic_evolve(st, es, dt)?;
            }
        }
        st.t = t0 + dt;
        self.steps_since_check += 1;
        if self.steps_since_check >= 64 {
            self.steps_since_check = 0;
            check_finite(st)?;
        }
        Ok(())
    }

    /// Advances `n` steps, calling `observe` with the state after each one.
    pub fn run<F: FnMut(&ChainState) -> Result<()>>(
        &mut self,
        st: &mut ChainState,
        n: usize,
        mut observe: F,
    ) -> Result<()> {
        for _ in 0..n {
            self.step(st)?;
            observe(st)?;
        }
        check_finite(st)
    }
}

pub(crate) fn check_finite(st: &ChainState) -> Result<()> {
    if let Some(i) = st.q.iter().chain(&st.p).position(|v| !v.is_finite()) {
        let n = st.q.len();
        let (which, site) = if i < n { ("q", i) } else { ("p", i - n) };
        return Err(Error::NonFinite {
            t: st.t,
            detail: format!("{which}[{site}] is not finite"),
        });
    }
    Ok(())
}

/// One step of the configured scheme from `state`.
pub fn step(
    state: &ChainState,
    realization: &DisorderRealization,
    lambda: f64,
    cfg: &IntegratorConfig,
) -> Result<ChainState> {
    let mut st = state.clone();
    Integrator::new(realization, lambda, *cfg)?.step(&mut st)?;
    check_finite(&st)?;
    Ok(st)
}

/// Exact flow of `H_har` for time `t`: every mode pair `([q,ψ_k], [p,ψ_k])`
/// rotates by the angle `ν_k t`.
pub fn exact_harmonic_evolve(state: &ChainState, es: &EigenSystem, t: f64) -> Result<ChainState> {
    if state.len() != es.dim() {
        return Err(Error::LengthMismatch {
            expected: es.dim(),
            got: state.len(),
        });
    }
    let c = es.project(&state.q);
    let s = es.project(&state.p);
    let mut c1 = vec![0.0; c.len()];
    let mut s1 = vec![0.0; c.len()];
    for k in 0..c.len() {
        let nu = es.nu[k];
        let (sn, cs) = (nu * t).sin_cos();
        c1[k] = c[k] * cs + s[k] / nu * sn;
        s1[k] = -nu * c[k] * sn + s[k] * cs;
    }
    Ok(ChainState {
        q: es.reconstruct(&c1),
        p: es.reconstruct(&s1),
        t: state.t + t,
    })
}
