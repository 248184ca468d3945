//! Hamiltonian flow of the chain and the observables measured along it.

mod integrator;
mod observables;

pub use integrator::{
    exact_harmonic_evolve, nu_plus, step, Integrator, IntegratorConfig, Scheme, STABILITY_MARGIN,
};
pub use observables::{
    local_current, mode_energies, mode_energy, rescaled_current, total_current, wavepacket_width,
    CurrentAccumulator,
};

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{hamiltonian, ChainState, DisorderRealization};
use crate::spectral::EigenSystem;

/// Evolves `state` to time `state.t + t`: exactly for the harmonic scheme,
/// otherwise by `round(t/dt)` integrator steps.
pub fn evolve(
    state: &ChainState,
    realization: &DisorderRealization,
    es: &EigenSystem,
    lambda: f64,
    cfg: &IntegratorConfig,
    t: f64,
) -> Result<ChainState> {
    if cfg.scheme == Scheme::ExactHarmonic {
        if lambda != 0.0 {
            return Err(Error::InvalidParameter(
                "exact_harmonic evolution requires lambda = 0".into(),
            ));
        }
        return exact_harmonic_evolve(state, es, t);
    }
    let mut st = state.clone();
    let n = (t / cfg.dt).round() as usize;
    Integrator::new(realization, lambda, *cfg)?.run(&mut st, n, |_| Ok(()))?;
    Ok(st)
}

/// `C_k(t) = ½ ⟨(E_k(t) - E_k(0))²⟩` over an ensemble of initial states.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Decorrelation {
    pub t: f64,
    pub lambda: f64,
    pub per_mode: Vec<f64>,
    /// `(1/|Λ|) Σ_k C_k(t)`.
    pub mode_average: f64,
    /// Jackknife standard error of `mode_average` over the ensemble.
    pub stderr: f64,
}

pub fn decorrelation(
    realization: &DisorderRealization,
    es: &EigenSystem,
    lambda: f64,
    cfg: &IntegratorConfig,
    t: f64,
    initial: &[ChainState],
) -> Result<Decorrelation> {
    if initial.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let sq: Vec<Vec<f64>> = initial
        .par_iter()
        .map(|s0| {
            let e0 = mode_energies(s0, es)?;
            let st = evolve(s0, realization, es, lambda, cfg, t)?;
            let e1 = mode_energies(&st, es)?;
            Ok(e0.iter().zip(&e1).map(|(a, b)| (b - a) * (b - a)).collect())
        })
        .collect::<Result<_>>()?;
    let n_modes = es.dim();
    let m = sq.len() as f64;
    let mut per_mode = vec![0.0; n_modes];
    for row in &sq {
        for (acc, v) in per_mode.iter_mut().zip(row) {
            *acc += v;
        }
    }
    let per_sample: Vec<f64> = sq.iter().map(|r| 0.5 * r.iter().sum::<f64>() / n_modes as f64).collect();
    for v in &mut per_mode {
        *v *= 0.5 / m;
    }
    let mode_average = per_mode.iter().sum::<f64>() / n_modes as f64;
    let stderr = if sq.len() > 1 {
        let total: f64 = per_sample.iter().sum();
        let loo: Vec<f64> = per_sample.iter().map(|v| (total - v) / (m - 1.0)).collect();
        crate::stats::jackknife_stderr(&loo)
    } else {
        f64::NAN
    };
    Ok(Decorrelation {
        t,
        lambda,
        per_mode,
        mode_average,
        stderr,
    })
}

/// One recorded row of a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryRow {
    pub t: f64,
    pub energy: f64,
    pub j0: f64,
    pub width: f64,
    pub mode_energies: Vec<f64>,
}

/// What a recorded trajectory measures.
#[derive(Debug, Clone)]
pub struct RecordSpec<'a> {
    /// Bond `x_0` whose integrated current `J_0` is tracked.
    pub current_site: i64,
    /// Modes whose energies are recorded (requires `es`).
    pub modes: Vec<usize>,
    pub es: Option<&'a EigenSystem>,
    /// Output stride in integrator steps.
    pub record_every: usize,
}

/// Integrates for `cfg.t_max`, accumulating `J_0` on every step and emitting
/// a row every `record_every` steps (and at `t = 0`).
pub fn record_trajectory(
    initial: &ChainState,
    realization: &DisorderRealization,
    lambda: f64,
    cfg: &IntegratorConfig,
    spec: &RecordSpec,
) -> Result<Vec<TrajectoryRow>> {
    if spec.record_every == 0 {
        return Err(Error::InvalidParameter("record_every must be >= 1".into()));
    }
    if !spec.modes.is_empty() && spec.es.is_none() {
        return Err(Error::InvalidParameter("mode energies need an eigensystem".into()));
    }
    let mut st = initial.clone();
    let mut acc = CurrentAccumulator::new(spec.current_site);
    acc.push_state(&st, realization)?;
    let row = |st: &ChainState, acc: &CurrentAccumulator| -> Result<TrajectoryRow> {
        let mode_energies = match spec.es {
            Some(es) => spec
                .modes
                .iter()
                .map(|&k| mode_energy(st, es, k))
                .collect::<Result<_>>()?,
            None => Vec::new(),
        };
        Ok(TrajectoryRow {
            t: st.t,
            energy: hamiltonian(st, realization, lambda)?,
            j0: acc.integral,
            width: wavepacket_width(st, realization).unwrap_or(f64::NAN),
            mode_energies,
        })
    };
    let mut rows = vec![row(&st, &acc)?];
    let mut integ = match cfg.scheme {
        Scheme::ExactHarmonic => {
            let es = spec
                .es
                .ok_or_else(|| Error::InvalidParameter("exact_harmonic needs an eigensystem".into()))?;
            Integrator::harmonic(realization, es, *cfg)
        }
        _ => Integrator::new(realization, lambda, *cfg)?,
    };
    let n = cfg.steps();
    for i in 1..=n {
        integ.step(&mut st)?;
        acc.push_state(&st, realization)?;
        if i % spec.record_every == 0 || i == n {
            rows.push(row(&st, &acc)?);
        }
    }
    integrator::check_finite(&st)?;
    Ok(rows)
}

/// CSV with columns `t,H,J0,w,E_<k>...`.
pub fn write_trajectory_csv<W: Write>(rows: &[TrajectoryRow], modes: &[usize], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string(), "H".into(), "J0".into(), "w".into()];
    header.extend(modes.iter().map(|k| format!("E_{k}")));
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            format!("{:e}", r.t),
            format!("{:.17e}", r.energy),
            format!("{:.17e}", r.j0),
            format!("{:e}", r.width),
        ];
        rec.extend(r.mode_energies.iter().map(|e| format!("{:.17e}", e)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
