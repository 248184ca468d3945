//! Samplers for the Gibbs measure `e^{-H}/Z` and for product measures
//! `∝ Π_x e^{-β_x H_x}` with a varying inverse temperature.
//!
//! Momenta are drawn exactly. Positions use single-site heat-bath sweeps: given
//! its neighbours, `q_x` has density `∝ exp(-(α q²/2 + γ q + κ q⁴/4))`, drawn
//! from the Gaussian envelope `N(-γ/α, 1/α)` and accepted with probability
//! `exp(-κ q⁴/4)`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ChainState, DisorderRealization};
use crate::rng::StreamId;
use crate::spectral::EigenSystem;
use crate::stats::integrated_autocorrelation_time;

/// Envelope draws per site update before giving up.
pub const MAX_ENVELOPE_ATTEMPTS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Proposal {
    #[default]
    HeatBath,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplerConfig {
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    #[serde(default = "default_thinning")]
    pub thinning: usize,
    pub n_samples: usize,
    #[serde(default)]
    pub proposal: Proposal,
}

fn default_burn_in() -> usize {
    1000
}

fn default_thinning() -> usize {
    10
}

impl SamplerConfig {
    pub fn new(burn_in: usize, thinning: usize, n_samples: usize) -> Result<Self> {
        let cfg = Self {
            burn_in,
            thinning,
            n_samples,
            proposal: Proposal::HeatBath,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.thinning == 0 || self.n_samples == 0 {
            return Err(Error::InvalidParameter(format!(
                "thinning = {} and n_samples = {} must be >= 1",
                self.thinning, self.n_samples
            )));
        }
        Ok(())
    }
}

/// Per-site inverse temperatures `β_x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoneqProfile {
    pub beta: Vec<f64>,
}

/// Admissible range for profile entries.
pub const BETA_RANGE: (f64, f64) = (1e-3, 1e3);

impl NoneqProfile {
    pub fn new(beta: Vec<f64>) -> Result<Self> {
        let p = Self { beta };
        p.validate()?;
        Ok(p)
    }

    pub fn uniform(n: usize, beta: f64) -> Result<Self> {
        Self::new(vec![beta; n])
    }

    /// `β_left` on the sites left of `split`, `β_right` from `split` on.
    pub fn step(n: usize, split: usize, left: f64, right: f64) -> Result<Self> {
        Self::new((0..n).map(|i| if i < split { left } else { right }).collect())
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = BETA_RANGE;
        if let Some(b) = self.beta.iter().find(|b| !(**b >= lo && **b <= hi)) {
            return Err(Error::InvalidParameter(format!(
                "inverse temperature {b} outside [{lo}, {hi}]"
            )));
        }
        Ok(())
    }
}

/// Exact samples of the harmonic Gibbs measure: `[p,ψ_k] ~ N(0,1)` and
/// `[q,ψ_k] ~ N(0, 1/ν_k²)` independently.
pub fn sample_harmonic(es: &EigenSystem, n: usize, stream: StreamId) -> Vec<ChainState> {
    let mut rng = stream.rng();
    (0..n)
        .map(|_| {
            let c: Vec<f64> = es
                .nu
                .iter()
                .map(|nu| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    z / nu
                })
                .collect();
            let s: Vec<f64> = (0..es.dim()).map(|_| StandardNormal.sample(&mut rng)).collect();
            ChainState {
                q: es.reconstruct(&c),
                p: es.reconstruct(&s),
                t: 0.0,
            }
        })
        .collect()
}

/// Draws from `∝ exp(-(α q²/2 + γ q + κ q⁴/4))`.
pub fn sample_conditional<R: Rng>(rng: &mut R, alpha: f64, gamma: f64, kappa: f64) -> Result<f64> {
    let mean = -gamma / alpha;
    let sd = alpha.sqrt().recip();
    if kappa == 0.0 {
        let z: f64 = StandardNormal.sample(rng);
        return Ok(mean + sd * z);
    }
    for _ in 0..MAX_ENVELOPE_ATTEMPTS {
        let z: f64 = StandardNormal.sample(rng);
        let q = mean + sd * z;
        let q2 = q * q;
        let u: f64 = rng.random();
        if u < (-0.25 * kappa * q2 * q2).exp() {
            return Ok(q);
        }
    }
    Err(Error::EnvelopeFailure {
        alpha,
        gamma,
        quartic: kappa,
        attempts: MAX_ENVELOPE_ATTEMPTS,
    })
}

/// One left-to-right heat-bath sweep for `∝ Π_x e^{-β_x H_x}`.
fn sweep(q: &mut [f64], r: &DisorderRealization, lambda: f64, beta: &[f64], rng: &mut ChaCha8Rng) -> Result<()> {
    let n = q.len();
    let eta = r.eta;
    for i in 0..n {
        let mut alpha = beta[i] * r.omega_sq[i];
        let mut gamma = 0.0;
        if i + 1 < n {
            alpha += beta[i] * eta;
            gamma -= beta[i] * eta * q[i + 1];
        }
        if i > 0 {
            alpha += beta[i - 1] * eta;
            gamma -= beta[i - 1] * eta * q[i - 1];
        }
        q[i] = sample_conditional(rng, alpha, gamma, beta[i] * lambda)?;
    }
    Ok(())
}

fn run_chain(
    r: &DisorderRealization,
    lambda: f64,
    beta: &[f64],
    cfg: &SamplerConfig,
    stream: StreamId,
) -> Result<Vec<ChainState>> {
    cfg.validate()?;
    if !(lambda >= 0.0) {
        return Err(Error::InvalidParameter(format!("lambda = {lambda} must be >= 0")));
    }
    let n = r.len();
    let mut rng = stream.rng();
    let mut q = vec![0.0; n];
    for _ in 0..cfg.burn_in {
        sweep(&mut q, r, lambda, beta, &mut rng)?;
    }
    let mut out = Vec::with_capacity(cfg.n_samples);
    for _ in 0..cfg.n_samples {
        for _ in 0..cfg.thinning {
            sweep(&mut q, r, lambda, beta, &mut rng)?;
        }
        let p = beta
            .iter()
            .map(|b| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z / b.sqrt()
            })
            .collect::<Vec<f64>>();
        out.push(ChainState { q: q.clone(), p, t: 0.0 });
    }
    Ok(out)
}

/// `n_samples` thinned states of one heat-bath chain started at `q = 0`.
pub fn sample_gibbs(
    realization: &DisorderRealization,
    lambda: f64,
    cfg: &SamplerConfig,
    stream: StreamId,
) -> Result<Vec<ChainState>> {
    run_chain(realization, lambda, &vec![1.0; realization.len()], cfg, stream)
}

/// Independent chains in parallel; chain `c` uses `stream.child(c)`.
pub fn sample_gibbs_chains(
    realization: &DisorderRealization,
    lambda: f64,
    cfg: &SamplerConfig,
    stream: StreamId,
    chains: usize,
) -> Result<Vec<Vec<ChainState>>> {
    (0..chains)
        .into_par_iter()
        .map(|c| sample_gibbs(realization, lambda, cfg, stream.child(c)))
        .collect()
}

/// States of the product measure `∝ Π_x e^{-β_x H_x}`, using the same kernel.
pub fn sample_noneq(
    realization: &DisorderRealization,
    lambda: f64,
    profile: &NoneqProfile,
    cfg: &SamplerConfig,
    stream: StreamId,
) -> Result<Vec<ChainState>> {
    profile.validate()?;
    if profile.beta.len() != realization.len() {
        return Err(Error::LengthMismatch {
            expected: realization.len(),
            got: profile.beta.len(),
        });
    }
    run_chain(realization, lambda, &profile.beta, cfg, stream)
}

/// Unbiased covariance of paired samples and its jackknife standard error.
///
/// The leave-one-out estimates are computed in closed form from running sums
/// of the centred data, so the cost is linear in the sample count.
pub fn covariance_of(f: &[f64], g: &[f64]) -> Result<(f64, f64)> {
    if f.len() != g.len() {
        return Err(Error::LengthMismatch {
            expected: f.len(),
            got: g.len(),
        });
    }
    let n = f.len();
    if n < 2 {
        return Err(Error::EmptyEnsemble);
    }
    let mf = f.iter().sum::<f64>() / n as f64;
    let mg = g.iter().sum::<f64>() / n as f64;
    let mut sfg = 0.0;
    for (a, b) in f.iter().zip(g) {
        sfg += (a - mf) * (b - mg);
    }
    let cov = sfg / (n - 1) as f64;
    if n < 3 {
        return Ok((cov, f64::NAN));
    }
    // centred sums: Σ df = Σ dg = 0
    let nm = (n - 1) as f64;
    let loo: Vec<f64> = f
        .iter()
        .zip(g)
        .map(|(a, b)| {
            let (df, dg) = (a - mf, b - mg);
            let s = sfg - df * dg;
            let (sf, sg) = (-df, -dg);
            (s - sf * sg / nm) / (nm - 1.0)
        })
        .collect();
    Ok((cov, crate::stats::jackknife_stderr(&loo)))
}

/// `⟨f; g⟩` over a set of states with jackknife standard error.
pub fn covariance<F, G>(states: &[ChainState], f: F, g: G) -> Result<(f64, f64)>
where
    F: Fn(&ChainState) -> f64,
    G: Fn(&ChainState) -> f64,
{
    let fv: Vec<f64> = states.iter().map(&f).collect();
    let gv: Vec<f64> = states.iter().map(&g).collect();
    covariance_of(&fv, &gv)
}

/// Integrated autocorrelation time of a scalar observable along one chain.
pub fn autocorrelation_time<F: Fn(&ChainState) -> f64>(chain: &[ChainState], f: F) -> f64 {
    let series: Vec<f64> = chain.iter().map(f).collect();
    integrated_autocorrelation_time(&series)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::mode_energies;
    use crate::labels;
    use crate::model::{force, sample_disorder, DisorderLaw, Interval, ModelConfig};
    use crate::rng::derive_stream;
    use crate::stats::mean_stderr;
    use rand::SeedableRng;

    fn realization(half: i64, eta: f64, seed: u64) -> DisorderRealization {
        let cfg = ModelConfig::new(half, eta, 0.0, DisorderLaw::default(), seed);
        sample_disorder(&cfg, cfg.lattice(), derive_stream(seed, &labels!["gibbs-test"])).unwrap()
    }

    fn within(samples: &[f64], target: f64, sigmas: f64) -> bool {
        let (m, se) = mean_stderr(samples);
        (m - target).abs() <= sigmas * se
    }

    #[test]
    fn harmonic_moments() {
        let r = realization(4, 1.0, 1);
        let es = EigenSystem::of(&r).unwrap();
        let states = sample_harmonic(&es, 100_000, derive_stream(1, &labels!["harmonic"]));
        for x in 0..r.len() {
            let p2: Vec<f64> = states.iter().map(|s| s.p[x] * s.p[x]).collect();
            assert!(within(&p2, 1.0, 3.0), "site {x}");
        }
        for k in 0..es.dim() {
            let c2: Vec<f64> = states.iter().map(|s| es.project(&s.q)[k].powi(2)).collect();
            assert!(within(&c2, 1.0 / es.nu_sq[k], 3.0), "mode {k}");
        }
        let cross: Vec<f64> = states
            .iter()
            .map(|s| {
                let c = es.project(&s.q);
                c[0] * c[3]
            })
            .collect();
        assert!(within(&cross, 0.0, 3.0));
    }

    #[test]
    fn conditional_sampler_matches_density() {
        // E[q²] for exp(-(q²/2 + q⁴/4)) by quadrature.
        let dens = |q: f64| (-(0.5 * q * q + 0.25 * q.powi(4))).exp();
        let h = 1e-3;
        let (mut z, mut m2) = (0.0, 0.0);
        for i in -8000..=8000 {
            let q = i as f64 * h;
            z += dens(q);
            m2 += q * q * dens(q);
        }
        let exact = m2 / z;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let xs: Vec<f64> = (0..100_000)
            .map(|_| sample_conditional(&mut rng, 1.0, 0.0, 1.0).unwrap().powi(2))
            .collect();
        assert!(within(&xs, exact, 3.0));
    }

    #[test]
    fn envelope_failure_is_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let e = sample_conditional(&mut rng, 1e-6, -1e3, 1e6).unwrap_err();
        assert!(matches!(e, Error::EnvelopeFailure { .. }));
    }

    #[test]
    fn mcmc_matches_exact_sampler_at_zero_lambda() {
        let r = realization(5, 1.0, 2);
        let es = EigenSystem::of(&r).unwrap();
        let exact = sample_harmonic(&es, 20_000, derive_stream(2, &labels!["exact"]));
        let cfg = SamplerConfig::new(200, 5, 400).unwrap();
        let chains = sample_gibbs_chains(&r, 0.0, &cfg, derive_stream(2, &labels!["mcmc"]), 50).unwrap();
        for x in 0..r.len() {
            let a: Vec<f64> = exact.iter().map(|s| s.q[x] * s.q[x]).collect();
            // chain means are independent; use them for the standard error
            let b: Vec<f64> = chains
                .iter()
                .map(|c| c.iter().map(|s| s.q[x] * s.q[x]).sum::<f64>() / c.len() as f64)
                .collect();
            let (ma, sa) = mean_stderr(&a);
            let (mb, sb) = mean_stderr(&b);
            assert!((ma - mb).abs() <= 3.0 * (sa * sa + sb * sb).sqrt(), "site {x}: {ma} vs {mb}");
        }
    }

    #[test]
    fn virial_and_parity_under_anharmonicity() {
        let r = realization(5, 1.0, 3);
        let cfg = SamplerConfig::new(200, 5, 200).unwrap();
        let chains = sample_gibbs_chains(&r, 0.2, &cfg, derive_stream(3, &labels!["virial"]), 60).unwrap();
        for x in 0..r.len() {
            let vir: Vec<f64> = chains
                .iter()
                .map(|c| {
                    c.iter()
                        .map(|s| -s.q[x] * force(s, &r, 0.2).unwrap()[x])
                        .sum::<f64>()
                        / c.len() as f64
                })
                .collect();
            assert!(within(&vir, 1.0, 3.0), "virial at {x}");
            let odd: Vec<f64> = chains
                .iter()
                .map(|c| c.iter().map(|s| s.q[x]).sum::<f64>() / c.len() as f64)
                .collect();
            assert!(within(&odd, 0.0, 3.0), "parity at {x}");
        }
    }

    #[test]
    fn covariance_cases() {
        let c = covariance_of(&[2.0; 10], &[2.0; 10]).unwrap();
        assert_eq!(c, (0.0, 0.0));
        assert!(covariance_of(&[1.0], &[1.0]).is_err());
        // jackknife closed form against explicit leave-one-out
        let f = [1.0, 4.0, 2.0, 8.0, 5.0];
        let g = [0.5, 1.0, -2.0, 3.0, 1.5];
        let (cov, se) = covariance_of(&f, &g).unwrap();
        let naive = |f: &[f64], g: &[f64]| {
            let n = f.len() as f64;
            let mf = f.iter().sum::<f64>() / n;
            let mg = g.iter().sum::<f64>() / n;
            f.iter().zip(g).map(|(a, b)| (a - mf) * (b - mg)).sum::<f64>() / (n - 1.0)
        };
        assert!((cov - naive(&f, &g)).abs() < 1e-14);
        let loo: Vec<f64> = (0..5)
            .map(|i| {
                let ff: Vec<f64> = f.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, v)| *v).collect();
                let gg: Vec<f64> = g.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, v)| *v).collect();
                naive(&ff, &gg)
            })
            .collect();
        assert!((se - crate::stats::jackknife_stderr(&loo)).abs() < 1e-13);
    }

    #[test]
    fn mode_energy_is_exponential() {
        let r = realization(3, 1.0, 5);
        let es = EigenSystem::of(&r).unwrap();
        let states = sample_harmonic(&es, 50_000, derive_stream(5, &labels!["ek"]));
        let ek: Vec<f64> = states.iter().map(|s| mode_energies(s, &es).unwrap()[2]).collect();
        let (var, se) = covariance_of(&ek, &ek).unwrap();
        assert!((var - 1.0).abs() <= 3.0 * se, "{var} ± {se}");
    }

    #[test]
    fn noneq_profiles() {
        let r = DisorderRealization::new(Interval::new(0, 5).unwrap(), vec![1.0; 6], 0.0).unwrap();
        let cfg = SamplerConfig::new(10, 1, 20_000).unwrap();
        let flat = sample_noneq(&r, 0.3, &NoneqProfile::uniform(6, 1.0).unwrap(), &cfg, derive_stream(1, &[])).unwrap();
        for x in 0..6 {
            let p2: Vec<f64> = flat.iter().map(|s| s.p[x] * s.p[x]).collect();
            assert!(within(&p2, 1.0, 3.0));
        }
        let r = realization(5, 1.0, 6);
        let prof = NoneqProfile::step(11, 5, 0.5, 2.0).unwrap();
        let st = sample_noneq(&r, 0.1, &prof, &cfg, derive_stream(6, &labels!["step"])).unwrap();
        for x in 0..11 {
            let p2: Vec<f64> = st.iter().map(|s| s.p[x] * s.p[x]).collect();
            assert!(within(&p2, 1.0 / prof.beta[x], 3.0), "site {x}");
        }
        assert!(NoneqProfile::new(vec![1.0, 0.0]).is_err());
        assert!(sample_noneq(&r, 0.1, &NoneqProfile::uniform(3, 1.0).unwrap(), &cfg, derive_stream(6, &[])).is_err());
    }

    #[test]
    fn sampler_is_deterministic() {
        let r = realization(3, 1.0, 7);
        let cfg = SamplerConfig::new(10, 2, 5).unwrap();
        let s = derive_stream(7, &labels!["det"]);
        assert_eq!(sample_gibbs(&r, 0.2, &cfg, s).unwrap(), sample_gibbs(&r, 0.2, &cfg, s).unwrap());
        assert!(SamplerConfig::new(0, 0, 5).is_err());
    }
}
