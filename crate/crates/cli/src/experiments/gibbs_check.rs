//! Samplers against exact Gibbs identities at unit temperature.
//!
//! Params: `harmonic_samples` (100000), `chains` (64), `sampler`
//! (`{burn_in: 1000, thinning: 10, n_samples: 200}`), `lambda` (model value).
//!
//! One disorder draw on the lattice. The exact harmonic sampler is checked
//! mode by mode against `E[q_k²] = 1/ν_k²` and `E[p_k²] = 1`, with
//! `q_k = [q, ψ_k]`. The heat-bath chains at `lambda` are checked site by
//! site against the virial identity `E[q_x ∂H/∂q_x] = 1` and against
//! `E[p_x²] = 1`; standard errors come from the spread of per-chain means.
//!
//! Tables:
//! - `harmonic.csv`: `k,nu_sq,q2,q2_stderr,q2_z,p2,p2_stderr,p2_z`.
//! - `virial.csv`: `x,virial,virial_stderr,virial_z,p2,p2_stderr,p2_z`.

use kgchain_core::gibbs::{sample_gibbs_chains, sample_harmonic, SamplerConfig};
use kgchain_core::model::{force_into, sample_disorder};
use kgchain_core::stats::mean_stderr;
use kgchain_core::{labels, EigenSystem, ModelConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{at_least, validate_sampler, Ctx, Outcome};

/// Harmonic samples drawn per stream.
const CHUNK: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub harmonic_samples: usize,
    pub chains: usize,
    pub sampler: SamplerConfig,
    pub lambda: Option<f64>,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            harmonic_samples: 100_000,
            chains: 64,
            sampler: SamplerConfig {
                burn_in: 1000,
                thinning: 10,
                n_samples: 200,
                proposal: Default::default(),
            },
            lambda: None,
        }
    }
}

#[derive(Serialize)]
struct ModeRow {
    k: usize,
    nu_sq: f64,
    q2: f64,
    q2_stderr: f64,
    q2_z: f64,
    p2: f64,
    p2_stderr: f64,
    p2_z: f64,
}

#[derive(Serialize)]
struct SiteRow {
    x: i64,
    virial: f64,
    virial_stderr: f64,
    virial_z: f64,
    p2: f64,
    p2_stderr: f64,
    p2_z: f64,
}

/// Running `Σv` and `Σv²`.
#[derive(Clone, Copy, Default)]
struct Moments {
    n: usize,
    s1: f64,
    s2: f64,
}

impl Moments {
    fn push(&mut self, v: f64) {
        self.n += 1;
        self.s1 += v;
        self.s2 += v * v;
    }

    fn merge(&mut self, o: &Moments) {
        self.n += o.n;
        self.s1 += o.s1;
        self.s2 += o.s2;
    }

    fn mean_stderr(&self) -> (f64, f64) {
        let n = self.n as f64;
        let m = self.s1 / n;
        let var = (self.s2 - n * m * m) / (n - 1.0);
        (m, (var.max(0.0) / n).sqrt())
    }
}

fn z(mean: f64, stderr: f64, target: f64) -> f64 {
    (mean - target) / stderr
}

impl Params {
    fn lambda(&self, model: &ModelConfig) -> f64 {
        self.lambda.unwrap_or(model.lambda)
    }

    pub fn validate(&self, model: &ModelConfig) -> Result<(), String> {
        at_least("harmonic_samples", self.harmonic_samples, 2)?;
        at_least("chains", self.chains, 2)?;
        validate_sampler(&self.sampler)?;
        let l = self.lambda(model);
        if !(l >= 0.0 && l.is_finite()) {
            return Err(format!("lambda = {l} must be >= 0"));
        }
        Ok(())
    }

    pub fn lineage(&self) -> Vec<String> {
        vec![
            "gibbs_check/disorder".into(),
            format!("gibbs_check/harmonic/[0..{})", self.harmonic_samples.div_ceil(CHUNK)),
            format!("gibbs_check/mcmc/<chain [0..{})>", self.chains),
        ]
    }

    pub(crate) fn run(&self, cx: &mut Ctx) -> Outcome {
        let dis = sample_disorder(cx.model, cx.model.lattice(), cx.stream(&labels!["gibbs_check", "disorder"]))?;
        let es = EigenSystem::of(&dis)?;
        let n = es.dim();

        let chunks = self.harmonic_samples.div_ceil(CHUNK);
        let per_chunk: Vec<Vec<[Moments; 2]>> = (0..chunks)
            .into_par_iter()
            .map(|c| {
                let len = CHUNK.min(self.harmonic_samples - c * CHUNK);
                let mut acc = vec![[Moments::default(); 2]; n];
                for st in sample_harmonic(&es, len, cx.stream(&labels!["gibbs_check", "harmonic", c])) {
                    let qk = es.project(&st.q);
                    let pk = es.project(&st.p);
                    for k in 0..n {
                        acc[k][0].push(qk[k] * qk[k]);
                        acc[k][1].push(pk[k] * pk[k]);
                    }
                }
                acc
            })
            .collect();
        let mut modes = vec![[Moments::default(); 2]; n];
        for chunk in &per_chunk {
            for (m, c) in modes.iter_mut().zip(chunk) {
                m[0].merge(&c[0]);
                m[1].merge(&c[1]);
            }
        }
        let mode_rows: Vec<ModeRow> = modes
            .iter()
            .enumerate()
            .map(|(k, m)| {
                let (q2, q2_stderr) = m[0].mean_stderr();
                let (p2, p2_stderr) = m[1].mean_stderr();
                ModeRow {
                    k,
                    nu_sq: es.nu_sq[k],
                    q2,
                    q2_stderr,
                    q2_z: z(q2, q2_stderr, 1.0 / es.nu_sq[k]),
                    p2,
                    p2_stderr,
                    p2_z: z(p2, p2_stderr, 1.0),
                }
            })
            .collect();

        let lambda = self.lambda(cx.model);
        let chains = sample_gibbs_chains(
            &dis,
            lambda,
            &self.sampler,
            cx.stream(&labels!["gibbs_check", "mcmc"]),
            self.chains,
        )?;
        // per-chain means of q_x ∂H/∂q_x and p_x²
        let chain_means: Vec<(Vec<f64>, Vec<f64>)> = chains
            .iter()
            .map(|chain| {
                let mut vir = vec![0.0; n];
                let mut p2 = vec![0.0; n];
                let mut f = vec![0.0; n];
                for st in chain {
                    force_into(&st.q, &dis.omega_sq, dis.eta, lambda, &mut f);
                    for i in 0..n {
                        vir[i] -= st.q[i] * f[i];
                        p2[i] += st.p[i] * st.p[i];
                    }
                }
                let m = chain.len() as f64;
                (vir.iter().map(|v| v / m).collect(), p2.iter().map(|v| v / m).collect())
            })
            .collect();
        let site_rows: Vec<SiteRow> = (0..n)
            .map(|i| {
                let v: Vec<f64> = chain_means.iter().map(|c| c.0[i]).collect();
                let p: Vec<f64> = chain_means.iter().map(|c| c.1[i]).collect();
                let (virial, virial_stderr) = mean_stderr(&v);
                let (p2, p2_stderr) = mean_stderr(&p);
                SiteRow {
                    x: dis.interval.site(i),
                    virial,
                    virial_stderr,
                    virial_z: z(virial, virial_stderr, 1.0),
                    p2,
                    p2_stderr,
                    p2_z: z(p2, p2_stderr, 1.0),
                }
            })
            .collect();

        let max_abs = |it: &mut dyn Iterator<Item = f64>| it.fold(0.0f64, |a, b| a.max(b.abs()));
        let summary = serde_json::json!({
            "sites": n,
            "harmonic_samples": self.harmonic_samples,
            "lambda": lambda,
            "chains": self.chains,
            "samples_per_chain": self.sampler.n_samples,
            "harmonic_q2_max_z": max_abs(&mut mode_rows.iter().map(|r| r.q2_z)),
            "harmonic_p2_max_z": max_abs(&mut mode_rows.iter().map(|r| r.p2_z)),
            "virial_max_z": max_abs(&mut site_rows.iter().map(|r| r.virial_z)),
            "momentum_max_z": max_abs(&mut site_rows.iter().map(|r| r.p2_z)),
        });
        cx.table("harmonic.csv", mode_rows)?;
        cx.table("virial.csv", site_rows)?;
        Ok(summary)
    }
}
