//! Shared fixtures for the benchmarks.

use kgchain_core::model::sample_disorder;
use kgchain_core::{derive_stream, labels, DisorderLaw, DisorderRealization, EigenSystem, Interval, ModelConfig};

pub fn model(half: i64, lambda: f64) -> ModelConfig {
    ModelConfig::new(half, 1.0, lambda, DisorderLaw::Uniform { lo: 0.5, hi: 1.5 }, 1)
}

/// Disorder on `[-half, half]` for the default law.
pub fn realization(half: i64) -> DisorderRealization {
    let m = model(half, 0.0);
    sample_disorder(&m, m.lattice(), derive_stream(1, &labels!["bench", half as u64])).expect("valid disorder")
}

/// Disorder and eigensystem on the centred interval of `n` sites.
pub fn system(n: usize) -> (DisorderRealization, EigenSystem) {
    let a = -((n / 2) as i64);
    let iv = Interval::new(a, a + n as i64 - 1).expect("non-empty interval");
    let m = model(n as i64, 0.0);
    let r = sample_disorder(&m, iv, derive_stream(1, &labels!["bench", "system", n])).expect("valid disorder");
    let es = EigenSystem::of(&r).expect("eigensolver converges");
    (r, es)
}
