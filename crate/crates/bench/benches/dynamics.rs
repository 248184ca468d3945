use criterion::{criterion_group, criterion_main, Criterion};
use kgchain_bench::realization;
use kgchain_core::dynamics::{Integrator, IntegratorConfig, Scheme};
use kgchain_core::gibbs::{sample_gibbs, SamplerConfig};
use kgchain_core::{derive_stream, labels, ChainState};

fn integrators(c: &mut Criterion) {
    let r = realization(50);
    let mut group = c.benchmark_group("integrator_1000_steps");
    for scheme in [Scheme::Verlet, Scheme::Yoshida4] {
        let cfg = IntegratorConfig::for_realization(0.02, scheme, 20.0, &r).unwrap();
        let mut s0 = ChainState::zeros(r.len());
        s0.p[r.len() / 2] = 1.0;
        group.bench_function(format!("{scheme:?}"), |b| {
            b.iter(|| {
                let mut st = s0.clone();
                Integrator::new(&r, 0.1, cfg).unwrap().run(&mut st, 1000, |_| Ok(())).unwrap();
                st
            })
        });
    }
    group.finish();
}

fn heat_bath(c: &mut Criterion) {
    let r = realization(30);
    let cfg = SamplerConfig::new(0, 1, 100).unwrap();
    c.bench_function("heat_bath_100_sweeps", |b| {
        b.iter(|| sample_gibbs(&r, 0.2, &cfg, derive_stream(1, &labels!["bench_mcmc"])).unwrap())
    });
}

criterion_group!(benches, integrators, heat_bath);
criterion_main!(benches);
