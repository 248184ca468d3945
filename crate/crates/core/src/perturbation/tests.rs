use num_complex::Complex64;
use proptest::prelude::{prop_assert, proptest, ProptestConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::ledger::{compare_terms, predicted_terms, source_coefficient, write_jsonl, TermRecord};
use super::*;
use crate::dynamics::mode_energy;
use crate::model::{harmonic_energy, ChainState, DisorderRealization, Interval};
use crate::spectral::tests::random_system;
use crate::spectral::EigenSystem;

fn gaussian_state(n: usize, rng: &mut ChaCha8Rng) -> ChainState {
    let q = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let p = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    ChainState::new(q, p).unwrap()
}

fn two_site() -> EigenSystem {
    let r = DisorderRealization::new(Interval::new(0, 1).unwrap(), vec![0.7, 1.4], 1.0).unwrap();
    EigenSystem::of(&r).unwrap()
}

fn i() -> Complex64 {
    Complex64::new(0.0, 1.0)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

// ---- mode coordinates ----

#[test]
fn zero_momentum_gives_real_modes() {
    let (_, es) = random_system(3, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut st = gaussian_state(es.dim(), &mut rng);
    st.p.iter_mut().for_each(|p| *p = 0.0);
    for a in to_modes(&st, &es).unwrap() {
        assert!(a.im.abs() < 1e-15);
    }
}

#[test]
fn mode_roundtrip() {
    let (_, es) = random_system(4, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..100 {
        let st = gaussian_state(es.dim(), &mut rng);
        let back = from_modes(&to_modes(&st, &es).unwrap(), &es).unwrap();
        for x in 0..es.dim() {
            assert!((back.q[x] - st.q[x]).abs() <= 1e-12);
            assert!((back.p[x] - st.p[x]).abs() <= 1e-12);
        }
    }
}

#[test]
fn harmonic_energy_in_modes() {
    let (r, es) = random_system(4, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let st = gaussian_state(es.dim(), &mut rng);
        let a = to_modes(&st, &es).unwrap();
        let e: f64 = a.iter().zip(&es.nu).map(|(a, nu)| nu * a.norm_sqr()).sum();
        assert!(rel(e, harmonic_energy(&st, &r).unwrap()) < 1e-12);
    }
}

#[test]
fn single_site_quartic() {
    let w2 = 1.7;
    let r = DisorderRealization::new(Interval::new(0, 0).unwrap(), vec![w2], 1.0).unwrap();
    let es = EigenSystem::of(&r).unwrap();
    assert!(rel(anharmonic_coefficient(&es, [0; 4]), 1.0 / (16.0 * w2)) < 1e-14);
    let h = anharmonic_polynomial(&es);
    // (a⁺ + a⁻)⁴ expands to 5 sorted monomials with multiplicities 1, 4, 6, 4, 1
    assert_eq!(h.len(), 5);
    let st = ChainState::new(vec![0.8], vec![-0.3]).unwrap();
    assert!(rel(h.evaluate(&st, &es).unwrap(), 0.8f64.powi(4) / 4.0) < 1e-13);
}

#[test]
fn anharmonic_polynomial_is_onsite_quartic() {
    let (_, es) = random_system(2, 4);
    let h = anharmonic_polynomial(&es);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..20 {
        let st = gaussian_state(es.dim(), &mut rng);
        let direct: f64 = st.q.iter().map(|q| q.powi(4) / 4.0).sum();
        assert!(rel(h.evaluate(&st, &es).unwrap(), direct) < 1e-12);
    }
}

#[test]
fn tensor_symmetry_and_pointwise_agreement() {
    let (_, es) = random_system(3, 5);
    let t = AnharmonicTensor::full(&es);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let k: [usize; 4] = std::array::from_fn(|_| rng.random_range(0..es.dim()));
        let v = anharmonic_coefficient(&es, k);
        assert!((t.get(k[0], k[1], k[2], k[3]) - v).abs() < 1e-15);
        assert!((anharmonic_coefficient(&es, [k[2], k[0], k[3], k[1]]) - v).abs() < 1e-15);
    }
}

#[test]
fn gauge_flip_changes_odd_couplings_only() {
    let (_, es) = random_system(2, 6);
    let mut flip = vec![false; es.dim()];
    flip[1] = true;
    let g = es.with_flipped_signs(&flip);
    let a = anharmonic_coefficient(&es, [1, 1, 2, 3]);
    assert!((anharmonic_coefficient(&g, [1, 1, 2, 3]) - a).abs() < 1e-15);
    let b = anharmonic_coefficient(&es, [1, 2, 3, 4]);
    assert!((anharmonic_coefficient(&g, [1, 2, 3, 4]) + b).abs() < 1e-15);
}

// ---- polynomials ----

#[test]
fn monomial_canonical_form() {
    let m = ModeMonomial::new(&[(2, 1), (0, -1), (2, -1), (0, -1)]);
    assert_eq!(m.to_pairs(), vec![(0, -1), (0, -1), (2, -1), (2, 1)]);
    assert_eq!(m, ModeMonomial::new(&[(0, -1), (2, 1), (0, -1), (2, -1)]));
    assert_eq!(m.orderings(), 12);
    assert!(!m.is_pairable());
    assert!(ModeMonomial::new(&[(1, 1), (3, -1), (1, -1), (3, 1)]).is_pairable());
    assert_eq!(m.flipped().to_pairs(), vec![(0, 1), (0, 1), (2, -1), (2, 1)]);
    assert_eq!(m.to_string(), "a-0*a-0*a-2*a+2");
}

#[test]
fn elementary_bracket_signs() {
    let ap = ModePolynomial::monomial(ModeMonomial::new(&[(0, 1)]), Complex64::new(1.0, 0.0));
    let am = ModePolynomial::monomial(ModeMonomial::new(&[(0, -1)]), Complex64::new(1.0, 0.0));
    let b = bracket(&ap, &am);
    assert_eq!(b.len(), 1);
    assert_eq!(b.coefficient(&ModeMonomial::default()), -i());
    assert_eq!(bracket(&am, &ap).coefficient(&ModeMonomial::default()), i());
    assert!(bracket(&ap, &ap).is_empty());
    let other = ModePolynomial::monomial(ModeMonomial::new(&[(1, -1)]), Complex64::new(1.0, 0.0));
    assert!(bracket(&ap, &other).is_empty());
}

fn random_real_poly(es: &EigenSystem, rng: &mut ChaCha8Rng, terms: usize, max_deg: usize) -> ModePolynomial {
    // sum of c·a^M + conj(c)·a^{flip M} is real
    let mut p = ModePolynomial::zero();
    for _ in 0..terms {
        let d = rng.random_range(1..=max_deg);
        let f: Vec<(usize, Sign)> = (0..d)
            .map(|_| (rng.random_range(0..es.dim()), if rng.random::<bool>() { 1 } else { -1 }))
            .collect();
        let m = ModeMonomial::new(&f);
        let c = Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
        p.add_term(m.flipped(), c.conj());
        p.add_term(m, c);
    }
    p
}

fn explicit_bracket(a: &ModePolynomial, b: &ModePolynomial, st: &ChainState, es: &EigenSystem) -> f64 {
    let (aq, ap) = a.gradient(st, es).unwrap();
    let (bq, bp) = b.gradient(st, es).unwrap();
    expansion::poisson(&ap, &aq, &bq, &bp)
}

#[test]
fn merged_bracket_matches_gradient_bracket() {
    let (_, es) = random_system(2, 7);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..20 {
        let a = random_real_poly(&es, &mut rng, 6, 4);
        let b = random_real_poly(&es, &mut rng, 6, 4);
        let st = gaussian_state(es.dim(), &mut rng);
        let merged = bracket(&a, &b).evaluate(&st, &es).unwrap();
        let direct = explicit_bracket(&a, &b, &st, &es);
        assert!((merged - direct).abs() <= 1e-10 * (1.0 + direct.abs()), "{merged} vs {direct}");
    }
}

#[test]
fn gradient_matches_finite_differences() {
    let (_, es) = random_system(2, 8);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let h = 1e-5;
    for _ in 0..50 {
        let p = random_real_poly(&es, &mut rng, 4, 4);
        let st = gaussian_state(es.dim(), &mut rng);
        let (gq, gp) = p.gradient(&st, &es).unwrap();
        for x in 0..es.dim() {
            for (which, g) in [(0, gq[x]), (1, gp[x])] {
                let (mut a, mut b) = (st.clone(), st.clone());
                if which == 0 {
                    a.q[x] += h;
                    b.q[x] -= h;
                } else {
                    a.p[x] += h;
                    b.p[x] -= h;
                }
                let fd = (p.evaluate(&a, &es).unwrap() - p.evaluate(&b, &es).unwrap()) / (2.0 * h);
                assert!((fd - g).abs() <= 1e-6 * (1.0 + g.abs()), "fd {fd} vs {g}");
            }
        }
    }
}

#[test]
fn quadratic_mode_polynomial() {
    let (_, es) = random_system(3, 9);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let st = gaussian_state(es.dim(), &mut rng);
    let k = 2;
    let nk = es.nu[k];
    let ek = ModePolynomial::monomial(ModeMonomial::new(&[(k, 1), (k, -1)]), Complex64::new(nk, 0.0));
    assert!(rel(ek.evaluate(&st, &es).unwrap(), mode_energy(&st, &es, k).unwrap()) < 1e-12);
    // a⁺a⁻ = E_k/ν_k: ∇_q = ν_k c_k ψ_k, ∇_p = s_k ψ_k / ν_k
    let n = ModePolynomial::monomial(ModeMonomial::new(&[(k, 1), (k, -1)]), Complex64::new(1.0, 0.0));
    let (gq, gp) = n.gradient(&st, &es).unwrap();
    let c = es.project(&st.q)[k];
    let s = es.project(&st.p)[k];
    for x in 0..es.dim() {
        assert!((gq[x] - nk * c * es.psi(k)[x]).abs() < 1e-12);
        assert!((gp[x] - s * es.psi(k)[x] / nk).abs() < 1e-12);
    }
    assert_eq!(ModePolynomial::zero().evaluate(&st, &es).unwrap(), 0.0);
    let doubled = ek.scaled(Complex64::new(2.0, 0.0)).evaluate(&st, &es).unwrap();
    assert!(rel(doubled, 2.0 * ek.evaluate(&st, &es).unwrap()) < 1e-15);
    let (cq, cp) = ModePolynomial::constant(Complex64::new(3.0, 0.0)).gradient(&st, &es).unwrap();
    assert!(cq.iter().chain(&cp).all(|v| *v == 0.0));
}

#[test]
fn non_real_polynomial_is_rejected() {
    let (_, es) = random_system(1, 10);
    let p = ModePolynomial::monomial(ModeMonomial::new(&[(0, 1)]), Complex64::new(1.0, 0.0));
    let st = ChainState::new(vec![0.0, 0.0, 0.0], vec![1.0, 1.0, 1.0]).unwrap();
    assert!(p.evaluate(&st, &es).is_err());
}

// ---- sources and cohomology ----

#[test]
fn current_source_matches_direct_formula() {
    let (r, es) = random_system(3, 11);
    let src = Source::Current { x0: 1 };
    let f = source_f1(&src, &es, r.eta).unwrap();
    assert_eq!(f.degrees(), vec![2]);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        let st = gaussian_state(es.dim(), &mut rng);
        let direct = r.eta * (st.q[3] - st.q[4]) * st.p[4];
        assert!(rel(f.evaluate(&st, &es).unwrap(), direct) <= 1e-12);
        assert!(rel(src.direct_value(&st, &es, r.eta).unwrap(), direct) < 1e-15);
    }
    assert!(source_f1(&Source::Current { x0: -3 }, &es, 1.0).is_err());
}

#[test]
fn mode_source_matches_gradient_bracket() {
    let (_, es) = random_system(2, 12);
    let k0 = 2;
    let f = source_f1(&Source::ModeEnergy { k0 }, &es, 1.0).unwrap();
    assert_eq!(f.degrees(), vec![4]);
    let h_an = anharmonic_polynomial(&es);
    let e = ModePolynomial::monomial(ModeMonomial::new(&[(k0, 1), (k0, -1)]), Complex64::new(es.nu[k0], 0.0));
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..30 {
        let st = gaussian_state(es.dim(), &mut rng);
        let oracle = explicit_bracket(&h_an, &e, &st, &es);
        assert!(rel(f.evaluate(&st, &es).unwrap(), oracle) <= 1e-10);
        let direct = Source::ModeEnergy { k0 }.direct_value(&st, &es, 1.0).unwrap();
        assert!(rel(direct, oracle) <= 1e-10);
    }
}

#[test]
fn sources_avoid_pairable_monomials_and_are_antisymmetric() {
    let (_, es) = random_system(2, 13);
    for src in [Source::Current { x0: 0 }, Source::ModeEnergy { k0: 1 }] {
        let f = source_f1(&src, &es, 1.0).unwrap();
        assert!(f.terms.keys().all(|m| !m.is_pairable()));
        assert!(f.sigma_parity_defect(-1.0) < 1e-12);
    }
}

#[test]
fn cohomology_one_term() {
    let (_, es) = random_system(2, 14);
    assert!(solve_cohomological(&ModePolynomial::zero(), &es).unwrap().is_empty());
    let m = ModeMonomial::new(&[(1, 1), (2, 1)]);
    let u = solve_cohomological(&ModePolynomial::monomial(m.clone(), Complex64::new(1.0, 0.0)), &es).unwrap();
    let expect = i() / (es.nu[1] + es.nu[2]);
    assert!((u.coefficient(&m) - expect).norm() < 1e-15);
}

#[test]
fn near_resonance_aborts() {
    let r = DisorderRealization::new(Interval::new(0, 1).unwrap(), vec![1.0, 1.0], 0.0).unwrap();
    let es = EigenSystem::of(&r).unwrap();
    let m = ModeMonomial::new(&[(0, 1), (1, -1)]);
    let err = solve_cohomological(&ModePolynomial::monomial(m, Complex64::new(1.0, 0.0)), &es).unwrap_err();
    assert!(matches!(err, crate::Error::NearResonance { .. }));
    let pairable = ModeMonomial::new(&[(0, 1), (0, -1)]);
    assert!(solve_cohomological(&ModePolynomial::monomial(pairable, Complex64::new(1.0, 0.0)), &es).is_err());
}

#[test]
fn cohomology_identity_every_order() {
    let (_, es) = random_system(2, 15);
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for src in [Source::Current { x0: 1 }, Source::ModeEnergy { k0: 0 }] {
        let exp = build_expansion(src, &es, 1.0, 2, DEFAULT_BRACKET_BUDGET).unwrap();
        for (f, u) in exp.f.iter().zip(&exp.u) {
            for _ in 0..20 {
                let st = gaussian_state(es.dim(), &mut rng);
                let fv = f.evaluate(&st, &es).unwrap();
                let hb = harmonic_bracket(u, &st, &es).unwrap();
                assert!((fv + hb).abs() <= 1e-10 * (fv.abs() + hb.abs()), "{fv} vs {hb}");
            }
        }
    }
}

#[test]
fn bracket_with_anharmonic_oracles() {
    let (_, es) = random_system(2, 16);
    let h_an = anharmonic_polynomial(&es);
    let c = ModePolynomial::constant(Complex64::new(2.5, 0.0));
    assert!(bracket_with_anharmonic(&c, &h_an, DEFAULT_BRACKET_BUDGET).unwrap().is_empty());
    let f1 = source_f1(&Source::Current { x0: 0 }, &es, 1.0).unwrap();
    let u1 = solve_cohomological(&f1, &es).unwrap();
    let f2 = bracket_with_anharmonic(&u1, &h_an, DEFAULT_BRACKET_BUDGET).unwrap();
    assert_eq!(f2.degrees(), vec![4]);
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    for _ in 0..50 {
        let st = gaussian_state(es.dim(), &mut rng);
        let oracle = explicit_bracket(&h_an, &u1, &st, &es);
        assert!(rel(f2.evaluate(&st, &es).unwrap(), oracle) <= 1e-9);
    }
    assert!(matches!(
        bracket_with_anharmonic(&u1, &h_an, 10),
        Err(crate::Error::BudgetExceeded { .. })
    ));
}

#[test]
fn commutator_residual_small_chain() {
    let (_, es) = random_system(1, 17);
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for src in [Source::Current { x0: 0 }, Source::ModeEnergy { k0: 1 }] {
        for n in 1..=3 {
            let exp = build_expansion(src, &es, 1.0, n, DEFAULT_BRACKET_BUDGET).unwrap();
            let degrees: Vec<Vec<usize>> = (0..=n).map(|i| vec![src.degree() + 2 * i]).collect();
            assert_eq!(exp.degrees(), degrees);
            for u in &exp.u {
                assert!(u.sigma_parity_defect(1.0) < 1e-12);
            }
            for f in &exp.f {
                assert!(f.sigma_parity_defect(-1.0) < 1e-12);
                assert!(f.terms.keys().all(|m| !m.is_pairable()));
            }
            for _ in 0..20 {
                let st = gaussian_state(es.dim(), &mut rng);
                let r = exp.residual(&st, &es, 0.1).unwrap();
                assert!(r.relative <= 1e-8, "{src:?} n={n}: {r:?}");
            }
        }
    }
}

#[test]
fn first_order_harmonic_branch() {
    let (_, es) = random_system(2, 18);
    let exp = build_expansion(Source::ModeEnergy { k0: 3 }, &es, 1.0, 1, DEFAULT_BRACKET_BUDGET).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    for _ in 0..20 {
        let st = gaussian_state(es.dim(), &mut rng);
        let r = exp.residual(&st, &es, 0.0).unwrap();
        assert_eq!(r.remainder, 0.0);
        assert!(r.relative <= 1e-10);
    }
}

// ---- ledger ----

fn exact(order: usize) -> LedgerConfig {
    LedgerConfig {
        order,
        eta: 1.0,
        mode: LedgerMode::default(),
    }
}

#[test]
fn ledger_merges_to_recursion() {
    let es2 = two_site();
    let (_, es3) = random_system(1, 19);
    for (src, es, n) in [
        (Source::Current { x0: 1 }, &es2, 2),
        (Source::Current { x0: 0 }, &es3, 1),
        (Source::ModeEnergy { k0: 1 }, &es2, 1),
    ] {
        let mut f = vec![ModePolynomial::zero(); n + 1];
        let mut u = vec![ModePolynomial::zero(); n];
        visit_ledger(&src, es, &exact(n), &mut |t| {
            let target = match t.kind {
                TermKind::F => &mut f[t.order - 1],
                TermKind::U => &mut u[t.order - 1],
            };
            target.add_term(t.monomial(), t.coefficient());
            Ok(())
        })
        .unwrap();
        let exp = build_expansion(src, es, 1.0, n, DEFAULT_BRACKET_BUDGET).unwrap();
        for (merged, rec) in f.iter().zip(&exp.f).chain(u.iter().zip(&exp.u)) {
            let scale = rec.max_abs();
            assert!(scale > 0.0);
            for m in rec.terms.keys().chain(merged.terms.keys()) {
                let d = (merged.coefficient(m) - rec.coefficient(m)).norm();
                assert!(d <= 1e-11 * scale, "{src:?} {m}: {d}");
            }
        }
    }
}

#[test]
fn ledger_invariants() {
    let (_, es3) = random_system(1, 20);
    let es2 = two_site();
    for (src, es) in [(Source::Current { x0: 1 }, &es3), (Source::ModeEnergy { k0: 0 }, &es2)] {
        let ledger = build_ledger(src, es, &exact(1)).unwrap();
        let d1 = src.degree();
        let predicted = predicted_terms(d1, es.dim(), 1);
        assert!(ledger.terms.len() as u128 <= predicted);
        for t in &ledger.terms {
            assert_eq!(t.degree(), d1 + 2 * (t.order - 1));
            assert!(!t.monomial().is_pairable());
            assert!(t.denominators.iter().all(|d| *d != 0.0));
            for (j, d) in t.denominators.iter().enumerate() {
                let full = t.full_tuple_denominator(d1, j + 1, &es.nu);
                assert!((d - full).abs() <= 1e-12 * (1.0 + d.abs()));
            }
        }
        let counts: u64 = ledger.stats.f_counts.iter().chain(&ledger.stats.u_counts).sum();
        assert_eq!(counts as usize, ledger.terms.len());
    }
}

#[test]
fn closed_form_matches_recursion_exactly() {
    let es2 = two_site();
    let (_, es3) = random_system(1, 21);
    for (src, es) in [(Source::Current { x0: 1 }, &es3), (Source::ModeEnergy { k0: 0 }, &es2)] {
        let ledger = build_ledger(src, es, &exact(1)).unwrap();
        for order in 1..=2 {
            for kind in [TermKind::F, TermKind::U] {
                if kind == TermKind::U && order == 2 {
                    continue;
                }
                let mut closed = Vec::new();
                visit_closed_form(&src, es, 1.0, order, kind, &mut |t| {
                    closed.push(t.clone());
                    Ok(())
                })
                .unwrap();
                let rec: Vec<ExpansionTerm> = ledger
                    .terms
                    .iter()
                    .filter(|t| t.order == order && t.kind == kind)
                    .cloned()
                    .collect();
                assert!(!rec.is_empty());
                let d = compare_terms(&rec, &closed).expect("same term set");
                assert!(d <= 1e-12, "{src:?} order {order}: {d}");
                let (mut fa, mut fb) = (Fingerprint::default(), Fingerprint::default());
                rec.iter().for_each(|t| fa.add(t));
                closed.iter().for_each(|t| fb.add(t));
                assert!(fa.discrepancy(&fb).unwrap() <= 1e-12);
            }
        }
    }
}

#[test]
fn fingerprint_detects_changes() {
    let (_, es) = random_system(1, 22);
    let ledger = build_ledger(Source::Current { x0: 0 }, &es, &exact(1)).unwrap();
    let mut a = Fingerprint::default();
    let mut b = Fingerprint::default();
    for (j, t) in ledger.terms.iter().enumerate() {
        a.add(t);
        let mut t2 = t.clone();
        if j == 7 {
            t2.numerator *= 1.0 + 1e-6;
        }
        b.add(&t2);
    }
    assert!(a.discrepancy(&b).unwrap() > 1e-12);
    let mut c = a.clone();
    c.add(&ledger.terms[0]);
    assert!(a.discrepancy(&c).is_none());
}

#[test]
fn source_coefficient_agrees_with_term_list() {
    let es = two_site();
    let ledger = build_ledger(Source::ModeEnergy { k0: 1 }, &es, &exact(1)).unwrap();
    for t in ledger.terms.iter().filter(|t| t.order == 1 && t.kind == TermKind::F) {
        let c = source_coefficient(&Source::ModeEnergy { k0: 1 }, &es, 1.0, &t.tuple).unwrap();
        assert!((c - t.numerator).norm() < 1e-15);
    }
}

#[test]
fn budget_and_truncation() {
    let (_, es) = random_system(3, 24);
    let tight = LedgerConfig {
        order: 2,
        eta: 1.0,
        mode: LedgerMode::Exact { cap: 1000 },
    };
    assert!(matches!(
        visit_ledger(&Source::Current { x0: 0 }, &es, &tight, &mut |_| Ok(())),
        Err(crate::Error::BudgetExceeded { .. })
    ));
    let trunc = LedgerConfig {
        order: 1,
        eta: 1.0,
        mode: LedgerMode::Truncated { radius: 1, floor: 1e-4 },
    };
    let mut n = 0u64;
    let stats = visit_ledger(&Source::Current { x0: 0 }, &es, &trunc, &mut |t| {
        assert!(t.tuple.iter().all(|(k, _)| (es.centers[*k]).abs() <= 1));
        n += 1;
        Ok(())
    })
    .unwrap();
    assert!(stats.modes.len() < es.dim());
    assert!(stats.dropped_terms > 0 && stats.dropped_mass > 0.0);
    let full = visit_ledger(&Source::Current { x0: 0 }, &es, &exact(1), &mut |_| Ok(())).unwrap();
    let total: u64 = full.f_counts.iter().chain(&full.u_counts).sum();
    assert!(n < total);
}

#[test]
fn jsonl_export_roundtrip() {
    let (_, es) = random_system(1, 25);
    let ledger = build_ledger(Source::Current { x0: 0 }, &es, &exact(1)).unwrap();
    let mut buf = Vec::new();
    ledger.write_jsonl(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), ledger.terms.len());
    let rec: TermRecord = serde_json::from_str(lines[lines.len() - 1]).unwrap();
    let last = ledger.terms.last().unwrap();
    assert_eq!(rec.order, last.order);
    assert_eq!(rec.provenance, last.contractions);
    assert_eq!(rec.monomial.len(), last.degree());
    let mut again = Vec::new();
    write_jsonl(ledger.terms.iter(), &mut again).unwrap();
    assert_eq!(again, text.as_bytes());
}

// ---- Z statistics ----

#[test]
fn empty_ledger_gives_zero() {
    let (_, es) = random_system(1, 26);
    let ledger = Ledger {
        source: Source::Current { x0: 0 },
        order: 1,
        terms: Vec::new(),
        stats: Default::default(),
    };
    let z = z_estimate(&ledger, &es, 0, &ZParams::default()).unwrap();
    assert_eq!(z.value, 0.0);
}

#[test]
fn z_breakdown_is_additive() {
    let params = ZParams {
        lambda: 0.3,
        ..Default::default()
    };
    let (_, es) = random_system(1, 27);
    let ledger = build_ledger(Source::Current { x0: 0 }, &es, &exact(1)).unwrap();
    let z = z_estimate(&ledger, &es, 0, &params).unwrap();
    assert!(z.value > 0.0);
    assert!(rel(z.value, z.g_part + z.u_part) < 1e-15);
    let es2 = two_site();
    let c = zstats::z_component_streaming(&Source::Current { x0: 1 }, &es2, &exact(2), 1, &params).unwrap();
    assert_eq!(c.u_sums.len(), 2);
    let pairs: f64 = c.u_pairs(&params).iter().flatten().sum();
    assert!(rel(pairs, c.u) < 1e-12);
    assert!(c.g > 0.0);
}

#[test]
fn fast_first_order_current_matches_ledger() {
    for (half, seed) in [(1, 28), (2, 29), (3, 30)] {
        let (r, es) = random_system(half, seed);
        let params = ZParams::default();
        for x0 in [0, half] {
            let cfg = LedgerConfig {
                order: 1,
                eta: r.eta,
                mode: LedgerMode::default(),
            };
            let slow = zstats::z_component_streaming(&Source::Current { x0 }, &es, &cfg, x0, &params).unwrap();
            let fast = FirstOrderCurrent::new(&es, (0..es.dim()).collect(), params.q)
                .component(&es, x0, r.eta, &params)
                .unwrap();
            assert!(rel(slow.g_sum, fast.g_sum) < 1e-10, "{} vs {}", slow.g_sum, fast.g_sum);
            assert!(rel(slow.u_sums[0], fast.u_sums[0]) < 1e-12);
        }
    }
}

#[test]
fn mode_energy_site_sum() {
    let (_, es) = random_system(1, 31);
    let spec = ZSpec {
        source: SourceKind::ModeEnergy,
        order: 1,
        params: ZParams::default(),
        mode: LedgerMode::default(),
    };
    let z = z_site(&es, 0, 1.0, &spec).unwrap();
    assert_eq!(z.components.len(), es.dim());
    let w: f64 = z.components.iter().map(|c| c.weight).sum();
    assert!((w - 1.0).abs() < 1e-12);
    let total: f64 = z.components.iter().map(|c| c.weight * (c.g + c.u)).sum();
    assert!(rel(total, z.value) < 1e-14);
}

#[test]
fn tail_report_recovers_pareto_exponent() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let alpha = 2.5;
    let s: Vec<f64> = (0..20000).map(|_| rng.random::<f64>().powf(-1.0 / alpha)).collect();
    let t = tail_report(&s).unwrap();
    assert!((t.exponent - alpha).abs() < 0.15, "{}", t.exponent);
    assert!((t.hill.unwrap().0 - alpha).abs() < 0.15);
}

#[test]
fn local_approximation_exact_when_window_covers() {
    let cfg = crate::ModelConfig::new(4, 1.0, 0.0, crate::DisorderLaw::default(), 33);
    let spec = ZSpec {
        source: SourceKind::Current,
        order: 1,
        params: ZParams::default(),
        mode: LedgerMode::default(),
    };
    let rep = z_local_approx(&cfg, cfg.lattice(), 0, &[1, 2, 8], &spec, 8, "zloc-test").unwrap();
    assert_eq!(rep.rows[2].median, 0.0);
    assert!(rep.differences.iter().all(|d| d[2] == 0.0));
    assert!(rep.rows[0].median > 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn evaluation_and_z_are_gauge_invariant(seed in 0u64..1000, mask in 0u32..32) {
        let (r, es) = random_system(2, seed);
        let flip: Vec<bool> = (0..es.dim()).map(|k| mask >> k & 1 == 1).collect();
        let g = es.with_flipped_signs(&flip);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let st = gaussian_state(es.dim(), &mut rng);
        for src in [Source::Current { x0: 1 }, Source::ModeEnergy { k0: 2 }] {
            let a = build_expansion(src, &es, r.eta, 1, DEFAULT_BRACKET_BUDGET).unwrap();
            let b = build_expansion(src, &g, r.eta, 1, DEFAULT_BRACKET_BUDGET).unwrap();
            let (va, vb) = (a.g().evaluate(&st, &es).unwrap(), b.g().evaluate(&st, &g).unwrap());
            prop_assert!((va - vb).abs() <= 1e-10 * (1.0 + va.abs()));
            let (ua, ub) = (a.evaluate_u(&st, &es, 0.1).unwrap(), b.evaluate_u(&st, &g, 0.1).unwrap());
            prop_assert!((ua - ub).abs() <= 1e-10 * (1.0 + ua.abs()));
        }
        let spec = ZSpec { source: SourceKind::Current, order: 1, params: ZParams::default(), mode: LedgerMode::default() };
        let za = z_site(&es, 1, r.eta, &spec).unwrap().value;
        let zb = z_site(&g, 1, r.eta, &spec).unwrap().value;
        prop_assert!((za - zb).abs() <= 1e-12 * za);
    }

    #[test]
    fn merged_coefficients_have_sigma_parity(seed in 0u64..1000) {
        let (_, es) = random_system(1, seed);
        let exp = build_expansion(Source::ModeEnergy { k0: 1 }, &es, 1.0, 2, DEFAULT_BRACKET_BUDGET).unwrap();
        for f in &exp.f {
            prop_assert!(f.sigma_parity_defect(-1.0) < 1e-12);
        }
        for u in &exp.u {
            prop_assert!(u.sigma_parity_defect(1.0) < 1e-12);
        }
    }
}
