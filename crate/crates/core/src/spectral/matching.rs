use serde::Serialize;

use super::EigenSystem;
use crate::error::{Error, Result};

/// Pairs with squared overlap below this value are never matched.
pub const MIN_OVERLAP_SQ: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchedPair {
    pub local: usize,
    pub global: usize,
    pub overlap_sq: f64,
    pub delta_nu_sq: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnmatchedPair {
    pub global: usize,
    /// `|x(ψ') - x_0|`, distance of the center to the middle of the local interval.
    pub distance: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchReport {
    pub center: i64,
    pub ell: i64,
    pub local_candidates: usize,
    pub global_candidates: usize,
    pub matched: Vec<MatchedPair>,
    pub unmatched_global: Vec<UnmatchedPair>,
    pub unmatched_local: Vec<usize>,
}

impl MatchReport {
    pub fn median_overlap_sq(&self) -> Option<f64> {
        if self.matched.is_empty() {
            return None;
        }
        let v: Vec<f64> = self.matched.iter().map(|m| m.overlap_sq).collect();
        Some(crate::stats::median(&v))
    }

    /// True when every unmatched global candidate sits at distance `≥ ℓ/4`.
    pub fn unmatched_far(&self) -> bool {
        self.unmatched_global
            .iter()
            .all(|u| 4 * u.distance >= self.ell)
    }
}

/// Matches eigenpairs of `local` (on `I(x_0, ℓ)`) with those of `global`.
///
/// Windows are measured from the middle `x_0` of the local interval with
/// `ℓ` its half-length: local candidates have `|x - x_0| ≤ ℓ/2`, global ones
/// `|x - x_0| ≤ 2ℓ/3`. Candidate pairs are taken greedily by decreasing
/// squared overlap `[ψ, ψ'|_I]²`, each mode used at most once, and only if
/// the overlap reaches [`MIN_OVERLAP_SQ`] (which makes the assignment unique).
pub fn match_eigenpairs(local: &EigenSystem, global: &EigenSystem) -> Result<MatchReport> {
    let li = local.interval;
    let gi = global.interval;
    if !gi.contains_interval(&li) {
        return Err(Error::NotNested);
    }
    let x0 = (li.a + li.b).div_euclid(2);
    let ell = (li.b - li.a) / 2;
    let off = (li.a - gi.a) as usize;
    let n_loc = local.dim();
    let in_local = |k: usize| 2 * (local.centers[k] - x0).abs() <= ell;
    let in_global = |k: usize| 3 * (global.centers[k] - x0).abs() <= 2 * ell;
    let lc: Vec<usize> = (0..local.dim()).filter(|&k| in_local(k)).collect();
    let gc: Vec<usize> = (0..global.dim()).filter(|&k| in_global(k)).collect();

    let mut cands = Vec::with_capacity(lc.len() * gc.len());
    for &k in &lc {
        let pl = local.psi(k);
        for &g in &gc {
            let pg = &global.psi(g)[off..off + n_loc];
            let dot: f64 = pl.iter().zip(pg).map(|(a, b)| a * b).sum();
            let o = dot * dot;
            if o >= MIN_OVERLAP_SQ {
                cands.push((o, k, g));
            }
        }
    }
    cands.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_l = vec![false; local.dim()];
    let mut used_g = vec![false; global.dim()];
    let mut matched = Vec::new();
    for (o, k, g) in cands {
        if used_l[k] || used_g[g] {
            continue;
        }
        used_l[k] = true;
        used_g[g] = true;
        matched.push(MatchedPair {
            local: k,
            global: g,
            overlap_sq: o,
            delta_nu_sq: (local.nu_sq[k] - global.nu_sq[g]).abs(),
        });
    }
    matched.sort_by_key(|m| m.local);
    let unmatched_global = gc
        .iter()
        .filter(|&&g| !used_g[g])
        .map(|&g| UnmatchedPair {
            global: g,
            distance: (global.centers[g] - x0).abs(),
        })
        .collect();
    let unmatched_local = lc.iter().copied().filter(|&k| !used_l[k]).collect();
    Ok(MatchReport {
        center: x0,
        ell,
        local_candidates: lc.len(),
        global_candidates: gc.len(),
        matched,
        unmatched_global,
        unmatched_local,
    })
}

#[cfg(test)]
mod tests {
    use super::super::tests::random_system;
    use super::*;
    use crate::model::Interval;

    #[test]
    fn identical_systems_match_identically() {
        let (_, es) = random_system(12, 9);
        let rep = match_eigenpairs(&es, &es).unwrap();
        assert_eq!(rep.matched.len(), rep.local_candidates);
        for m in &rep.matched {
            assert_eq!(m.local, m.global);
            assert!((m.overlap_sq - 1.0).abs() < 1e-12);
            assert_eq!(m.delta_nu_sq, 0.0);
        }
    }

    #[test]
    fn nested_strong_disorder() {
        let cfg = crate::model::ModelConfig::new(
            60,
            0.2,
            0.0,
            crate::model::DisorderLaw::Uniform { lo: 0.5, hi: 1.5 },
            1,
        );
        let s = crate::rng::derive_stream(1, &crate::labels!["match"]);
        let g = crate::model::sample_disorder(&cfg, cfg.lattice(), s).unwrap();
        let l = g.restrict(Interval::new(-30, 30).unwrap()).unwrap();
        let rep = match_eigenpairs(&EigenSystem::of(&l).unwrap(), &EigenSystem::of(&g).unwrap()).unwrap();
        assert!(rep.median_overlap_sq().unwrap() >= 0.99);
    }

    #[test]
    fn rejects_non_nested() {
        let (_, a) = random_system(3, 1);
        let (_, b) = random_system(5, 1);
        assert_eq!(match_eigenpairs(&b, &a), Err(Error::NotNested));
    }
}
