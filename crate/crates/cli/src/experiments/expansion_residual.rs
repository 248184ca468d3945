//! Pointwise check of the commutator equation `f + {H, u} = λⁿ g` for the
//! recursively built expansion, plus the equivalence of the recursive term
//! ledger with the closed-form enumeration on a smaller interval.
//!
//! Params: `sites` (5), `order` (2), `states` (100), `sources`
//! (`[{kind: "mode_energy", k0: 2}, {kind: "current", x0: 0}]`),
//! `closed_form_sites` (3), `closed_form_sources`
//! (`[{kind: "mode_energy", k0: 1}, {kind: "current", x0: 0}]`),
//! `closed_form_cap` (5e8 predicted terms), `bracket_budget` (2e9).
//!
//! `λ` is the model's. Disorder is one draw on the centred interval of
//! `sites` sites; the closed-form interval is nested inside it and sees the
//! same frequencies. States have i.i.d. standard normal `q_x, p_x`. The
//! closed-form comparison runs each source at the highest order `≤ order`
//! whose predicted ledger size fits `closed_form_cap`, and compares every
//! `(order, kind)` block by term count and order-independent fingerprint.
//!
//! Tables:
//! - `residuals.csv`: `source,state,f,bracket,remainder,defect,relative`.
//! - `closed_form.csv`: `source,ledger_order,order,kind,terms_recursive,terms_closed,discrepancy`.

use kgchain_core::model::sample_disorder;
use kgchain_core::perturbation::ledger::predicted_terms;
use kgchain_core::perturbation::{
    build_expansion, visit_closed_form, visit_ledger, Fingerprint, LedgerConfig, LedgerMode, Source, TermKind,
    DEFAULT_BRACKET_BUDGET,
};
use kgchain_core::{labels, ChainState, EigenSystem, ModelConfig};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{at_least, centered_interval, within_lattice, Ctx, Outcome};

/// Fingerprint agreement required for the closed-form check to pass.
pub const CLOSED_FORM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub sites: usize,
    pub order: usize,
    pub states: usize,
    pub sources: Vec<Source>,
    pub closed_form_sites: usize,
    pub closed_form_sources: Vec<Source>,
    pub closed_form_cap: u64,
    pub bracket_budget: u64,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            sites: 5,
            order: 2,
            states: 100,
            sources: vec![Source::ModeEnergy { k0: 2 }, Source::Current { x0: 0 }],
            closed_form_sites: 3,
            closed_form_sources: vec![Source::ModeEnergy { k0: 1 }, Source::Current { x0: 0 }],
            closed_form_cap: 500_000_000,
            bracket_budget: DEFAULT_BRACKET_BUDGET as u64,
        }
    }
}

#[derive(Serialize)]
struct ResidualRow {
    source: String,
    state: usize,
    f: f64,
    bracket: f64,
    remainder: f64,
    defect: f64,
    relative: f64,
}

#[derive(Serialize)]
struct ClosedRow {
    source: String,
    ledger_order: usize,
    order: usize,
    kind: &'static str,
    terms_recursive: u64,
    terms_closed: u64,
    discrepancy: Option<f64>,
}

fn label(s: &Source) -> String {
    match s {
        Source::ModeEnergy { k0 } => format!("mode_energy:{k0}"),
        Source::Current { x0 } => format!("current:{x0}"),
    }
}

fn source_fits(s: &Source, iv: kgchain_core::Interval) -> Result<(), String> {
    let ok = match *s {
        Source::ModeEnergy { k0 } => k0 < iv.len(),
        Source::Current { x0 } => iv.contains(x0) && x0 > iv.a,
    };
    if ok {
        Ok(())
    } else {
        Err(format!("source {} does not fit [{}, {}]", label(s), iv.a, iv.b))
    }
}

impl Params {
    pub fn validate(&self, model: &ModelConfig) -> Result<(), String> {
        at_least("sites", self.sites, 2)?;
        at_least("order", self.order, 1)?;
        let iv = centered_interval(self.sites);
        within_lattice(model, iv, "interval")?;
        for s in &self.sources {
            source_fits(s, iv)?;
        }
        if !self.closed_form_sources.is_empty() {
            at_least("closed_form_sites", self.closed_form_sites, 2)?;
            let sub = centered_interval(self.closed_form_sites);
            within_lattice(model, sub, "closed-form interval")?;
            for s in &self.closed_form_sources {
                source_fits(s, sub)?;
            }
        }
        Ok(())
    }

    pub fn lineage(&self) -> Vec<String> {
        vec!["expansion_residual/disorder".into(), "expansion_residual/states".into()]
    }

    fn ledger_order(&self, s: &Source, modes: usize) -> usize {
        (1..=self.order)
            .rev()
            .find(|&o| predicted_terms(s.degree(), modes, o) <= self.closed_form_cap as u128)
            .unwrap_or(0)
    }

    pub(crate) fn run(&self, cx: &mut Ctx) -> Outcome {
        let lambda = cx.model.lambda;
        let eta = cx.model.eta;
        let iv = centered_interval(self.sites);
        let disorder = cx.stream(&labels!["expansion_residual", "disorder"]);
        let dis = sample_disorder(cx.model, iv, disorder)?;
        let es = EigenSystem::of(&dis)?;

        let mut rng = cx.stream(&labels!["expansion_residual", "states"]).rng();
        let states: Vec<ChainState> = (0..self.states)
            .map(|_| {
                let q = (0..es.dim()).map(|_| rng.sample(StandardNormal)).collect();
                let p = (0..es.dim()).map(|_| rng.sample(StandardNormal)).collect();
                ChainState::new(q, p)
            })
            .collect::<kgchain_core::Result<_>>()?;

        let mut rows = Vec::new();
        let mut worst = Vec::new();
        for src in &self.sources {
            let exp = build_expansion(*src, &es, eta, self.order, self.bracket_budget as u128)?;
            let res = states
                .par_iter()
                .map(|st| exp.residual(st, &es, lambda))
                .collect::<kgchain_core::Result<Vec<_>>>()?;
            let max_rel = res.iter().map(|r| r.relative).fold(0.0, f64::max);
            worst.push(serde_json::json!({
                "source": label(src),
                "max_relative": max_rel,
                "terms": exp.f.iter().chain(&exp.u).map(|p| p.len()).sum::<usize>(),
            }));
            rows.extend(res.into_iter().enumerate().map(|(state, r)| ResidualRow {
                source: label(src),
                state,
                f: r.source,
                bracket: r.bracket,
                remainder: r.remainder,
                defect: r.defect,
                relative: r.relative,
            }));
        }
        cx.table("residuals.csv", rows)?;

        let mut closed_rows = Vec::new();
        let mut closed_ok = true;
        if !self.closed_form_sources.is_empty() {
            let sub = centered_interval(self.closed_form_sites);
            let es3 = EigenSystem::of(&sample_disorder(cx.model, sub, disorder)?)?;
            for src in &self.closed_form_sources {
                let o = self.ledger_order(src, es3.dim());
                if o == 0 {
                    closed_ok = false;
                    continue;
                }
                let blocks: Vec<(usize, TermKind)> = (1..=o + 1)
                    .map(|i| (i, TermKind::F))
                    .chain((1..=o).map(|i| (i, TermKind::U)))
                    .collect();
                let index = |i: usize, k: TermKind| blocks.iter().position(|b| *b == (i, k)).expect("known block");
                let mut rec = vec![Fingerprint::default(); blocks.len()];
                let cfg = LedgerConfig {
                    order: o,
                    eta,
                    mode: LedgerMode::default(),
                };
                visit_ledger(src, &es3, &cfg, &mut |t| {
                    rec[index(t.order, t.kind)].add(t);
                    Ok(())
                })?;
                let closed = blocks
                    .par_iter()
                    .map(|&(i, kind)| {
                        let mut fp = Fingerprint::default();
                        visit_closed_form(src, &es3, eta, i, kind, &mut |t| {
                            fp.add(t);
                            Ok(())
                        })?;
                        Ok(fp)
                    })
                    .collect::<kgchain_core::Result<Vec<_>>>()?;
                for (b, &(i, kind)) in blocks.iter().enumerate() {
                    let d = rec[b].discrepancy(&closed[b]);
                    closed_ok &= d.is_some_and(|d| d <= CLOSED_FORM_TOL);
                    closed_rows.push(ClosedRow {
                        source: label(src),
                        ledger_order: o,
                        order: i,
                        kind: match kind {
                            TermKind::F => "f",
                            TermKind::U => "u",
                        },
                        terms_recursive: rec[b].count,
                        terms_closed: closed[b].count,
                        discrepancy: d,
                    });
                }
            }
        }
        let max_disc = closed_rows
            .iter()
            .map(|r| r.discrepancy.unwrap_or(f64::INFINITY))
            .fold(0.0, f64::max);
        cx.table("closed_form.csv", closed_rows)?;
        Ok(serde_json::json!({
            "interval": [iv.a, iv.b],
            "order": self.order,
            "lambda": lambda,
            "states": self.states,
            "residuals": worst,
            "closed_form_max_discrepancy": max_disc,
            "closed_form_ok": closed_ok,
        }))
    }
}
