//! Unmerged term ledger: every ordered mode tuple of every order with its
//! contraction history and denominator chain.
//!
//! Positions are 0-based. Block 1 holds the `d₁` source factors, block
//! `j + 1` the four factors of the `j`-th `Ĥ_an`. A contraction `(s, t)`
//! pairs an uncontracted position `s` of blocks `1..=j` with position `t` in
//! block `j + 1`.

use std::collections::HashMap;
use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::expansion::{source_terms, Source, RESONANCE_THRESHOLD};
use super::modes::{anharmonic_coefficient, AnharmonicTensor};
use super::poly::{code, is_pairable_codes, ModeMonomial, ModePolynomial, Sign};
use crate::error::{Error, Result};
use crate::spectral::EigenSystem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TermKind {
    /// Term of `f⁽ⁱ⁾` (order `n + 1` is `g`).
    F,
    /// Term of `u⁽ⁱ⁾`.
    U,
}

/// One unmerged term. Its coefficient is `numerator / Π denominators`, where
/// `denominators[j-1]` is `Δ` over the uncontracted factors of blocks `1..=j`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpansionTerm {
    pub order: usize,
    pub kind: TermKind,
    pub tuple: Vec<(usize, Sign)>,
    pub contractions: Vec<(usize, usize)>,
    pub survivors: Vec<usize>,
    pub numerator: Complex64,
    pub denominators: Vec<f64>,
}

impl ExpansionTerm {
    pub fn coefficient(&self) -> Complex64 {
        self.numerator / self.denominators.iter().product::<f64>()
    }

    pub fn monomial(&self) -> ModeMonomial {
        ModeMonomial::new(&self.survivors.iter().map(|&s| self.tuple[s]).collect::<Vec<_>>())
    }

    pub fn degree(&self) -> usize {
        self.survivors.len()
    }

    /// `Δ` of blocks `1..=j` summed over the full tuple, contracted pairs included.
    pub fn full_tuple_denominator(&self, d1: usize, j: usize, nu: &[f64]) -> f64 {
        let end = d1 + 4 * (j - 1);
        self.tuple[..end].iter().map(|&(k, s)| s as f64 * nu[k]).sum()
    }

    fn hash_key(&self) -> u64 {
        let mut h = mix(self.order as u64 ^ ((self.kind == TermKind::U) as u64) << 32);
        for &(k, s) in &self.tuple {
            h = mix(h ^ code(k, s) as u64);
        }
        for &(s, t) in &self.contractions {
            h = mix(h ^ ((s as u64) << 20 | t as u64) ^ 0xabcd_0000_0000);
        }
        h
    }

    /// Exact identity of the term (order, kind, tuple, contractions).
    pub fn key(&self) -> Vec<u32> {
        let mut k = vec![self.order as u32, (self.kind == TermKind::U) as u32];
        k.extend(self.tuple.iter().map(|&(m, s)| code(m, s)));
        k.push(u32::MAX);
        for &(s, t) in &self.contractions {
            k.push(s as u32);
            k.push(t as u32);
        }
        k
    }

    pub fn record(&self) -> TermRecord {
        TermRecord {
            order: self.order,
            kind: self.kind,
            monomial: self.survivors.iter().map(|&s| self.tuple[s]).collect(),
            tuple: self.tuple.clone(),
            numerator: [self.numerator.re, self.numerator.im],
            denominators: self.denominators.clone(),
            provenance: self.contractions.clone(),
        }
    }
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// JSONL record of one term.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TermRecord {
    pub order: usize,
    pub kind: TermKind,
    pub monomial: Vec<(usize, Sign)>,
    pub tuple: Vec<(usize, Sign)>,
    pub numerator: [f64; 2],
    pub denominators: Vec<f64>,
    pub provenance: Vec<(usize, usize)>,
}

/// How many modes and terms enter the ledger.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum LedgerMode {
    /// Every mode; the predicted term count must not exceed `cap`.
    Exact { cap: u64 },
    /// Modes centred within `radius` of the source site; terms with
    /// `|numerator| < floor` are dropped together with their descendants.
    Truncated { radius: i64, floor: f64 },
}

pub const DEFAULT_TERM_CAP: u64 = 2_000_000_000;

impl Default for LedgerMode {
    fn default() -> Self {
        LedgerMode::Exact { cap: DEFAULT_TERM_CAP }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LedgerConfig {
    pub order: usize,
    pub eta: f64,
    #[serde(default)]
    pub mode: LedgerMode,
}

/// Counts and truncation loss of a ledger traversal.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct LedgerStats {
    pub modes: Vec<usize>,
    /// `f_counts[i-1]` terms of `f⁽ⁱ⁾`, `i = 1..=n+1`.
    pub f_counts: Vec<u64>,
    pub u_counts: Vec<u64>,
    pub dropped_terms: u64,
    /// `Σ |coefficient|` of dropped terms.
    pub dropped_mass: f64,
}

/// Upper bound on the number of `F` and `U` terms of a full ledger.
pub fn predicted_terms(d1: usize, modes: usize, order: usize) -> u128 {
    let m = modes as u128;
    let mut n_i = (2 * m).pow(d1 as u32);
    let mut total = 0u128;
    for i in 1..=order + 1 {
        total = total.saturating_add(if i <= order { 2 * n_i } else { n_i });
        let d_i = (d1 + 2 * (i - 1)) as u128;
        n_i = n_i.saturating_mul(d_i * 32 * m * m * m);
    }
    total
}

pub(crate) fn ledger_modes(source: &Source, es: &EigenSystem, mode: &LedgerMode) -> Vec<usize> {
    match *mode {
        LedgerMode::Exact { .. } => (0..es.dim()).collect(),
        LedgerMode::Truncated { radius, .. } => {
            let (site, keep) = match *source {
                Source::Current { x0 } => (x0, None),
                Source::ModeEnergy { k0 } => (es.centers[k0], Some(k0)),
            };
            let mut m = es.modes_near(site, radius);
            if let Some(k0) = keep {
                if !m.contains(&k0) {
                    m.push(k0);
                    m.sort_unstable();
                }
            }
            m
        }
    }
}

/// Streams every term of the ledger through `visit`, depth first.
pub fn visit_ledger(
    source: &Source,
    es: &EigenSystem,
    cfg: &LedgerConfig,
    visit: &mut dyn FnMut(&ExpansionTerm) -> Result<()>,
) -> Result<LedgerStats> {
    if cfg.order == 0 {
        return Err(Error::InvalidParameter("expansion order must be >= 1".into()));
    }
    source.validate(es)?;
    let modes = ledger_modes(source, es, &cfg.mode);
    if let LedgerMode::Exact { cap } = cfg.mode {
        let count = predicted_terms(source.degree(), modes.len(), cfg.order);
        if count > cap as u128 {
            return Err(Error::BudgetExceeded { count, cap: cap as u128 });
        }
    }
    let floor = match cfg.mode {
        LedgerMode::Truncated { floor, .. } => floor,
        LedgerMode::Exact { .. } => 0.0,
    };
    let tensor = AnharmonicTensor::new(es, modes.clone());
    let mut local = vec![usize::MAX; es.dim()];
    for (j, &k) in modes.iter().enumerate() {
        local[k] = j;
    }
    let mut dfs = Dfs {
        nu: &es.nu,
        tensor: &tensor,
        local,
        order: cfg.order,
        floor,
        visit,
        stats: LedgerStats {
            modes: modes.clone(),
            f_counts: vec![0; cfg.order + 1],
            u_counts: vec![0; cfg.order],
            ..Default::default()
        },
        term: ExpansionTerm {
            order: 1,
            kind: TermKind::F,
            tuple: Vec::new(),
            contractions: Vec::new(),
            survivors: Vec::new(),
            numerator: Complex64::new(0.0, 0.0),
            denominators: Vec::new(),
        },
        balance: vec![0; es.dim()],
    };
    for (tuple, c) in source_terms(source, es, cfg.eta, &modes, &tensor)? {
        if is_pairable_codes(&tuple.iter().map(|&(k, s)| code(k, s)).collect::<Vec<_>>()) {
            continue;
        }
        dfs.term.survivors = (0..tuple.len()).collect();
        for &(k, s) in &tuple {
            dfs.balance[k] += s as i32;
        }
        dfs.term.tuple = tuple;
        dfs.term.numerator = c;
        dfs.descend(1)?;
        for &(k, s) in &dfs.term.tuple {
            dfs.balance[k] -= s as i32;
        }
    }
    Ok(dfs.stats)
}

struct Dfs<'a, 'v> {
    nu: &'a [f64],
    tensor: &'a AnharmonicTensor,
    local: Vec<usize>,
    order: usize,
    floor: f64,
    visit: &'v mut dyn FnMut(&ExpansionTerm) -> Result<()>,
    stats: LedgerStats,
    term: ExpansionTerm,
    /// `Σ σ` per mode over the surviving factors.
    balance: Vec<i32>,
}

impl Dfs<'_, '_> {
    fn descend(&mut self, i: usize) -> Result<()> {
        self.term.order = i;
        self.term.kind = TermKind::F;
        (self.visit)(&self.term)?;
        self.stats.f_counts[i - 1] += 1;
        if i > self.order {
            return Ok(());
        }
        let delta: f64 = self
            .term
            .survivors
            .iter()
            .map(|&p| {
                let (k, s) = self.term.tuple[p];
                s as f64 * self.nu[k]
            })
            .sum();
        if delta.abs() < RESONANCE_THRESHOLD {
            return Err(Error::NearResonance {
                delta: delta.abs(),
                monomial: self.term.monomial().to_string(),
            });
        }
        let num = self.term.numerator;
        self.term.denominators.push(delta);
        self.term.kind = TermKind::U;
        self.term.numerator = num * Complex64::new(0.0, 1.0);
        (self.visit)(&self.term)?;
        self.stats.u_counts[i - 1] += 1;
        self.term.numerator = num;
        if i <= self.order {
            self.children(i, num)?;
        }
        self.term.denominators.pop();
        self.term.order = i;
        Ok(())
    }

    fn children(&mut self, i: usize, num: Complex64) -> Result<()> {
        let m = self.tensor.size();
        let base = self.term.tuple.len();
        let survivors = self.term.survivors.clone();
        let den: f64 = self.term.denominators.iter().product();
        for (si, &s) in survivors.iter().enumerate() {
            let (ks, ss) = self.term.tuple[s];
            let ls = self.local[ks];
            self.balance[ks] -= ss as i32;
            for h in 0..4 {
                for a in 0..m {
                    for b in 0..m {
                        for c in 0..m {
                            let hv = self.tensor.get(ls, a, b, c);
                            let free = [a, b, c].map(|l| self.tensor.modes[l]);
                            for bits in 0..8u8 {
                                let sig: [Sign; 3] =
                                    std::array::from_fn(|j| if bits >> j & 1 == 1 { 1 } else { -1 });
                                for j in 0..3 {
                                    self.balance[free[j]] += sig[j] as i32;
                                }
                                let pairable = free.iter().all(|&k| self.balance[k] == 0)
                                    && self.balance_all_zero(&survivors, si);
                                if !pairable {
                                    let new_num = num * (-ss as f64) * hv;
                                    if self.floor > 0.0 && new_num.norm() < self.floor {
                                        self.stats.dropped_terms += 1;
                                        self.stats.dropped_mass += new_num.norm() / den.abs();
                                    } else {
                                        self.push_block(s, si, h, base, (ks, -ss), free, sig, new_num);
                                        self.descend(i + 1)?;
                                        self.pop_block(s, si, base);
                                    }
                                }
                                for j in 0..3 {
                                    self.balance[free[j]] -= sig[j] as i32;
                                }
                            }
                        }
                    }
                }
            }
            self.balance[ks] += ss as i32;
        }
        self.term.numerator = num;
        Ok(())
    }

    /// Whether every surviving factor other than `skip` sits on a balanced mode.
    fn balance_all_zero(&self, survivors: &[usize], skip: usize) -> bool {
        survivors
            .iter()
            .enumerate()
            .all(|(j, &p)| j == skip || self.balance[self.term.tuple[p].0] == 0)
    }

    #[allow(clippy::too_many_arguments)]
    fn push_block(
        &mut self,
        s: usize,
        si: usize,
        h: usize,
        base: usize,
        contracted: (usize, Sign),
        free: [usize; 3],
        sig: [Sign; 3],
        num: Complex64,
    ) {
        let mut f = 0;
        for slot in 0..4 {
            if slot == h {
                self.term.tuple.push(contracted);
            } else {
                self.term.tuple.push((free[f], sig[f]));
                f += 1;
            }
        }
        self.term.contractions.push((s, base + h));
        self.term.survivors.remove(si);
        for slot in 0..4 {
            if slot != h {
                self.term.survivors.push(base + slot);
            }
        }
        self.term.numerator = num;
    }

    fn pop_block(&mut self, s: usize, si: usize, base: usize) {
        self.term.tuple.truncate(base);
        self.term.contractions.pop();
        self.term.survivors.truncate(self.term.survivors.len() - 3);
        self.term.survivors.insert(si, s);
    }
}

/// In-memory ledger.
#[derive(Debug, Clone)]
pub struct Ledger {
    pub source: Source,
    pub order: usize,
    pub terms: Vec<ExpansionTerm>,
    pub stats: LedgerStats,
}

/// Largest ledger [`build_ledger`] will hold in memory.
pub const MAX_STORED_TERMS: u64 = 2_000_000;

pub fn build_ledger(source: Source, es: &EigenSystem, cfg: &LedgerConfig) -> Result<Ledger> {
    let mut terms = Vec::new();
    let stats = visit_ledger(&source, es, cfg, &mut |t| {
        if terms.len() as u64 >= MAX_STORED_TERMS {
            return Err(Error::BudgetExceeded {
                count: terms.len() as u128 + 1,
                cap: MAX_STORED_TERMS as u128,
            });
        }
        terms.push(t.clone());
        Ok(())
    })?;
    Ok(Ledger {
        source,
        order: cfg.order,
        terms,
        stats,
    })
}

impl Ledger {
    /// Merged polynomial of the `kind` terms at `order`.
    pub fn merged(&self, order: usize, kind: TermKind) -> ModePolynomial {
        merge_terms(self.terms.iter().filter(|t| t.order == order && t.kind == kind))
    }

    pub fn write_jsonl<W: Write>(&self, out: W) -> Result<()> {
        write_jsonl(self.terms.iter(), out)
    }
}

pub fn merge_terms<'a>(terms: impl Iterator<Item = &'a ExpansionTerm>) -> ModePolynomial {
    let mut p = ModePolynomial::zero();
    for t in terms {
        p.add_term(t.monomial(), t.coefficient());
    }
    p.prune();
    p
}

pub fn write_jsonl<'a, W: Write>(terms: impl Iterator<Item = &'a ExpansionTerm>, mut out: W) -> Result<()> {
    for t in terms {
        serde_json::to_writer(&mut out, &t.record())?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Enumerates the `kind` terms of order `i` directly from the product formula
/// over contraction index sets, with denominators summed over full tuples and
/// every coupling evaluated site by site.
pub fn visit_closed_form(
    source: &Source,
    es: &EigenSystem,
    eta: f64,
    order: usize,
    kind: TermKind,
    visit: &mut dyn FnMut(&ExpansionTerm) -> Result<()>,
) -> Result<u64> {
    if order == 0 {
        return Err(Error::InvalidParameter("order must be >= 1".into()));
    }
    source.validate(es)?;
    let d1 = source.degree();
    let mut sets = Vec::new();
    contraction_sets(d1, order, &mut Vec::new(), &mut sets);
    let mut count = 0u64;
    for set in &sets {
        let len = d1 + 4 * (order - 1);
        let mut ctx = ClosedForm {
            es,
            source,
            eta,
            d1,
            order,
            kind,
            set,
            tuple: vec![(0, 1); len],
            count: 0,
        };
        ctx.assign(0, visit)?;
        count += ctx.count;
    }
    Ok(count)
}

fn contraction_sets(d1: usize, order: usize, cur: &mut Vec<(usize, usize)>, out: &mut Vec<Vec<(usize, usize)>>) {
    let j = cur.len() + 1;
    if j == order {
        out.push(cur.clone());
        return;
    }
    let end = d1 + 4 * (j - 1);
    for s in 0..end {
        if cur.iter().any(|&(a, b)| a == s || b == s) {
            continue;
        }
        for t in end..end + 4 {
            cur.push((s, t));
            contraction_sets(d1, order, cur, out);
            cur.pop();
        }
    }
}

struct ClosedForm<'a> {
    es: &'a EigenSystem,
    source: &'a Source,
    eta: f64,
    d1: usize,
    order: usize,
    kind: TermKind,
    set: &'a [(usize, usize)],
    tuple: Vec<(usize, Sign)>,
    count: u64,
}

impl ClosedForm<'_> {
    /// Fills block `b` (0 = source) and recurses.
    fn assign(&mut self, b: usize, visit: &mut dyn FnMut(&ExpansionTerm) -> Result<()>) -> Result<()> {
        if b == self.order {
            return self.emit(visit);
        }
        let (start, len) = if b == 0 { (0, self.d1) } else { (self.d1 + 4 * (b - 1), 4) };
        let fixed = if b == 0 { None } else { Some(self.set[b - 1]) };
        let free: Vec<usize> = (start..start + len).filter(|&p| fixed.map_or(true, |(_, t)| t != p)).collect();
        if let Some((s, t)) = fixed {
            let (k, sg) = self.tuple[s];
            self.tuple[t] = (k, -sg);
        }
        let n = self.es.dim();
        let combos = (2 * n).pow(free.len() as u32);
        for mut idx in 0..combos {
            for &p in &free {
                let v = idx % (2 * n);
                idx /= 2 * n;
                self.tuple[p] = (v / 2, if v % 2 == 1 { 1 } else { -1 });
            }
            if self.chi(b) {
                self.assign(b + 1, visit)?;
            }
        }
        Ok(())
    }

    /// `χ_{S^c}` of the factors of blocks `0..=b` left after contractions `1..=b`.
    fn chi(&self, b: usize) -> bool {
        let end = self.d1 + 4 * b;
        let codes: Vec<u32> = (0..end)
            .filter(|p| !self.set[..b].iter().any(|&(s, t)| s == *p || t == *p))
            .map(|p| code(self.tuple[p].0, self.tuple[p].1))
            .collect();
        !is_pairable_codes(&codes)
    }

    fn emit(&mut self, visit: &mut dyn FnMut(&ExpansionTerm) -> Result<()>) -> Result<()> {
        let f1 = source_coefficient(self.source, self.es, self.eta, &self.tuple[..self.d1])?;
        if f1 == Complex64::new(0.0, 0.0) {
            return Ok(());
        }
        let mut num = f1;
        for (j, &(_, t)) in self.set.iter().enumerate() {
            let start = self.d1 + 4 * j;
            let ks: [usize; 4] = std::array::from_fn(|h| self.tuple[start + h].0);
            num *= self.tuple[t].1 as f64 * anharmonic_coefficient(self.es, ks);
        }
        let n_den = if self.kind == TermKind::U { self.order } else { self.order - 1 };
        let mut denominators = Vec::with_capacity(n_den);
        for j in 1..=n_den {
            let end = self.d1 + 4 * (j - 1);
            denominators.push(self.tuple[..end].iter().map(|&(k, s)| s as f64 * self.es.nu[k]).sum());
        }
        if self.kind == TermKind::U {
            num *= Complex64::new(0.0, 1.0);
        }
        let survivors: Vec<usize> = (0..self.tuple.len())
            .filter(|p| !self.set.iter().any(|&(s, t)| s == *p || t == *p))
            .collect();
        let term = ExpansionTerm {
            order: self.order,
            kind: self.kind,
            tuple: self.tuple.clone(),
            contractions: self.set.to_vec(),
            survivors,
            numerator: num,
            denominators,
        };
        self.count += 1;
        visit(&term)
    }
}

/// `f̂` of a single ordered source tuple, from the defining formulas.
pub fn source_coefficient(source: &Source, es: &EigenSystem, eta: f64, tuple: &[(usize, Sign)]) -> Result<Complex64> {
    match *source {
        Source::Current { x0 } => {
            let i = es.interval.index(x0)?;
            let [(k1, _), (k2, s2)] = [tuple[0], tuple[1]];
            let v = 0.5 * eta * (es.psi(k1)[i - 1] - es.psi(k1)[i]) * es.psi(k2)[i] * (es.nu[k2] / es.nu[k1]).sqrt();
            Ok(Complex64::new(0.0, v * s2 as f64))
        }
        Source::ModeEnergy { k0 } => {
            let w: i32 = tuple.iter().filter(|f| f.0 == k0).map(|f| f.1 as i32).sum();
            let ks: [usize; 4] = std::array::from_fn(|j| tuple[j].0);
            Ok(Complex64::new(0.0, -es.nu[k0] * anharmonic_coefficient(es, ks) * w as f64))
        }
    }
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Order-independent summary of a term multiset: count, `Σ |c|`, and two
/// sums of coefficients weighted by pseudo-random functions of the term key.
#[derive(Debug, Clone, Default)]
pub struct Fingerprint {
    pub count: u64,
    abs: CompensatedSum,
    w: [[CompensatedSum; 2]; 2],
}

impl Fingerprint {
    pub fn add(&mut self, t: &ExpansionTerm) {
        let c = t.coefficient();
        let h = t.hash_key();
        let w1 = (h >> 11) as f64 / (1u64 << 53) as f64;
        let w2 = (mix(h) >> 11) as f64 / (1u64 << 53) as f64;
        self.count += 1;
        self.abs.add(c.norm());
        for (j, w) in [w1, w2].into_iter().enumerate() {
            self.w[j][0].add(w * c.re);
            self.w[j][1].add(w * c.im);
        }
    }

    pub fn abs_sum(&self) -> f64 {
        self.abs.value()
    }

    /// Largest weighted-sum discrepancy relative to `Σ |c|`, or `None` if the
    /// counts differ.
    pub fn discrepancy(&self, other: &Fingerprint) -> Option<f64> {
        if self.count != other.count {
            return None;
        }
        let scale = self.abs_sum().max(other.abs_sum()).max(f64::MIN_POSITIVE);
        let mut d: f64 = (self.abs_sum() - other.abs_sum()).abs();
        for j in 0..2 {
            for r in 0..2 {
                d = d.max((self.w[j][r].value() - other.w[j][r].value()).abs());
            }
        }
        Some(d / scale)
    }
}

/// Largest per-term coefficient discrepancy between two ledgers keyed by
/// term identity, relative to the largest coefficient; `None` if the key
/// sets differ.
pub fn compare_terms(a: &[ExpansionTerm], b: &[ExpansionTerm]) -> Option<f64> {
    if a.len() != b.len() {
        return None;
    }
    let map: HashMap<Vec<u32>, Complex64> = a.iter().map(|t| (t.key(), t.coefficient())).collect();
    if map.len() != a.len() {
        return None;
    }
    let scale = map.values().map(|c| c.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let mut worst: f64 = 0.0;
    for t in b {
        let c = map.get(&t.key())?;
        worst = worst.max((c - t.coefficient()).norm() / scale);
    }
    Some(worst)
}
