//! Perturbative construction of approximate conserved quantities.
//!
//! In the mode variables `a^±_k` the harmonic flow is diagonal, so the
//! commutator equation `f = -{H, u} + λⁿ g` is solved order by order:
//! `u⁽ⁱ⁾ = i f̂⁽ⁱ⁾ / Δ` and `f⁽ⁱ⁺¹⁾ = {H_an, u⁽ⁱ⁾}`. Merged polynomials serve
//! evaluation; the unmerged [`ledger`] keeps each term's denominator chain for
//! the `Z` statistics of [`zstats`].

pub mod expansion;
pub mod ledger;
pub mod modes;
pub mod poly;
pub mod zstats;

pub use expansion::{
    anharmonic_polynomial, bracket_with_anharmonic, build_expansion, harmonic_bracket, solve_cohomological,
    source_f1, Expansion, Residual, Source, DEFAULT_BRACKET_BUDGET, RESONANCE_THRESHOLD,
};
pub use ledger::{
    build_ledger, visit_closed_form, visit_ledger, ExpansionTerm, Fingerprint, Ledger, LedgerConfig, LedgerMode,
    LedgerStats, TermKind,
};
pub use modes::{anharmonic_coefficient, from_modes, to_modes, AnharmonicTensor};
pub use poly::{bracket, ModeMonomial, ModePolynomial, Sign};
pub use zstats::{
    sample_z, tail_report, z_estimate, z_local_approx, z_profile, z_site, FirstOrderCurrent, SourceKind,
    ZComponent, ZEstimate, ZParams, ZSpec,
};

#[cfg(test)]
mod tests;
