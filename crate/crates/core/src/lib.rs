//! Simulation and verification toolkit for the disordered Klein-Gordon chain
//! with quartic on-site anharmonicity.
//!
//! The chain lives on an integer interval `[a, b]` with Hamiltonian
//!
//! ```text
//! H(q, p) = sum_x [ p_x^2/2 + w_x^2 q_x^2/2 + (eta/2)(q_x - q_{x+1})^2 + (lambda/4) q_x^4 ]
//! ```
//!
//! and free boundary conditions. The crate is organised by subsystem:
//!
//! - [`model`]: disorder sampling, energies, forces.
//! - [`spectral`]: the Anderson operator, its eigensystem and localization diagnostics.
//! - [`denominators`]: small-denominator statistics over eigenfrequency tuples.
//! - [`dynamics`]: symplectic integrators and transport observables.
//! - [`gibbs`]: exact and Markov-chain samplers of the equilibrium measure.
//! - [`perturbation`]: mode algebra, the order-by-order commutator expansion and Z statistics.
//! - [`rng`]: hash-derived, collision-free random streams.
//! - [`stats`]: fits and estimators shared by the experiments.

pub mod denominators;
pub mod dynamics;
pub mod error;
pub mod gibbs;
pub mod model;
pub mod perturbation;
pub mod rng;
pub mod spectral;
pub mod stats;

pub use error::{Error, Result};
pub use model::{ChainState, DisorderLaw, DisorderRealization, Interval, ModelConfig};
pub use rng::{derive_stream, Label, StreamId};
pub use spectral::{EigenSystem, TridiagonalOperator};
