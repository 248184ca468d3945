//! Experiment harness for the Klein-Gordon chain lab.
//!
//! A run is described by one JSON document:
//!
//! ```json
//! {
//!   "experiment": "denominator",
//!   "model": { "L": 10, "eta": 1.0, "lambda": 0.0,
//!              "disorder": { "law": "uniform", "lo": 0.5, "hi": 1.5 }, "seed": 7 },
//!   "params": { "interval_size": 20, "realizations": 10000 },
//!   "workers": 4,
//!   "out_dir": "runs/denominator"
//! }
//! ```
//!
//! `model` is [`kgchain_core::ModelConfig`]; the disorder `law` is one of
//! `uniform {lo, hi}`, `bump {lo, hi}`, `point {omega}` or
//! `fixed {omega_sq: [...]}` (one value per site of `[-L, L]`). `params` is
//! experiment specific and documented on each module under [`experiments`];
//! unknown keys are rejected and omitted keys take the documented defaults.
//!
//! Every run writes its CSV tables plus a `run.json` manifest
//! ([`RunRecord`]) into the output directory. The manifest is written before
//! any compute with `finalized: false` and rewritten when the run ends.
//! Outputs depend only on the config and the master seed: every random
//! stream is derived from a label path, and ensembles are reduced by index.

pub mod config;
pub mod error;
pub mod experiments;
pub mod record;
mod runner;

pub use config::{Experiment, ExperimentConfig};
pub use error::RunError;
pub use record::{RunRecord, RunStatus};
pub use runner::{run, RunOptions, RunOutcome, OUT_DIR_ENV};
