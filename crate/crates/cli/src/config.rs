use std::fmt;
use std::path::{Path, PathBuf};

use kgchain_core::ModelConfig;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::RunError;
use crate::experiments::Params;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Spectrum,
    Correlator,
    Minami,
    Denominator,
    GibbsCheck,
    Decorrelation,
    Current,
    GreenKubo,
    NoneqCurrent,
    ExpansionResidual,
    ZStats,
    Wavepacket,
}

impl Experiment {
    pub const ALL: [Experiment; 12] = [
        Experiment::Spectrum,
        Experiment::Correlator,
        Experiment::Minami,
        Experiment::Denominator,
        Experiment::GibbsCheck,
        Experiment::Decorrelation,
        Experiment::Current,
        Experiment::GreenKubo,
        Experiment::NoneqCurrent,
        Experiment::ExpansionResidual,
        Experiment::ZStats,
        Experiment::Wavepacket,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Spectrum => "spectrum",
            Experiment::Correlator => "correlator",
            Experiment::Minami => "minami",
            Experiment::Denominator => "denominator",
            Experiment::GibbsCheck => "gibbs_check",
            Experiment::Decorrelation => "decorrelation",
            Experiment::Current => "current",
            Experiment::GreenKubo => "green_kubo",
            Experiment::NoneqCurrent => "noneq_current",
            Experiment::ExpansionResidual => "expansion_residual",
            Experiment::ZStats => "z_stats",
            Experiment::Wavepacket => "wavepacket",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.name() == s)
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// The JSON document describing one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub model: ModelConfig,
    #[serde(default = "empty_object")]
    pub params: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
}

fn empty_object() -> Value {
    Value::Object(Default::default())
}

impl ExperimentConfig {
    pub fn new(experiment: Experiment, model: ModelConfig, params: Value) -> Self {
        Self {
            experiment,
            model,
            params,
            workers: None,
            out_dir: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, RunError> {
        serde_json::from_str(text).map_err(|e| RunError::validation(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| RunError::validation(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Parses and checks the experiment parameters against the model. No
    /// compute happens before this succeeds.
    pub fn validate(&self) -> Result<Params, RunError> {
        if self.workers == Some(0) {
            return Err(RunError::validation("workers must be >= 1"));
        }
        self.model
            .validate()
            .map_err(|e| RunError::validation(format!("model: {e}")))?;
        let params = Params::parse(self.experiment, &self.params)?;
        params
            .validate(&self.model)
            .map_err(|e| RunError::validation(format!("params: {e}")))?;
        Ok(params)
    }

    /// SHA-256 of the canonical JSON of everything that determines the
    /// outputs: experiment, model (including the seed) and params.
    pub fn hash(&self) -> String {
        let canonical = serde_json::json!({
            "experiment": self.experiment,
            "model": self.model,
            "params": self.params,
        });
        let digest = Sha256::digest(serde_json::to_vec(&canonical).expect("config serializes"));
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> Value {
        serde_json::json!({
            "experiment": "spectrum",
            "model": {"L": 2, "eta": 1.0, "disorder": {"law": "uniform", "lo": 0.5, "hi": 1.5}, "seed": 3},
        })
    }

    #[test]
    fn names_roundtrip() {
        for e in Experiment::ALL {
            assert_eq!(Experiment::from_name(e.name()), Some(e));
            let v = serde_json::to_value(e).unwrap();
            assert_eq!(v.as_str(), Some(e.name()));
        }
        assert_eq!(Experiment::from_name("nope"), None);
    }

    #[test]
    fn missing_params_take_defaults() {
        let cfg: ExperimentConfig = serde_json::from_value(base()).unwrap();
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        let mut v = base();
        v["colour"] = "blue".into();
        assert!(ExperimentConfig::from_json(&v.to_string()).is_err());

        let mut v = base();
        v["params"] = serde_json::json!({"realisations": 3});
        let cfg: ExperimentConfig = serde_json::from_value(v).unwrap();
        assert_eq!(cfg.validate().unwrap_err().exit_code(), 2);

        let mut v = base();
        v["model"]["eta"] = (-1.0).into();
        let cfg: ExperimentConfig = serde_json::from_value(v).unwrap();
        assert!(cfg.validate().is_err());

        let mut v = base();
        v["workers"] = 0.into();
        let cfg: ExperimentConfig = serde_json::from_value(v).unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn hash_ignores_workers_and_out_dir_but_not_seed() {
        let cfg: ExperimentConfig = serde_json::from_value(base()).unwrap();
        let mut other = cfg.clone();
        other.workers = Some(8);
        other.out_dir = Some("elsewhere".into());
        assert_eq!(cfg.hash(), other.hash());
        other.model.seed += 1;
        assert_ne!(cfg.hash(), other.hash());
        assert_eq!(cfg.hash().len(), 64);
    }
}
