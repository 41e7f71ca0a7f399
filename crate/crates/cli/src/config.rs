use std::path::{Path, PathBuf};

use ris_chanest::channel_sim::{DatasetConfig, SystemGeometry};
use ris_chanest::eval_bench::{BenchConfig, SweepConfig};
use ris_chanest::models::{ModelSpec, MrdnSpec};
use ris_chanest::training::TrainConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

/// Everything a command needs, read from one JSON document. Missing
/// sections take their defaults; unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    /// Where `gen-data` writes and `train`/`bench` read the splits. Defaults
    /// to `<out_dir>/data`.
    #[serde(default)]
    pub dataset_dir: Option<PathBuf>,
    #[serde(default)]
    pub geometry: SystemGeometry,
    #[serde(default)]
    pub dataset: DatasetConfig,
    #[serde(default = "default_model")]
    pub model: ModelSpec,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub bench: BenchConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_model() -> ModelSpec {
    ModelSpec::Mrdn(MrdnSpec::default())
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            out_dir: default_out_dir(),
            dataset_dir: None,
            geometry: SystemGeometry::default(),
            dataset: DatasetConfig::default(),
            model: default_model(),
            train: TrainConfig::default(),
            bench: BenchConfig::default(),
            sweep: SweepConfig::default(),
        }
    }
}

/// Parses and validates a config document. Errors carry the key path of the
/// offending entry.
pub fn parse_run_config(text: &str) -> CliResult<RunConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        CliError::Config(format!("config error at `{path}`: {}", e.into_inner()))
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_run_config(path: &Path) -> CliResult<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_run_config(&text).map_err(|e| match e {
        CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}

impl RunConfig {
    pub fn validate(&self) -> CliResult<()> {
        self.geometry.validate()?;
        self.dataset.validate()?;
        self.model.validate("model")?;
        self.train.validate("train")?;
        self.bench.validate("bench")?;
        let s = &self.sweep;
        if s.features.is_empty() || s.n_r.is_empty() || s.seeds.is_empty() {
            return Err(CliError::Config(
                "config error at `sweep`: features, n_r and seeds must be nonempty".into(),
            ));
        }
        if s.features.contains(&0) || s.n_r.contains(&0) || s.b_layers == 0 {
            return Err(CliError::Config(
                "config error at `sweep`: sizes must be at least 1".into(),
            ));
        }
        Ok(())
    }

    pub fn dataset_dir(&self) -> PathBuf {
        self.dataset_dir
            .clone()
            .unwrap_or_else(|| self.out_dir.join("data"))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises") + "\n"
    }

    /// SHA-256 of the canonical JSON form with the output locations removed,
    /// so the same experiment hashes equally wherever it is written.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serialises");
        let map = v.as_object_mut().expect("object");
        map.remove("out_dir");
        map.remove("dataset_dir");
        hex::encode(Sha256::digest(v.to_string().as_bytes()))
    }
}

/// Short hash identifying a system geometry.
pub fn geometry_fingerprint(g: &SystemGeometry) -> String {
    let v = serde_json::to_value(g).expect("geometry serialises");
    hex::encode(&Sha256::digest(v.to_string().as_bytes())[..8])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_all_defaults() {
        assert_eq!(parse_run_config("{}").unwrap(), RunConfig::default());
    }

    #[test]
    fn unknown_key_names_its_path() {
        let err = parse_run_config(r#"{"train": {"epochs": 3, "lr": 0.1}}"#).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("train"), "{msg}");
        assert!(msg.contains("lr"), "{msg}");
        assert!(matches!(err, CliError::Config(_)));
    }

    #[test]
    fn unknown_model_kind_is_config_error() {
        let err = parse_run_config(r#"{"model": {"kind": "unet"}}"#).unwrap_err();
        assert!(err.to_string().contains("model"), "{err}");
        assert_eq!(err.exit_code(), crate::error::exit::CONFIG);
    }

    #[test]
    fn invalid_values_rejected_after_parse() {
        let err = parse_run_config(r#"{"train": {"batch_size": 0}}"#).unwrap_err();
        assert!(err.to_string().contains("train.batch_size"), "{err}");
    }

    #[test]
    fn hash_ignores_output_locations() {
        let a = RunConfig::default();
        let b = RunConfig {
            out_dir: "elsewhere".into(),
            dataset_dir: Some("data".into()),
            ..RunConfig::default()
        };
        let c = RunConfig {
            seed: 1,
            ..RunConfig::default()
        };
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn resolved_json_round_trips() {
        let cfg = RunConfig {
            seed: 9,
            ..RunConfig::default()
        };
        assert_eq!(parse_run_config(&cfg.to_json()).unwrap(), cfg);
    }
}
