//! The run configuration document.

use std::fs;
use std::path::{Path, PathBuf};

use gensynth_core::dataset::{load_csv, load_idx, split, synth_blobs};
use gensynth_core::synthesis::SynthesisConfig;
use gensynth_core::{
    parse_network, InquisitorConfig, LabeledDataset, MetricConfig, NetworkGraph, RequirementSpec,
    TrainConfig,
};
use serde::{Deserialize, Serialize};

use crate::Failure;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Blobs,
    Csv,
    Idx,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlobsSection {
    pub classes: usize,
    pub per_class: usize,
    pub sigma: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdxSection {
    pub images: PathBuf,
    pub labels: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSection {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub source: Source,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blobs: Option<BlobsSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub idx: Option<IdxSection>,
    pub split: SplitSection,
    #[serde(default)]
    pub split_seed: u64,
}

fn default_stimuli() -> usize {
    64
}
fn default_probe_fraction() -> f64 {
    1.0
}
fn default_validation_seeds() -> usize {
    10
}
fn default_interval() -> u64 {
    5
}
fn default_floor() -> f64 {
    0.9
}
fn default_master_seed() -> u64 {
    1
}
fn default_init_logit() -> f64 {
    gensynth_core::generator::DEFAULT_INIT_LOGIT
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthesisSection {
    pub cycles: u64,
    #[serde(default = "default_stimuli")]
    pub stimuli_n: usize,
    #[serde(default = "default_probe_fraction")]
    pub probe_fraction: f64,
    #[serde(default = "default_validation_seeds")]
    pub validation_seeds: usize,
    #[serde(default = "default_interval")]
    pub checkpoint_interval: u64,
    #[serde(default = "default_floor")]
    pub satisfaction_floor: f64,
    #[serde(default = "default_master_seed")]
    pub master_seed: u64,
    #[serde(default = "default_init_logit")]
    pub init_logit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetSection,
    /// Network document, relative to the config file's directory.
    pub prototype: PathBuf,
    pub requirement: RequirementSpec,
    #[serde(default)]
    pub metric: MetricConfig,
    pub trainer: TrainConfig,
    #[serde(default)]
    pub inquisitor: InquisitorConfig,
    pub synthesis: SynthesisSection,
}

/// A parsed config with its prototype and dataset materialized.
#[derive(Debug, Clone)]
pub struct LoadedRun {
    pub config: RunConfig,
    pub prototype: NetworkGraph,
    pub dataset: LabeledDataset,
}

impl LoadedRun {
    pub fn synthesis_config(&self) -> SynthesisConfig {
        self.config.synthesis_config()
    }
}

fn field<E: std::fmt::Display>(name: &'static str) -> impl Fn(E) -> Failure {
    move |e| Failure::config(format!("{name}: {e}"))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, Failure> {
        serde_json::from_str(text).map_err(|e| Failure::config(format!("config: {e}")))
    }

    pub fn synthesis_config(&self) -> SynthesisConfig {
        let s = &self.synthesis;
        SynthesisConfig {
            cycles: s.cycles,
            train: self.trainer.clone(),
            inquisitor: self.inquisitor,
            stimuli_n: s.stimuli_n,
            probe_fraction: s.probe_fraction,
            validation_seeds: s.validation_seeds,
            checkpoint_interval: s.checkpoint_interval,
            satisfaction_floor: s.satisfaction_floor,
            master_seed: s.master_seed,
            init_logit: s.init_logit,
        }
    }

    /// Check every section; errors name the offending field.
    pub fn validate(&self) -> Result<(), Failure> {
        let sp = self.dataset.split;
        let fractions = [sp.train, sp.val, sp.test];
        let sum: f64 = fractions.iter().sum();
        if fractions.iter().any(|f| !(f.is_finite() && *f >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(Failure::config(format!(
                "dataset.split: fractions must be nonnegative and sum to 1, got {sum}"
            )));
        }
        match self.dataset.source {
            Source::Blobs if self.dataset.blobs.is_none() => {
                return Err(Failure::config(
                    "dataset.blobs: required when source is 'blobs'",
                ))
            }
            Source::Csv if self.dataset.csv.is_none() => {
                return Err(Failure::config(
                    "dataset.csv: required when source is 'csv'",
                ))
            }
            Source::Idx if self.dataset.idx.is_none() => {
                return Err(Failure::config(
                    "dataset.idx: required when source is 'idx'",
                ))
            }
            _ => {}
        }
        self.requirement.validate().map_err(field("requirement"))?;
        self.metric.validate().map_err(field("metric"))?;
        self.trainer.validate().map_err(field("trainer"))?;
        self.inquisitor.validate().map_err(field("inquisitor"))?;
        self.synthesis_config()
            .validate()
            .map_err(field("synthesis"))?;
        Ok(())
    }

    pub fn load_dataset(&self, base: &Path) -> Result<LabeledDataset, Failure> {
        let d = &self.dataset;
        let raw = match d.source {
            Source::Blobs => {
                let b = d.blobs.as_ref().expect("validated");
                synth_blobs(b.classes, b.per_class, b.sigma, b.seed)
                    .map_err(field("dataset.blobs"))?
            }
            Source::Csv => load_csv(base.join(d.csv.as_ref().expect("validated")))
                .map_err(field("dataset.csv"))?,
            Source::Idx => {
                let idx = d.idx.as_ref().expect("validated");
                load_idx(base.join(&idx.images), base.join(&idx.labels))
                    .map_err(field("dataset.idx"))?
            }
        };
        split(
            &raw,
            [d.split.train, d.split.val, d.split.test],
            d.split_seed,
        )
        .map_err(field("dataset.split"))
    }
}

fn base_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

pub fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::config(format!("{}: {e}", path.display())))
}

pub fn load_network(path: &Path) -> Result<NetworkGraph, Failure> {
    parse_network(&read_text(path)?)
        .map_err(|e| Failure::config(format!("{}: {e}", path.display())))
}

/// Parse, validate and materialize a config file.
pub fn load_run(path: &Path) -> Result<LoadedRun, Failure> {
    let config = RunConfig::parse(&read_text(path)?)?;
    config.validate()?;
    let base = base_dir(path);
    let prototype = load_network(&base.join(&config.prototype))
        .map_err(|f| Failure::config(format!("prototype: {}", f.message)))?;
    let dataset = config.load_dataset(&base)?;
    if prototype.input_shape() != dataset.shape() {
        return Err(Failure::config(format!(
            "prototype: input shape {} does not match dataset shape {}",
            prototype.input_shape(),
            dataset.shape()
        )));
    }
    Ok(LoadedRun {
        config,
        prototype,
        dataset,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "dataset": {"source": "blobs", "blobs": {"classes": 3, "per_class": 20, "sigma": 0.1, "seed": 1},
                    "split": {"train": 0.7, "val": 0.3, "test": 0.0}},
        "prototype": "p.json",
        "requirement": {"min_accuracy": 0.8},
        "trainer": {"epochs": 2, "batch_size": 8, "learning_rate": 0.1, "momentum": 0.9},
        "synthesis": {"cycles": 3}
    }"#;

    #[test]
    fn defaults_fill_in() {
        let c = RunConfig::parse(MINIMAL).unwrap();
        c.validate().unwrap();
        let s = c.synthesis_config();
        assert_eq!(
            (s.stimuli_n, s.validation_seeds, s.checkpoint_interval),
            (64, 10, 5)
        );
        assert_eq!(s.inquisitor, InquisitorConfig::default());
        assert_eq!(c.metric, MetricConfig::default());
    }

    #[test]
    fn errors_name_the_field() {
        let bad = MINIMAL.replace("\"val\": 0.3", "\"val\": 0.4");
        let e = RunConfig::parse(&bad).unwrap().validate().unwrap_err();
        assert!(e.message.starts_with("dataset.split"), "{}", e.message);
        assert_eq!(e.code, 2);

        let bad = MINIMAL.replace("\"cycles\": 3", "\"cycles\": 3, \"probe_fraction\": 0");
        let e = RunConfig::parse(&bad).unwrap().validate().unwrap_err();
        assert!(e.message.starts_with("synthesis"), "{}", e.message);

        let bad = MINIMAL.replace("\"min_accuracy\": 0.8", "\"min_accuracy\": 1.8");
        assert!(RunConfig::parse(&bad)
            .unwrap()
            .validate()
            .unwrap_err()
            .message
            .starts_with("requirement"));

        let unknown = MINIMAL.replace("\"cycles\": 3", "\"cycles\": 3, \"cylces\": 4");
        let e = RunConfig::parse(&unknown).unwrap_err();
        assert!(e.message.contains("cylces"), "{}", e.message);

        let missing = MINIMAL.replace("\"source\": \"blobs\"", "\"source\": \"csv\"");
        assert!(RunConfig::parse(&missing)
            .unwrap()
            .validate()
            .unwrap_err()
            .message
            .starts_with("dataset.csv"));
    }
}
