//! Experiment configuration: TOML schema, defaults, validation, hashing.

use std::fmt;
use std::path::{Path, PathBuf};

use hdus_core::framework::{EvalScope, FrameworkKind};
use hdus_core::numeric::Tier;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::HarnessError;

pub const SCHEMA_VERSION: u32 = 1;

/// A validation failure pinned to the offending key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl ConfigError {
    fn new(key: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            key: key.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.key, self.message)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct FrameworkName(pub FrameworkKind);

impl TryFrom<String> for FrameworkName {
    type Error = String;
    fn try_from(s: String) -> Result<Self, String> {
        s.parse().map(FrameworkName).map_err(|e: hdus_core::Error| e.to_string())
    }
}

impl From<FrameworkName> for String {
    fn from(f: FrameworkName) -> String {
        f.0.name().to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct TierName(pub Tier);

impl TryFrom<String> for TierName {
    type Error = String;
    fn try_from(s: String) -> Result<Self, String> {
        s.parse().map(TierName).map_err(|e: hdus_core::Error| e.to_string())
    }
}

impl From<TierName> for String {
    fn from(t: TierName) -> String {
        t.0.name().to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setting {
    Homogeneous,
    Heterogeneous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    ClientClasses,
    Full,
}

impl From<Scope> for EvalScope {
    fn from(s: Scope) -> Self {
        match s {
            Scope::ClientClasses => EvalScope::ClientClasses,
            Scope::Full => EvalScope::Full,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologyKind {
    Complete,
    Ring,
    Isolated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    Blobs {
        #[serde(default = "defaults::n_per_class")]
        n_per_class: usize,
        #[serde(default = "defaults::classes")]
        classes: usize,
        #[serde(default = "defaults::features")]
        features: usize,
        #[serde(default = "defaults::spread")]
        spread: f64,
        #[serde(default = "defaults::clusters_per_class")]
        clusters_per_class: usize,
    },
    /// Handwritten digits in IDX format.
    Mnist { path: PathBuf },
    /// Clothing images in the same IDX layout.
    Fmnist { path: PathBuf },
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig::Blobs {
            n_per_class: defaults::n_per_class(),
            classes: defaults::classes(),
            features: defaults::features(),
            spread: defaults::spread(),
            clusters_per_class: defaults::clusters_per_class(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PartitionConfig {
    /// Rows per client; omitted means the whole training pool split evenly.
    pub samples_per_client: Option<usize>,
    pub ref_size: usize,
    pub test_fraction: f64,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        Self {
            samples_per_client: Some(600),
            ref_size: 1000,
            test_fraction: 0.2,
        }
    }
}

/// One client leaves after `round` training rounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnlearnConfig {
    pub client: u32,
    pub round: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FedUnlSection {
    pub alpha: f64,
    /// Remedy distillation temperature; defaults to the top-level temperature.
    pub temperature: Option<f64>,
    pub epochs: usize,
    pub lr: f64,
    pub remedy_rounds: usize,
}

impl Default for FedUnlSection {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            temperature: None,
            epochs: 1,
            lr: 0.05,
            remedy_rounds: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default = "ExperimentConfig::file_defaults", deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: Option<u32>,
    pub frameworks: Vec<FrameworkName>,
    pub n_clients: usize,
    pub setting: Setting,
    /// Per-client main-model tiers; derived from `setting` when omitted.
    pub tiers: Option<Vec<TierName>>,
    pub seed_tier: TierName,
    pub lambda: f64,
    pub temperature: f64,
    pub local_epochs: usize,
    pub incubate_epochs: usize,
    pub lr: f64,
    pub distill_lr: f64,
    pub batch_size: usize,
    pub rounds: usize,
    pub incubate_every_rounds: usize,
    pub exchange_every_rounds: usize,
    pub topology: TopologyKind,
    pub eval_scope: Scope,
    pub repeats: usize,
    pub master_seed: u64,
    /// Where outputs go. Not part of the snapshot or hash.
    #[serde(skip_serializing)]
    pub output_path: PathBuf,
    pub dataset: DatasetConfig,
    pub partition: PartitionConfig,
    pub unlearn: Option<UnlearnConfig>,
    pub fedunl: FedUnlSection,
}

mod defaults {
    pub fn n_per_class() -> usize {
        600
    }
    pub fn classes() -> usize {
        10
    }
    pub fn features() -> usize {
        20
    }
    pub fn spread() -> f64 {
        1.0
    }
    pub fn clusters_per_class() -> usize {
        5
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            schema_version: Some(SCHEMA_VERSION),
            frameworks: FrameworkKind::ALL.into_iter().map(FrameworkName).collect(),
            n_clients: 5,
            setting: Setting::Heterogeneous,
            tiers: None,
            seed_tier: TierName(Tier::Small),
            lambda: 0.3,
            temperature: 3.0,
            local_epochs: 1,
            incubate_epochs: 2,
            lr: 0.05,
            distill_lr: 0.2,
            batch_size: 32,
            rounds: 30,
            incubate_every_rounds: 1,
            exchange_every_rounds: 1,
            topology: TopologyKind::Complete,
            eval_scope: Scope::ClientClasses,
            repeats: 5,
            master_seed: 0,
            output_path: PathBuf::from("results"),
            dataset: DatasetConfig::default(),
            partition: PartitionConfig::default(),
            unlearn: None,
            fedunl: FedUnlSection::default(),
        }
    }
}

impl ExperimentConfig {
    /// Defaults for keys a file leaves out; the version must be stated.
    fn file_defaults() -> Self {
        Self {
            schema_version: None,
            ..Self::default()
        }
    }

    /// Parses TOML text; unknown and duplicate keys are errors.
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Config(ConfigError::new("<file>", e.to_string().trim_end())))
    }

    /// Reads, parses and validates a config file.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(ConfigError::new("<file>", format!("{}: {e}", path.display()))))?;
        let cfg = Self::from_toml(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Main-model tier of every client.
    pub fn resolved_tiers(&self) -> Vec<Tier> {
        match (&self.tiers, self.setting) {
            (Some(t), _) => t.iter().map(|t| t.0).collect(),
            (None, Setting::Homogeneous) => vec![Tier::Large; self.n_clients],
            (None, Setting::Heterogeneous) => (0..self.n_clients)
                .map(|i| [Tier::Small, Tier::Medium, Tier::Large][i % 3])
                .collect(),
        }
    }

    pub fn framework_kinds(&self) -> Vec<FrameworkKind> {
        self.frameworks.iter().map(|f| f.0).collect()
    }

    pub fn class_count(&self) -> usize {
        match self.dataset {
            DatasetConfig::Blobs { classes, .. } => classes,
            DatasetConfig::Mnist { .. } | DatasetConfig::Fmnist { .. } => 10,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.check().map_err(HarnessError::Config)
    }

    fn check(&self) -> Result<(), ConfigError> {
        let err = |k: &str, m: String| Err(ConfigError::new(k, m));
        match self.schema_version {
            None => return err("schema_version", "required".into()),
            Some(SCHEMA_VERSION) => {}
            Some(v) => return err("schema_version", format!("unsupported version {v}, expected {SCHEMA_VERSION}")),
        }
        if self.frameworks.is_empty() {
            return err("frameworks", "at least one framework is required".into());
        }
        let mut seen = Vec::new();
        for f in &self.frameworks {
            if seen.contains(f) {
                return err("frameworks", format!("`{}` listed twice", f.0));
            }
            seen.push(*f);
        }
        if self.n_clients == 0 {
            return err("n_clients", "must be >= 1".into());
        }
        if self.n_clients > self.class_count() {
            return err(
                "n_clients",
                format!("{} clients cannot each omit a distinct class out of {}", self.n_clients, self.class_count()),
            );
        }
        if let Some(t) = &self.tiers {
            if t.len() != self.n_clients {
                return err("tiers", format!("{} tiers for {} clients", t.len(), self.n_clients));
            }
        }
        let smallest = self.resolved_tiers().into_iter().min().unwrap_or(Tier::Small);
        if self.seed_tier.0 > smallest {
            return err(
                "seed_tier",
                format!("seed tier `{}` is larger than the smallest main tier `{}`", self.seed_tier.0.name(), smallest.name()),
            );
        }
        if !(0.0..1.0).contains(&self.lambda) {
            return err("lambda", format!("must be in [0, 1), got {}", self.lambda));
        }
        positive("temperature", self.temperature)?;
        non_negative("lr", self.lr)?;
        non_negative("distill_lr", self.distill_lr)?;
        at_least_one("incubate_epochs", self.incubate_epochs)?;
        at_least_one("batch_size", self.batch_size)?;
        at_least_one("rounds", self.rounds)?;
        at_least_one("incubate_every_rounds", self.incubate_every_rounds)?;
        at_least_one("exchange_every_rounds", self.exchange_every_rounds)?;
        at_least_one("repeats", self.repeats)?;
        match &self.dataset {
            DatasetConfig::Blobs {
                n_per_class,
                classes,
                features,
                spread,
                clusters_per_class,
            } => {
                at_least_one("dataset.n_per_class", *n_per_class)?;
                if *classes < 2 {
                    return err("dataset.classes", "must be >= 2".into());
                }
                if *features < 2 {
                    return err("dataset.features", "must be >= 2".into());
                }
                non_negative("dataset.spread", *spread)?;
                at_least_one("dataset.clusters_per_class", *clusters_per_class)?;
            }
            DatasetConfig::Mnist { path } | DatasetConfig::Fmnist { path } => {
                if path.as_os_str().is_empty() {
                    return err("dataset.path", "must not be empty".into());
                }
            }
        }
        if !(0.0..1.0).contains(&self.partition.test_fraction) || self.partition.test_fraction == 0.0 {
            return err(
                "partition.test_fraction",
                format!("must be in (0, 1), got {}", self.partition.test_fraction),
            );
        }
        at_least_one("partition.ref_size", self.partition.ref_size)?;
        if self.partition.samples_per_client == Some(0) {
            return err("partition.samples_per_client", "must be >= 1".into());
        }
        if let Some(u) = self.unlearn {
            if u.client as usize >= self.n_clients {
                return err("unlearn.client", format!("no client {} among {}", u.client, self.n_clients));
            }
            if u.round == 0 || u.round > self.rounds {
                return err("unlearn.round", format!("must be in [1, {}], got {}", self.rounds, u.round));
            }
        }
        if !(0.0..=1.0).contains(&self.fedunl.alpha) {
            return err("fedunl.alpha", format!("must be in [0, 1], got {}", self.fedunl.alpha));
        }
        if let Some(t) = self.fedunl.temperature {
            positive("fedunl.temperature", t)?;
        }
        non_negative("fedunl.lr", self.fedunl.lr)?;
        Ok(())
    }

    /// Canonical TOML rendering of everything that affects results.
    pub fn snapshot(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    /// SHA-256 of the snapshot, lowercase hex.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.snapshot().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn positive(key: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::new(key, format!("must be > 0, got {v}")))
    }
}

fn non_negative(key: &str, v: f64) -> Result<(), ConfigError> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::new(key, format!("must be >= 0, got {v}")))
    }
}

fn at_least_one(key: &str, v: usize) -> Result<(), ConfigError> {
    if v >= 1 {
        Ok(())
    } else {
        Err(ConfigError::new(key, "must be >= 1"))
    }
}
