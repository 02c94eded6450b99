#![allow(dead_code)]

use hdus_harness::ExperimentConfig;

pub const SMALL_TOML: &str = r#"
schema_version = 1
n_clients = 4
rounds = 4
repeats = 2
master_seed = 5

[dataset]
kind = "blobs"
n_per_class = 150
features = 8

[partition]
samples_per_client = 150
ref_size = 200
"#;

pub fn small() -> ExperimentConfig {
    ExperimentConfig::from_toml(SMALL_TOML).unwrap()
}
