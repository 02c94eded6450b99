#![allow(dead_code)]

use hdus_core::data::{gen_blobs, partition_noniid, BlobParams, PartitionPlan, PartitionedDataset};
use hdus_core::distill::DistillConfig;
use hdus_core::ensemble::EnsembleConfig;
use hdus_core::framework::FrameworkSetup;
use hdus_core::numeric::{SgdConfig, Tier};
use hdus_core::rng::{stream, Purpose};
use hdus_core::sim::{HdusConfig, Topology};

pub fn blob_partition(seed: u64, n_clients: usize, per_client: usize) -> PartitionedDataset {
    let data = gen_blobs(
        &BlobParams {
            n_per_class: 120,
            classes: 10,
            features: 12,
            spread: 1.0,
            clusters_per_class: 2,
        },
        &mut stream(seed, Purpose::Dataset),
    )
    .unwrap();
    partition_noniid(
        &data,
        &PartitionPlan {
            n_clients,
            ref_size: 150,
            test_fraction: 0.2,
            samples_per_client: Some(per_client),
        },
        &mut stream(seed, Purpose::Partition),
    )
    .unwrap()
}

pub fn local() -> SgdConfig {
    SgdConfig {
        epochs: 1,
        lr: 0.05,
        batch_size: 16,
    }
}

pub fn distill() -> DistillConfig {
    DistillConfig {
        temperature: 3.0,
        epochs: 1,
        lr: 0.1,
        batch_size: 16,
    }
}

pub fn hdus_config(partition: &PartitionedDataset, lambda: f64) -> HdusConfig {
    HdusConfig {
        local: local(),
        distill: distill(),
        ensemble: EnsembleConfig::new(lambda).unwrap(),
        seed_spec: Tier::Small.spec(partition.feature_dim(), partition.class_count()).unwrap(),
        incubate_every_rounds: 1,
        exchange_every_rounds: 1,
    }
}

pub fn mixed_tiers(n: usize) -> Vec<Tier> {
    (0..n).map(|i| [Tier::Small, Tier::Medium, Tier::Large][i % 3]).collect()
}

pub fn setup(partition: &PartitionedDataset, lambda: f64) -> FrameworkSetup {
    let n = partition.n_clients();
    FrameworkSetup {
        tiers: mixed_tiers(n),
        seed_tier: Tier::Small,
        local: local(),
        distill: distill(),
        ensemble: EnsembleConfig::new(lambda).unwrap(),
        incubate_every_rounds: 1,
        exchange_every_rounds: 1,
        fedunl: Default::default(),
        topology: Topology::complete(n),
    }
}
