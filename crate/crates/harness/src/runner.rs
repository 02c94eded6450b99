//! Runs repeated comparison experiments and aggregates their results.

use rayon::prelude::*;

use hdus_core::baselines::FedUnlConfig;
use hdus_core::data::{gen_blobs, load_mnist_dir, partition_noniid, BlobParams, LabeledDataset, PartitionPlan, PartitionedDataset};
use hdus_core::distill::DistillConfig;
use hdus_core::ensemble::EnsembleConfig;
use hdus_core::framework::{build_framework, FrameworkKind, FrameworkSetup};
use hdus_core::numeric::SgdConfig;
use hdus_core::rng::{stream, Purpose};
use hdus_core::sim::{metric, run_schedule, EventLog, Schedule, Topology};
use hdus_core::ClientId;

use crate::config::{DatasetConfig, ExperimentConfig, TopologyKind};
use crate::error::HarnessError;

#[derive(Debug, Clone, PartialEq)]
pub struct FrameworkOutcome {
    pub framework: FrameworkKind,
    /// Mean client accuracy at the last evaluation.
    pub final_accuracy: f64,
    pub training_steps: u64,
    pub recovery_steps: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepeatRecord {
    pub repeat: usize,
    pub seed: u64,
    pub log: EventLog,
    pub outcomes: Vec<FrameworkOutcome>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub framework: FrameworkKind,
    pub mean_accuracy: f64,
    /// Sample standard deviation over repeats; 0 for a single repeat.
    pub std_accuracy: f64,
    pub repeats: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub repeats: Vec<RepeatRecord>,
    pub summary: Vec<SummaryRow>,
}

impl RunReport {
    pub fn summary_for(&self, kind: FrameworkKind) -> Option<&SummaryRow> {
        self.summary.iter().find(|s| s.framework == kind)
    }
}

/// Mean and sample standard deviation (`n − 1` denominator).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Loads file-backed datasets once so repeats can share them.
pub fn load_source(cfg: &ExperimentConfig) -> Result<Option<LabeledDataset>, HarnessError> {
    match &cfg.dataset {
        DatasetConfig::Blobs { .. } => Ok(None),
        DatasetConfig::Mnist { path } | DatasetConfig::Fmnist { path } => load_mnist_dir(path)
            .map(Some)
            .map_err(|e| HarnessError::runtime(format!("loading {}", path.display()), e)),
    }
}

pub fn build_partition(
    cfg: &ExperimentConfig,
    source: Option<&LabeledDataset>,
    seed: u64,
) -> Result<PartitionedDataset, HarnessError> {
    let ctx = |what: &str| format!("seed {seed}: {what}");
    let generated;
    let data = match (&cfg.dataset, source) {
        (
            DatasetConfig::Blobs {
                n_per_class,
                classes,
                features,
                spread,
                clusters_per_class,
            },
            _,
        ) => {
            let params = BlobParams {
                n_per_class: *n_per_class,
                classes: *classes,
                features: *features,
                spread: *spread,
                clusters_per_class: *clusters_per_class,
            };
            generated = gen_blobs(&params, &mut stream(seed, Purpose::Dataset))
                .map_err(|e| HarnessError::runtime(ctx("generating blobs"), e))?;
            &generated
        }
        (_, Some(d)) => d,
        (_, None) => {
            generated = load_source(cfg)?.expect("file-backed dataset");
            &generated
        }
    };
    let plan = PartitionPlan {
        n_clients: cfg.n_clients,
        ref_size: cfg.partition.ref_size,
        test_fraction: cfg.partition.test_fraction,
        samples_per_client: cfg.partition.samples_per_client,
    };
    partition_noniid(data, &plan, &mut stream(seed, Purpose::Partition))
        .map_err(|e| HarnessError::runtime(ctx("partitioning"), e))
}

pub fn framework_setup(cfg: &ExperimentConfig) -> Result<FrameworkSetup, HarnessError> {
    let n = cfg.n_clients;
    let ensemble = EnsembleConfig::new(cfg.lambda).map_err(|e| HarnessError::runtime("ensemble", e))?;
    Ok(FrameworkSetup {
        tiers: cfg.resolved_tiers(),
        seed_tier: cfg.seed_tier.0,
        local: SgdConfig {
            epochs: cfg.local_epochs,
            lr: cfg.lr,
            batch_size: cfg.batch_size,
        },
        distill: DistillConfig {
            temperature: cfg.temperature,
            epochs: cfg.incubate_epochs,
            lr: cfg.distill_lr,
            batch_size: cfg.batch_size,
        },
        ensemble,
        incubate_every_rounds: cfg.incubate_every_rounds,
        exchange_every_rounds: cfg.exchange_every_rounds,
        fedunl: FedUnlConfig {
            alpha: cfg.fedunl.alpha,
            temperature: cfg.fedunl.temperature.unwrap_or(cfg.temperature),
            epochs: cfg.fedunl.epochs,
            lr: cfg.fedunl.lr,
            batch_size: cfg.batch_size,
            remedy_rounds: cfg.fedunl.remedy_rounds,
        },
        topology: match cfg.topology {
            TopologyKind::Complete => Topology::complete(n),
            TopologyKind::Ring => Topology::ring(n),
            TopologyKind::Isolated => Topology::isolated(n),
        },
    })
}

/// `rounds` rounds in total; with an unlearning request, `round` of them come
/// before the request and the rest after.
pub fn schedule(cfg: &ExperimentConfig) -> Schedule {
    let rounds = cfg.rounds as u32;
    match cfg.unlearn {
        None => Schedule::training(rounds),
        Some(u) => Schedule::with_unlearning(u.round as u32, ClientId(u.client), rounds - u.round as u32),
    }
}

/// One repeat: every configured framework on the same partition and seed.
pub fn run_repeat(
    cfg: &ExperimentConfig,
    source: Option<&LabeledDataset>,
    repeat: usize,
) -> Result<RepeatRecord, HarnessError> {
    let seed = cfg.master_seed.wrapping_add(repeat as u64);
    let partition = build_partition(cfg, source, seed)?;
    let setup = framework_setup(cfg)?;
    let schedule = schedule(cfg);
    let mut log = EventLog::new();
    let mut outcomes = Vec::new();
    for kind in cfg.framework_kinds() {
        let ctx = || format!("repeat {repeat} (seed {seed}), framework {kind}");
        let mut fw = build_framework(kind, &partition, &setup, seed).map_err(|e| HarnessError::runtime(ctx(), e))?;
        let mut own = EventLog::new();
        run_schedule(fw.as_mut(), &schedule, &partition.test, cfg.eval_scope.into(), &mut own)
            .map_err(|e| HarnessError::runtime(ctx(), e))?;
        let final_accuracy = own
            .series(metric::MEAN_ACCURACY, None)
            .last()
            .map_or(f64::NAN, |&(_, v)| v);
        outcomes.push(FrameworkOutcome {
            framework: kind,
            final_accuracy,
            training_steps: fw.training_steps(),
            recovery_steps: fw.recovery_steps(),
        });
        log.extend(own);
    }
    Ok(RepeatRecord {
        repeat,
        seed,
        log,
        outcomes,
    })
}

/// Validates, then runs all repeats (in parallel) and aggregates.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunReport, HarnessError> {
    cfg.validate()?;
    let source = load_source(cfg)?;
    let repeats = (0..cfg.repeats)
        .into_par_iter()
        .map(|r| run_repeat(cfg, source.as_ref(), r))
        .collect::<Result<Vec<_>, _>>()?;
    let summary = cfg
        .framework_kinds()
        .into_iter()
        .map(|kind| {
            let accs: Vec<f64> = repeats
                .iter()
                .flat_map(|r| r.outcomes.iter().filter(|o| o.framework == kind).map(|o| o.final_accuracy))
                .collect();
            let (mean_accuracy, std_accuracy) = mean_std(&accs);
            SummaryRow {
                framework: kind,
                mean_accuracy,
                std_accuracy,
                repeats: accs.len(),
            }
        })
        .collect();
    Ok(RunReport {
        config_hash: cfg.hash(),
        config: cfg.clone(),
        repeats,
        summary,
    })
}
