//! The common surface every learning/unlearning framework exposes to the
//! round scheduler, plus construction of any framework from a partition.

use std::fmt;
use std::str::FromStr;

use crate::baselines::{Dsgd, FedUnl, FedUnlConfig, Isgd, SisaA};
use crate::data::{LabeledDataset, PartitionedDataset};
use crate::distill::DistillConfig;
use crate::ensemble::EnsembleConfig;
use crate::error::{Error, Result};
use crate::numeric::{accuracy, Matrix, SgdConfig, Tier};
use crate::sim::{init_network, HdusConfig, Topology};
use crate::ClientId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FrameworkKind {
    Hdus,
    Isgd,
    Dsgd,
    FedUnl,
    SisaA,
}

impl FrameworkKind {
    pub const ALL: [FrameworkKind; 5] = [
        FrameworkKind::Hdus,
        FrameworkKind::Isgd,
        FrameworkKind::Dsgd,
        FrameworkKind::FedUnl,
        FrameworkKind::SisaA,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FrameworkKind::Hdus => "hdus",
            FrameworkKind::Isgd => "isgd",
            FrameworkKind::Dsgd => "dsgd",
            FrameworkKind::FedUnl => "fedunl",
            FrameworkKind::SisaA => "sisa_a",
        }
    }

    /// Whether clients may run different architectures.
    pub fn supports_heterogeneous(self) -> bool {
        matches!(self, FrameworkKind::Hdus | FrameworkKind::Isgd)
    }
}

impl fmt::Display for FrameworkKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FrameworkKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FrameworkKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown framework `{s}`")))
    }
}

/// Which test rows a client is scored on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EvalScope {
    /// The whole shared test set.
    Full,
    /// Shared test rows whose label is in the client's own class menu.
    #[default]
    ClientClasses,
}

/// Test rows for one client under `scope`.
pub fn scoped_test(test: &LabeledDataset, menu: &[usize], scope: EvalScope) -> Result<LabeledDataset> {
    match scope {
        EvalScope::Full => Ok(test.clone()),
        EvalScope::ClientClasses => test.restrict_to_classes(menu),
    }
}

/// Accuracy of predictions (`probabilities` or logits) on a labeled set.
pub fn score(outputs: &Matrix, data: &LabeledDataset) -> Result<f64> {
    accuracy(outputs, data.labels())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub per_client: Vec<(ClientId, f64)>,
}

impl Evaluation {
    /// Mean over the evaluated clients; `NaN` when none are active.
    pub fn mean(&self) -> f64 {
        if self.per_client.is_empty() {
            return f64::NAN;
        }
        self.per_client.iter().map(|(_, a)| a).sum::<f64>() / self.per_client.len() as f64
    }
}

/// One participant population running one protocol.
pub trait Framework: Send {
    fn kind(&self) -> FrameworkKind;

    /// Active clients in ascending id order.
    fn active_clients(&self) -> Vec<ClientId>;

    /// Local computation of a round.
    fn train_phase(&mut self) -> Result<()>;

    /// Communication barrier of a round.
    fn exchange_phase(&mut self) -> Result<()>;

    /// Processes a client's request to leave and have its influence removed.
    fn unlearn(&mut self, client: ClientId) -> Result<()>;

    fn evaluate(&self, test: &LabeledDataset, scope: EvalScope) -> Result<Evaluation>;

    /// Total SGD updates applied anywhere in this framework so far.
    fn training_steps(&self) -> u64;

    /// SGD updates spent restoring performance after unlearning.
    fn recovery_steps(&self) -> u64 {
        0
    }
}

/// Everything needed to instantiate any framework on a partition.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameworkSetup {
    /// Per-client main-model tier for frameworks that allow heterogeneity.
    pub tiers: Vec<Tier>,
    pub seed_tier: Tier,
    pub local: SgdConfig,
    pub distill: DistillConfig,
    pub ensemble: EnsembleConfig,
    pub incubate_every_rounds: usize,
    pub exchange_every_rounds: usize,
    pub fedunl: FedUnlConfig,
    pub topology: Topology,
}

impl FrameworkSetup {
    /// Tier used by frameworks that need one architecture for everybody: the
    /// smallest tier in the allocation.
    pub fn homogeneous_tier(&self) -> Tier {
        self.tiers.iter().copied().min().unwrap_or(Tier::Small)
    }
}

pub fn build_framework(
    kind: FrameworkKind,
    partition: &PartitionedDataset,
    setup: &FrameworkSetup,
    master_seed: u64,
) -> Result<Box<dyn Framework>> {
    let n = partition.n_clients();
    if setup.tiers.len() != n {
        return Err(Error::Config(format!(
            "{} tiers given for {n} clients",
            setup.tiers.len()
        )));
    }
    let (f, c) = (partition.feature_dim(), partition.class_count());
    let tiers: Vec<Tier> = if kind.supports_heterogeneous() {
        setup.tiers.clone()
    } else {
        vec![setup.homogeneous_tier(); n]
    };
    let specs = tiers
        .iter()
        .map(|t| t.spec(f, c))
        .collect::<Result<Vec<_>>>()?;
    Ok(match kind {
        FrameworkKind::Hdus => {
            let cfg = HdusConfig {
                local: setup.local,
                distill: setup.distill,
                ensemble: setup.ensemble,
                seed_spec: setup.seed_tier.spec(f, c)?,
                incubate_every_rounds: setup.incubate_every_rounds,
                exchange_every_rounds: setup.exchange_every_rounds,
            };
            Box::new(init_network(partition, &specs, setup.topology.clone(), cfg, master_seed)?)
        }
        FrameworkKind::Isgd => Box::new(Isgd::new(partition, &specs, setup.local, master_seed)?),
        FrameworkKind::Dsgd => Box::new(Dsgd::new(
            partition,
            &specs,
            setup.topology.clone(),
            setup.local,
            master_seed,
        )?),
        FrameworkKind::FedUnl => Box::new(FedUnl::new(
            partition,
            &specs,
            setup.local,
            setup.fedunl,
            master_seed,
        )?),
        FrameworkKind::SisaA => Box::new(SisaA::new(partition, &specs, setup.local, master_seed)?),
    })
}
