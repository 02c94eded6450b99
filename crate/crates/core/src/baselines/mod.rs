//! Comparison frameworks run under the same simulator: isolated training,
//! gossip-averaged decentralized SGD, server-side federated unlearning, and
//! a client-sharded ensemble.

mod dsgd;
mod fedunl;
mod isgd;
mod sisa;

pub use dsgd::Dsgd;
pub use fedunl::{FedUnl, FedUnlConfig, LedgerEntry};
pub use isgd::Isgd;
pub use sisa::{sisa_predict, SisaA};

use rayon::prelude::*;

use crate::data::{ClientSplit, LabeledDataset, PartitionedDataset};
use crate::error::{Error, Result};
use crate::framework::{score, scoped_test, EvalScope, Evaluation};
use crate::numeric::{init_mlp, softmax_rows, train_supervised, MlpModel, MlpSpec, SgdConfig};
use crate::rng::{client_stream, Purpose, Rng};
use crate::ClientId;

/// A client that trains one model on its own shard.
///
/// Initial weights and the training stream match an HDUS client's main
/// model, so with equal specs both start from and follow the same path.
#[derive(Debug, Clone)]
pub struct LocalLearner {
    pub id: ClientId,
    pub model: MlpModel,
    pub data: LabeledDataset,
    pub class_menu: Vec<usize>,
    /// Source rows of `data` in the original dataset.
    pub rows: Vec<usize>,
    initial: Option<(MlpModel, Rng)>,
    rng: Rng,
    steps: u64,
}

impl LocalLearner {
    pub fn new(split: &ClientSplit, spec: &MlpSpec, master_seed: u64) -> Result<Self> {
        let id = split.client;
        let (f, c) = (split.data.feature_dim(), split.data.class_count());
        if spec.input_dim() != f || spec.output_dim() != c {
            return Err(Error::Config(format!(
                "client {id} spec is {}→{}, data is {f}→{c}",
                spec.input_dim(),
                spec.output_dim()
            )));
        }
        let model = init_mlp(spec, &mut client_stream(master_seed, Purpose::MainInit, id.0));
        let rng = client_stream(master_seed, Purpose::MainTrain, id.0);
        Ok(Self {
            id,
            initial: Some((model.clone(), rng.clone())),
            model,
            data: split.data.clone(),
            class_menu: split.class_menu(),
            rows: split.rows.clone(),
            rng,
            steps: 0,
        })
    }

    pub fn train(&mut self, cfg: &SgdConfig) -> Result<u64> {
        let stats = train_supervised(
            &mut self.model,
            self.data.features(),
            self.data.labels(),
            cfg,
            &mut self.rng,
        )
        .map_err(|e| match e {
            Error::Divergence(m) => Error::Divergence(format!("client {}: {m}", self.id)),
            other => other,
        })?;
        self.steps += stats.steps;
        Ok(stats.steps)
    }

    /// Restores the stored initial weights and training stream.
    pub fn reset_to_initial(&mut self) -> Result<()> {
        let (model, rng) = self
            .initial
            .clone()
            .ok_or_else(|| Error::State(format!("client {} has no stored initial state", self.id)))?;
        self.model = model;
        self.rng = rng;
        Ok(())
    }

    /// Discards the stored initial state.
    pub fn forget_initial(&mut self) {
        self.initial = None;
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }
}

fn learners(partition: &PartitionedDataset, specs: &[MlpSpec], master_seed: u64) -> Result<Vec<LocalLearner>> {
    let n = partition.n_clients();
    if specs.len() != n {
        return Err(Error::Config(format!("{} model specs for {n} clients", specs.len())));
    }
    partition
        .clients
        .iter()
        .zip(specs)
        .map(|(split, spec)| LocalLearner::new(split, spec, master_seed))
        .collect()
}

fn require_homogeneous(specs: &[MlpSpec], who: &str) -> Result<()> {
    match specs.split_first() {
        Some((first, rest)) if rest.iter().any(|s| s != first) => Err(Error::Config(format!(
            "{who} requires one architecture for all clients"
        ))),
        _ => Ok(()),
    }
}

fn position(learners: &[LocalLearner], id: ClientId) -> Result<usize> {
    learners
        .binary_search_by_key(&id, |l| l.id)
        .map_err(|_| Error::NotFound(format!("no active client {id}")))
}

fn train_all(learners: &mut [LocalLearner], cfg: &SgdConfig) -> Result<u64> {
    let steps: Vec<Result<u64>> = learners.par_iter_mut().map(|l| l.train(cfg)).collect();
    steps.into_iter().sum()
}

/// Each learner scored with its own model.
fn evaluate_own(learners: &[LocalLearner], test: &LabeledDataset, scope: EvalScope) -> Result<Evaluation> {
    evaluate_with(learners, test, scope, |l, t| softmax_rows(&l.model.forward(t.features())?, 1.0))
}

fn evaluate_with<F>(learners: &[LocalLearner], test: &LabeledDataset, scope: EvalScope, predict: F) -> Result<Evaluation>
where
    F: Fn(&LocalLearner, &LabeledDataset) -> Result<crate::numeric::Matrix> + Sync,
{
    if test.is_empty() {
        return Err(Error::Domain("test set is empty".into()));
    }
    let per_client = learners
        .par_iter()
        .map(|l| {
            let t = scoped_test(test, &l.class_menu, scope)?;
            Ok((l.id, score(&predict(l, &t)?, &t)?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Evaluation { per_client })
}
