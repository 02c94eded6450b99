use std::sync::Arc;

use crate::data::{ClientSplit, LabeledDataset};
use crate::distill::{distill_into, DistillConfig, ReferenceSet};
use crate::ensemble::{ensemble_predict, EnsembleConfig, SeedRepository};
use crate::error::{Error, Result};
use crate::numeric::{init_mlp, train_supervised, Matrix, MlpModel, MlpSpec, SgdConfig};
use crate::rng::{client_stream, Purpose, Rng};
use crate::ClientId;

/// One participant: a private main model, the seed distilled from it, and
/// the seeds received from neighbors.
#[derive(Debug, Clone)]
pub struct ClientState {
    pub id: ClientId,
    pub main: MlpModel,
    pub own_seed: MlpModel,
    pub repo: SeedRepository,
    pub local_data: LabeledDataset,
    pub class_menu: Vec<usize>,
    pub reference: Arc<ReferenceSet>,
    train_rng: Rng,
    seed_rng: Rng,
    incubated: bool,
    steps: u64,
}

impl ClientState {
    /// Main and seed weights come from the client's own init streams, so a
    /// client's state never depends on how many other clients exist.
    pub fn new(
        split: &ClientSplit,
        main_spec: &MlpSpec,
        seed_spec: &MlpSpec,
        reference: Arc<ReferenceSet>,
        master_seed: u64,
    ) -> Result<Self> {
        let id = split.client;
        let (f, c) = (split.data.feature_dim(), split.data.class_count());
        for (what, spec) in [("main", main_spec), ("seed", seed_spec)] {
            if spec.input_dim() != f || spec.output_dim() != c {
                return Err(Error::Config(format!(
                    "client {id} {what} spec is {}→{}, data is {f}→{c}",
                    spec.input_dim(),
                    spec.output_dim()
                )));
            }
        }
        Ok(Self {
            id,
            main: init_mlp(main_spec, &mut client_stream(master_seed, Purpose::MainInit, id.0)),
            own_seed: init_mlp(seed_spec, &mut client_stream(master_seed, Purpose::SeedInit, id.0)),
            repo: SeedRepository::new(id, f, c),
            local_data: split.data.clone(),
            class_menu: split.class_menu(),
            reference,
            train_rng: client_stream(master_seed, Purpose::MainTrain, id.0),
            seed_rng: client_stream(master_seed, Purpose::SeedTrain, id.0),
            incubated: false,
            steps: 0,
        })
    }

    /// Local epochs of cross-entropy SGD on the private data.
    pub fn train_local(&mut self, cfg: &SgdConfig) -> Result<u64> {
        let stats = train_supervised(
            &mut self.main,
            self.local_data.features(),
            self.local_data.labels(),
            cfg,
            &mut self.train_rng,
        )
        .map_err(|e| self.tag(e))?;
        self.steps += stats.steps;
        Ok(stats.steps)
    }

    /// Distills the current main model into the own seed, warm-starting from
    /// the previous seed. Reads only the main model and reference features.
    pub fn incubate(&mut self, cfg: &DistillConfig) -> Result<u64> {
        let stats = distill_into(&mut self.own_seed, &self.main, &self.reference, cfg, &mut self.seed_rng)
            .map_err(|e| self.tag(e))?;
        self.incubated = true;
        self.steps += stats.steps;
        Ok(stats.steps)
    }

    /// Whether the own seed has been distilled at least once.
    pub fn is_incubated(&self) -> bool {
        self.incubated
    }

    pub fn predict(&self, cfg: &EnsembleConfig, batch: &Matrix) -> Result<Matrix> {
        ensemble_predict(&self.main, &self.repo, cfg, batch)
    }

    /// SGD updates applied to this client's models so far.
    pub fn steps(&self) -> u64 {
        self.steps
    }

    fn tag(&self, e: Error) -> Error {
        match e {
            Error::Divergence(m) => Error::Divergence(format!("client {}: {m}", self.id)),
            other => other,
        }
    }
}
