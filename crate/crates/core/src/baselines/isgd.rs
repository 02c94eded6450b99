use super::{evaluate_own, learners, position, train_all, LocalLearner};
use crate::data::{LabeledDataset, PartitionedDataset};
use crate::error::Result;
use crate::framework::{EvalScope, Evaluation, Framework, FrameworkKind};
use crate::numeric::{MlpSpec, SgdConfig};
use crate::ClientId;

/// Every client trains alone; nothing is ever exchanged.
#[derive(Debug, Clone)]
pub struct Isgd {
    learners: Vec<LocalLearner>,
    local: SgdConfig,
    retired_steps: u64,
}

impl Isgd {
    pub fn new(partition: &PartitionedDataset, specs: &[MlpSpec], local: SgdConfig, master_seed: u64) -> Result<Self> {
        local.validate()?;
        Ok(Self {
            learners: learners(partition, specs, master_seed)?,
            local,
            retired_steps: 0,
        })
    }

    pub fn learners(&self) -> &[LocalLearner] {
        &self.learners
    }
}

impl Framework for Isgd {
    fn kind(&self) -> FrameworkKind {
        FrameworkKind::Isgd
    }

    fn active_clients(&self) -> Vec<ClientId> {
        self.learners.iter().map(|l| l.id).collect()
    }

    fn train_phase(&mut self) -> Result<()> {
        train_all(&mut self.learners, &self.local).map(|_| ())
    }

    fn exchange_phase(&mut self) -> Result<()> {
        Ok(())
    }

    /// Deletes the client's model and data; nobody else is touched.
    fn unlearn(&mut self, client: ClientId) -> Result<()> {
        let i = position(&self.learners, client)?;
        self.retired_steps += self.learners.remove(i).steps();
        Ok(())
    }

    fn evaluate(&self, test: &LabeledDataset, scope: EvalScope) -> Result<Evaluation> {
        evaluate_own(&self.learners, test, scope)
    }

    fn training_steps(&self) -> u64 {
        self.retired_steps + self.learners.iter().map(LocalLearner::steps).sum::<u64>()
    }
}
