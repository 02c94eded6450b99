use super::{evaluate_own, learners, position, require_homogeneous, train_all, LocalLearner};
use crate::data::{LabeledDataset, PartitionedDataset};
use crate::error::{Error, Result};
use crate::framework::{EvalScope, Evaluation, Framework, FrameworkKind};
use crate::numeric::{MlpSpec, SgdConfig};
use crate::sim::Topology;
use crate::ClientId;

/// Local SGD followed by synchronous gossip averaging with neighbors.
/// Unlearning resets every remaining client and retrains from scratch.
#[derive(Debug, Clone)]
pub struct Dsgd {
    learners: Vec<LocalLearner>,
    topology: Topology,
    local: SgdConfig,
    retired_steps: u64,
    steps_at_unlearn: Option<u64>,
}

impl Dsgd {
    pub fn new(
        partition: &PartitionedDataset,
        specs: &[MlpSpec],
        topology: Topology,
        local: SgdConfig,
        master_seed: u64,
    ) -> Result<Self> {
        require_homogeneous(specs, "DSGD")?;
        local.validate()?;
        let learners = learners(partition, specs, master_seed)?;
        if let Some(l) = learners.iter().find(|l| l.id.0 as usize >= topology.n_clients()) {
            return Err(Error::Config(format!(
                "client {} outside a topology of {} clients",
                l.id,
                topology.n_clients()
            )));
        }
        Ok(Self {
            learners,
            topology,
            local,
            retired_steps: 0,
            steps_at_unlearn: None,
        })
    }

    pub fn learners(&self) -> &[LocalLearner] {
        &self.learners
    }

    pub fn learners_mut(&mut self) -> &mut [LocalLearner] {
        &mut self.learners
    }

    /// Replaces every parameter vector by the uniform mean of its own and
    /// its active neighbors' vectors, all read from the pre-round snapshot.
    pub fn gossip(&mut self) -> Result<()> {
        let snapshot: Vec<Vec<f64>> = self.learners.iter().map(|l| l.model.to_flat()).collect();
        let ids: Vec<ClientId> = self.learners.iter().map(|l| l.id).collect();
        for (i, l) in self.learners.iter_mut().enumerate() {
            let mut acc = snapshot[i].clone();
            let mut count = 1usize;
            for nb in self.topology.neighbors(l.id) {
                if let Ok(j) = ids.binary_search(&nb) {
                    for (a, v) in acc.iter_mut().zip(&snapshot[j]) {
                        *a += v;
                    }
                    count += 1;
                }
            }
            let inv = count as f64;
            for a in &mut acc {
                *a /= inv;
            }
            l.model.set_flat(&acc)?;
        }
        Ok(())
    }
}

impl Framework for Dsgd {
    fn kind(&self) -> FrameworkKind {
        FrameworkKind::Dsgd
    }

    fn active_clients(&self) -> Vec<ClientId> {
        self.learners.iter().map(|l| l.id).collect()
    }

    fn train_phase(&mut self) -> Result<()> {
        train_all(&mut self.learners, &self.local).map(|_| ())
    }

    fn exchange_phase(&mut self) -> Result<()> {
        self.gossip()
    }

    /// Drops the quitter, then rewinds every remaining client to its stored
    /// initial weights and training stream. Retraining happens in later rounds.
    fn unlearn(&mut self, client: ClientId) -> Result<()> {
        let i = position(&self.learners, client)?;
        if let Some(l) = self.learners.iter().find(|l| l.id != client && l.initial.is_none()) {
            return Err(Error::State(format!("client {} has no stored initial state", l.id)));
        }
        self.retired_steps += self.learners.remove(i).steps();
        self.topology.detach(client);
        for l in &mut self.learners {
            l.reset_to_initial()?;
        }
        self.steps_at_unlearn.get_or_insert(self.training_steps());
        Ok(())
    }

    fn evaluate(&self, test: &LabeledDataset, scope: EvalScope) -> Result<Evaluation> {
        evaluate_own(&self.learners, test, scope)
    }

    fn training_steps(&self) -> u64 {
        self.retired_steps + self.learners.iter().map(LocalLearner::steps).sum::<u64>()
    }

    fn recovery_steps(&self) -> u64 {
        self.steps_at_unlearn
            .map_or(0, |s| self.training_steps() - s)
    }
}
