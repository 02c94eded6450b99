use std::collections::BTreeSet;
use std::sync::Arc;

use rayon::prelude::*;

use super::client::ClientState;
use super::topology::Topology;
use crate::data::{LabeledDataset, PartitionedDataset};
use crate::distill::DistillConfig;
use crate::ensemble::{decode_seed, encode_seed, EnsembleConfig};
use crate::error::{Error, Result};
use crate::framework::{score, scoped_test, EvalScope, Evaluation, Framework, FrameworkKind};
use crate::numeric::{MlpSpec, SgdConfig};
use crate::ClientId;

#[derive(Debug, Clone, PartialEq)]
pub struct HdusConfig {
    pub local: SgdConfig,
    pub distill: DistillConfig,
    pub ensemble: EnsembleConfig,
    pub seed_spec: MlpSpec,
    /// Incubate on rounds `0, k, 2k, …`.
    pub incubate_every_rounds: usize,
    /// Exchange after every `k`-th trained round.
    pub exchange_every_rounds: usize,
}

impl HdusConfig {
    pub fn validate(&self) -> Result<()> {
        self.local.validate()?;
        self.distill.validate()?;
        if self.incubate_every_rounds == 0 || self.exchange_every_rounds == 0 {
            return Err(Error::Config("incubation and exchange cadences must be >= 1".into()));
        }
        Ok(())
    }
}

/// One seed transmission as it crossed the wire.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WireMessage {
    pub from: ClientId,
    pub to: ClientId,
    pub bytes: Vec<u8>,
}

/// Lifecycle of a client id in a network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClientStatus {
    Active,
    Quit,
}

/// The decentralized network of seed-sharing clients.
#[derive(Debug, Clone)]
pub struct HdusNetwork {
    clients: Vec<ClientState>,
    departed: BTreeSet<ClientId>,
    topology: Topology,
    cfg: HdusConfig,
    rounds_trained: usize,
    retired_steps: u64,
    last_exchange: Vec<WireMessage>,
}

/// Builds one client per partition shard with the given main specs.
pub fn init_network(
    partition: &PartitionedDataset,
    specs: &[MlpSpec],
    topology: Topology,
    cfg: HdusConfig,
    master_seed: u64,
) -> Result<HdusNetwork> {
    let n = partition.n_clients();
    if specs.len() != n {
        return Err(Error::Config(format!("{} model specs for {n} clients", specs.len())));
    }
    if topology.n_clients() != n {
        return Err(Error::Config(format!(
            "topology covers {} clients, partition has {n}",
            topology.n_clients()
        )));
    }
    cfg.validate()?;
    let reference = Arc::new(partition.reference.clone());
    let clients = partition
        .clients
        .iter()
        .zip(specs)
        .map(|(split, spec)| ClientState::new(split, spec, &cfg.seed_spec, Arc::clone(&reference), master_seed))
        .collect::<Result<Vec<_>>>()?;
    Ok(HdusNetwork {
        clients,
        departed: BTreeSet::new(),
        topology,
        cfg,
        rounds_trained: 0,
        retired_steps: 0,
        last_exchange: Vec::new(),
    })
}

impl HdusNetwork {
    pub fn config(&self) -> &HdusConfig {
        &self.cfg
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    /// Active clients in id order.
    pub fn clients(&self) -> &[ClientState] {
        &self.clients
    }

    pub fn client(&self, id: ClientId) -> Option<&ClientState> {
        self.position(id).map(|i| &self.clients[i])
    }

    pub fn status(&self, id: ClientId) -> Option<ClientStatus> {
        if self.departed.contains(&id) {
            Some(ClientStatus::Quit)
        } else {
            self.position(id).map(|_| ClientStatus::Active)
        }
    }

    pub fn rounds_trained(&self) -> usize {
        self.rounds_trained
    }

    /// Messages delivered by the most recent exchange.
    pub fn last_exchange(&self) -> &[WireMessage] {
        &self.last_exchange
    }

    fn position(&self, id: ClientId) -> Option<usize> {
        self.clients.binary_search_by_key(&id, |c| c.id).ok()
    }

    /// Training phase followed by the exchange barrier.
    pub fn run_round(&mut self) -> Result<()> {
        self.train_phase_impl()?;
        self.exchange_phase_impl()
    }

    fn train_phase_impl(&mut self) -> Result<()> {
        if self.clients.is_empty() {
            return Err(Error::State("no active clients left to train".into()));
        }
        let incubate = self.rounds_trained.is_multiple_of(self.cfg.incubate_every_rounds);
        let cfg = &self.cfg;
        let outcomes: Vec<Result<()>> = self
            .clients
            .par_iter_mut()
            .map(|c| {
                c.train_local(&cfg.local)?;
                if incubate {
                    c.incubate(&cfg.distill)?;
                }
                Ok(())
            })
            .collect();
        // first failure in client-id order, as a sequential run would report
        outcomes.into_iter().collect::<Result<()>>()?;
        self.rounds_trained += 1;
        Ok(())
    }

    fn exchange_phase_impl(&mut self) -> Result<()> {
        self.last_exchange.clear();
        if self.rounds_trained == 0 || !self.rounds_trained.is_multiple_of(self.cfg.exchange_every_rounds) {
            return Ok(());
        }
        let mut outbox = Vec::new();
        for sender in self.clients.iter().filter(|c| c.is_incubated()) {
            let bytes = encode_seed(&sender.own_seed);
            for to in self.topology.neighbors(sender.id) {
                if self.position(to).is_some() {
                    outbox.push(WireMessage {
                        from: sender.id,
                        to,
                        bytes: bytes.clone(),
                    });
                }
            }
        }
        for msg in &outbox {
            let seed = decode_seed(&msg.bytes)?;
            let i = self.position(msg.to).expect("recipient checked above");
            self.clients[i].repo.replace(msg.from, seed)?;
        }
        self.last_exchange = outbox;
        Ok(())
    }

    /// Removes `id` from the network: its state is dropped and every
    /// remaining client deletes the stored seed. No model is retrained.
    pub fn handle_unlearn_request(&mut self, id: ClientId) -> Result<()> {
        let i = self.position(id).ok_or_else(|| {
            if self.departed.contains(&id) {
                Error::NotFound(format!("client {id} has already quit"))
            } else {
                Error::NotFound(format!("no client {id} in the network"))
            }
        })?;
        let gone = self.clients.remove(i);
        self.retired_steps += gone.steps();
        self.departed.insert(id);
        self.topology.detach(id);
        for c in &mut self.clients {
            if c.repo.contains(id) {
                c.repo.remove(id)?;
            }
        }
        Ok(())
    }

    pub fn evaluate_all(&self, test: &LabeledDataset, scope: EvalScope) -> Result<Evaluation> {
        if test.is_empty() {
            return Err(Error::Domain("test set is empty".into()));
        }
        let per_client = self
            .clients
            .par_iter()
            .map(|c| {
                let t = scoped_test(test, &c.class_menu, scope)?;
                let probs = c.predict(&self.cfg.ensemble, t.features())?;
                Ok((c.id, score(&probs, &t)?))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Evaluation { per_client })
    }
}

impl Framework for HdusNetwork {
    fn kind(&self) -> FrameworkKind {
        FrameworkKind::Hdus
    }

    fn active_clients(&self) -> Vec<ClientId> {
        self.clients.iter().map(|c| c.id).collect()
    }

    fn train_phase(&mut self) -> Result<()> {
        self.train_phase_impl()
    }

    fn exchange_phase(&mut self) -> Result<()> {
        self.exchange_phase_impl()
    }

    fn unlearn(&mut self, client: ClientId) -> Result<()> {
        self.handle_unlearn_request(client)
    }

    fn evaluate(&self, test: &LabeledDataset, scope: EvalScope) -> Result<Evaluation> {
        self.evaluate_all(test, scope)
    }

    fn training_steps(&self) -> u64 {
        self.retired_steps + self.clients.iter().map(ClientState::steps).sum::<u64>()
    }
}
