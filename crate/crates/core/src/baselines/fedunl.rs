use rayon::prelude::*;

use super::{learners, position, require_homogeneous, evaluate_with, LocalLearner};
use crate::data::{LabeledDataset, PartitionedDataset};
use crate::distill::ReferenceSet;
use crate::error::{Error, Result};
use crate::framework::{EvalScope, Evaluation, Framework, FrameworkKind};
use crate::numeric::{
    init_mlp, onehot, softmax_rows, train_minibatch, LossKind, MlpModel, MlpSpec, SgdConfig,
};
use crate::rng::{stream, Purpose, Rng};
use crate::ClientId;

/// Server-side remedy after a client's updates are subtracted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FedUnlConfig {
    /// Weight of the distillation term; `1 − alpha` goes to labeled cross-entropy.
    pub alpha: f64,
    pub temperature: f64,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    /// Rounds after an unlearning request in which the server runs the remedy.
    pub remedy_rounds: usize,
}

impl Default for FedUnlConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            temperature: 3.0,
            epochs: 1,
            lr: 0.05,
            batch_size: 32,
            remedy_rounds: 5,
        }
    }
}

impl FedUnlConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("fedunl alpha must be in [0, 1], got {}", self.alpha)));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::Config(format!(
                "fedunl temperature must be > 0, got {}",
                self.temperature
            )));
        }
        self.sgd().validate()
    }

    fn sgd(&self) -> SgdConfig {
        SgdConfig {
            epochs: self.epochs,
            lr: self.lr,
            batch_size: self.batch_size,
        }
    }
}

/// What the server stores about the history of the global model.
#[derive(Debug, Clone, PartialEq)]
pub enum LedgerEntry {
    /// One aggregation: every participant's parameter delta. The global moved
    /// by the sum of the stored deltas divided by `participants`.
    Round {
        participants: usize,
        deltas: Vec<(ClientId, Vec<f64>)>,
    },
    /// Change applied by one round of server-side remedy training.
    Remedy { delta: Vec<f64> },
}

#[derive(Debug, Clone)]
struct Remedy {
    teacher_soft: crate::numeric::Matrix,
    rounds_left: usize,
}

/// Federated averaging with a server that logs per-round client updates,
/// unlearns by subtracting them, and patches the damage by distillation.
#[derive(Debug, Clone)]
pub struct FedUnl {
    learners: Vec<LocalLearner>,
    global: MlpModel,
    initial_global: Vec<f64>,
    ledger: Vec<LedgerEntry>,
    rounds_aggregated: usize,
    pending: bool,
    local: SgdConfig,
    cfg: FedUnlConfig,
    reference: ReferenceSet,
    reference_labels: Vec<usize>,
    server_rng: Rng,
    remedy: Option<Remedy>,
    retired_steps: u64,
    server_steps: u64,
    remedy_steps: u64,
}

impl FedUnl {
    pub fn new(
        partition: &PartitionedDataset,
        specs: &[MlpSpec],
        local: SgdConfig,
        cfg: FedUnlConfig,
        master_seed: u64,
    ) -> Result<Self> {
        require_homogeneous(specs, "FedUnl")?;
        local.validate()?;
        cfg.validate()?;
        let learners = learners(partition, specs, master_seed)?;
        let spec = specs
            .first()
            .ok_or_else(|| Error::Config("FedUnl needs at least one client".into()))?;
        let mut server_rng = stream(master_seed, Purpose::Server);
        let global = init_mlp(spec, &mut server_rng);
        Ok(Self {
            learners,
            initial_global: global.to_flat(),
            global,
            ledger: Vec::new(),
            rounds_aggregated: 0,
            pending: false,
            local,
            cfg,
            reference: partition.reference.clone(),
            reference_labels: partition.sealed_reference_labels.unseal().to_vec(),
            server_rng,
            remedy: None,
            retired_steps: 0,
            server_steps: 0,
            remedy_steps: 0,
        })
    }

    pub fn global(&self) -> &MlpModel {
        &self.global
    }

    pub fn initial_global(&self) -> &[f64] {
        &self.initial_global
    }

    pub fn ledger(&self) -> &[LedgerEntry] {
        &self.ledger
    }

    /// Drops the stored deltas of one aggregation round, as if that part of
    /// the server's storage were lost.
    pub fn forget_round(&mut self, round: usize) -> Result<()> {
        let idx = self
            .ledger
            .iter()
            .enumerate()
            .filter(|(_, e)| matches!(e, LedgerEntry::Round { .. }))
            .nth(round)
            .map(|(i, _)| i)
            .ok_or_else(|| Error::NotFound(format!("ledger has no round {round}")))?;
        self.ledger.remove(idx);
        Ok(())
    }

    /// Initial global plus every ledger entry, applied in order.
    pub fn replay(&self) -> Vec<f64> {
        let mut flat = self.initial_global.clone();
        for entry in &self.ledger {
            match entry {
                LedgerEntry::Round { participants, deltas } => {
                    let refs: Vec<&[f64]> = deltas.iter().map(|(_, d)| d.as_slice()).collect();
                    apply_mean(&mut flat, &refs, *participants);
                }
                LedgerEntry::Remedy { delta } => {
                    for (g, d) in flat.iter_mut().zip(delta) {
                        *g += d;
                    }
                }
            }
        }
        flat
    }

    /// One round of remedy training on the labeled reference set.
    fn remedy_step(&mut self) -> Result<()> {
        let Some(remedy) = self.remedy.as_mut() else {
            return Ok(());
        };
        let before = self.global.to_flat();
        let x = self.reference.features();
        let classes = self.global.spec().output_dim();
        let labels = &self.reference_labels;
        let (alpha, temperature) = (self.cfg.alpha, self.cfg.temperature);
        let teacher = &remedy.teacher_soft;
        let stats = train_minibatch(
            &mut self.global,
            x.rows(),
            &self.cfg.sgd(),
            &mut self.server_rng,
            |idx, step| {
                let xb = x.select_rows(idx);
                let tb = teacher.select_rows(idx);
                let yb = onehot(&idx.iter().map(|&i| labels[i]).collect::<Vec<_>>(), classes)?;
                step(
                    &xb,
                    LossKind::Blend {
                        teacher_soft: &tb,
                        temperature,
                        onehot: &yb,
                        alpha,
                    },
                )
            },
        )
        .map_err(|e| match e {
            Error::Divergence(m) => Error::Divergence(format!("server remedy: {m}")),
            other => other,
        })?;
        self.server_steps += stats.steps;
        self.remedy_steps += stats.steps;
        let delta = self
            .global
            .to_flat()
            .iter()
            .zip(&before)
            .map(|(a, b)| a - b)
            .collect();
        self.ledger.push(LedgerEntry::Remedy { delta });
        remedy.rounds_left -= 1;
        if remedy.rounds_left == 0 {
            self.remedy = None;
        }
        Ok(())
    }
}

/// `target[j] += (Σ_k deltas[k][j]) / participants`.
fn apply_mean(target: &mut [f64], deltas: &[&[f64]], participants: usize) {
    if participants == 0 {
        return;
    }
    let n = participants as f64;
    for (j, t) in target.iter_mut().enumerate() {
        let sum: f64 = deltas.iter().map(|d| d[j]).sum();
        *t += sum / n;
    }
}

impl Framework for FedUnl {
    fn kind(&self) -> FrameworkKind {
        FrameworkKind::FedUnl
    }

    fn active_clients(&self) -> Vec<ClientId> {
        self.learners.iter().map(|l| l.id).collect()
    }

    /// Pending remedy first, then every client trains a copy of the global.
    fn train_phase(&mut self) -> Result<()> {
        if self.learners.is_empty() {
            return Err(Error::State("no active clients left to train".into()));
        }
        self.remedy_step()?;
        let global = &self.global;
        let local = &self.local;
        let outcomes: Vec<Result<u64>> = self
            .learners
            .par_iter_mut()
            .map(|l| {
                l.model = global.clone();
                l.train(local)
            })
            .collect();
        outcomes.into_iter().collect::<Result<Vec<_>>>()?;
        self.pending = true;
        Ok(())
    }

    /// Server aggregation: log each client's delta and apply their mean.
    fn exchange_phase(&mut self) -> Result<()> {
        if !self.pending {
            return Ok(());
        }
        let base = self.global.to_flat();
        let deltas: Vec<(ClientId, Vec<f64>)> = self
            .learners
            .iter()
            .map(|l| {
                let d = l.model.to_flat().iter().zip(&base).map(|(a, b)| a - b).collect();
                (l.id, d)
            })
            .collect();
        let mut flat = base;
        let refs: Vec<&[f64]> = deltas.iter().map(|(_, d)| d.as_slice()).collect();
        apply_mean(&mut flat, &refs, deltas.len());
        self.global.set_flat(&flat)?;
        self.ledger.push(LedgerEntry::Round {
            participants: deltas.len(),
            deltas,
        });
        self.rounds_aggregated += 1;
        self.pending = false;
        Ok(())
    }

    /// Subtracts the quitter's logged contributions from the global, purges
    /// them from the ledger, and schedules remedy rounds that distill from
    /// the pre-subtraction global.
    fn unlearn(&mut self, client: ClientId) -> Result<()> {
        let i = position(&self.learners, client)?;
        let logged = self
            .ledger
            .iter()
            .filter(|e| matches!(e, LedgerEntry::Round { .. }))
            .count();
        if logged != self.rounds_aggregated {
            return Err(Error::State(format!(
                "ledger holds {logged} of {} aggregation rounds",
                self.rounds_aggregated
            )));
        }
        let teacher_soft = softmax_rows(&self.global.forward(self.reference.features())?, self.cfg.temperature)?;
        let mut flat = self.global.to_flat();
        let mut sub = vec![0.0; flat.len()];
        for entry in &mut self.ledger {
            if let LedgerEntry::Round { participants, deltas } = entry {
                if let Some(k) = deltas.iter().position(|(id, _)| *id == client) {
                    let (_, d) = deltas.remove(k);
                    let n = *participants as f64;
                    for (s, v) in sub.iter_mut().zip(&d) {
                        *s += v / n;
                    }
                }
            }
        }
        for (g, s) in flat.iter_mut().zip(&sub) {
            *g -= s;
        }
        self.global.set_flat(&flat)?;
        self.retired_steps += self.learners.remove(i).steps();
        if self.cfg.remedy_rounds > 0 {
            self.remedy = Some(Remedy {
                teacher_soft,
                rounds_left: self.cfg.remedy_rounds,
            });
        }
        Ok(())
    }

    fn evaluate(&self, test: &LabeledDataset, scope: EvalScope) -> Result<Evaluation> {
        let logits_of = |t: &LabeledDataset| self.global.forward(t.features());
        evaluate_with(&self.learners, test, scope, |_, t| logits_of(t))
    }

    fn training_steps(&self) -> u64 {
        self.retired_steps + self.server_steps + self.learners.iter().map(LocalLearner::steps).sum::<u64>()
    }

    /// Server-side remedy updates.
    fn recovery_steps(&self) -> u64 {
        self.remedy_steps
    }
}
