//! Round scheduling and the append-only metrics log.

use std::fmt::Write as _;

use crate::data::LabeledDataset;
use crate::error::Result;
use crate::framework::{EvalScope, Framework, FrameworkKind};
use crate::ClientId;

/// Event kinds in their same-tick processing order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EventKind {
    TrainRound,
    Exchange,
    UnlearnRequest(ClientId),
    Evaluate,
}

/// Ordered by `(tick, kind)`, ties broken by kind and then client id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SimEvent {
    pub tick: u32,
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Schedule {
    events: Vec<SimEvent>,
}

impl Schedule {
    pub fn new(mut events: Vec<SimEvent>) -> Self {
        events.sort();
        Self { events }
    }

    /// `rounds` ticks of train, exchange, evaluate.
    pub fn training(rounds: u32) -> Self {
        let mut ev = Vec::new();
        for tick in 0..rounds {
            push_round(&mut ev, tick);
        }
        Self::new(ev)
    }

    /// `pre_rounds` normal rounds, then at tick `pre_rounds` the client's
    /// unlearning request followed by an evaluation, then `post_rounds`
    /// further normal rounds.
    pub fn with_unlearning(pre_rounds: u32, client: ClientId, post_rounds: u32) -> Self {
        let mut ev = Vec::new();
        for tick in 0..pre_rounds {
            push_round(&mut ev, tick);
        }
        ev.push(SimEvent {
            tick: pre_rounds,
            kind: EventKind::UnlearnRequest(client),
        });
        ev.push(SimEvent {
            tick: pre_rounds,
            kind: EventKind::Evaluate,
        });
        for tick in pre_rounds + 1..=pre_rounds + post_rounds {
            push_round(&mut ev, tick);
        }
        Self::new(ev)
    }

    pub fn events(&self) -> &[SimEvent] {
        &self.events
    }

    /// Tick of the first unlearning request, if any.
    pub fn unlearn_tick(&self) -> Option<u32> {
        self.events
            .iter()
            .find(|e| matches!(e.kind, EventKind::UnlearnRequest(_)))
            .map(|e| e.tick)
    }
}

fn push_round(ev: &mut Vec<SimEvent>, tick: u32) {
    for kind in [EventKind::TrainRound, EventKind::Exchange, EventKind::Evaluate] {
        ev.push(SimEvent { tick, kind });
    }
}

pub mod metric {
    pub const ACCURACY: &str = "accuracy";
    pub const MEAN_ACCURACY: &str = "mean_accuracy";
    pub const TRAINING_STEPS: &str = "training_steps";
    pub const RECOVERY_STEPS: &str = "recovery_steps";
    pub const UNLEARN_STEPS: &str = "unlearn_steps";
    pub const ACTIVE_CLIENTS: &str = "active_clients";
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRecord {
    pub round: u32,
    /// `None` for network-wide values.
    pub client: Option<ClientId>,
    pub framework: FrameworkKind,
    pub metric: &'static str,
    pub value: f64,
}

/// Append-only metric records.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EventLog {
    records: Vec<LogRecord>,
}

impl EventLog {
    pub const CSV_HEADER: &'static str = "round,client_id,framework,metric,value";

    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, record: LogRecord) {
        self.records.push(record);
    }

    pub fn records(&self) -> &[LogRecord] {
        &self.records
    }

    pub fn extend(&mut self, other: EventLog) {
        self.records.extend(other.records);
    }

    /// Values of `metric` for the given client scope, in log order.
    pub fn series(&self, metric: &str, client: Option<ClientId>) -> Vec<(u32, f64)> {
        self.records
            .iter()
            .filter(|r| r.metric == metric && r.client == client)
            .map(|r| (r.round, r.value))
            .collect()
    }

    /// `round,client_id,framework,metric,value` with `all` for network-wide rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.records.len() * 40);
        out.push_str(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            let client = r.client.map_or_else(|| "all".to_string(), |c| c.to_string());
            writeln!(out, "{},{client},{},{},{}", r.round, r.framework, r.metric, r.value).unwrap();
        }
        out
    }
}

/// Drives `framework` through `schedule`, logging every evaluation.
pub fn run_schedule(
    framework: &mut dyn Framework,
    schedule: &Schedule,
    test: &LabeledDataset,
    scope: EvalScope,
    log: &mut EventLog,
) -> Result<()> {
    let kind = framework.kind();
    for ev in schedule.events() {
        let mut record = |client, metric, value| {
            log.push(LogRecord {
                round: ev.tick,
                client,
                framework: kind,
                metric,
                value,
            })
        };
        match ev.kind {
            EventKind::TrainRound => framework.train_phase()?,
            EventKind::Exchange => framework.exchange_phase()?,
            EventKind::UnlearnRequest(id) => {
                let before = framework.training_steps();
                framework.unlearn(id)?;
                let delta = framework.training_steps() - before;
                record(Some(id), metric::UNLEARN_STEPS, delta as f64);
            }
            EventKind::Evaluate => {
                let eval = framework.evaluate(test, scope)?;
                for &(id, acc) in &eval.per_client {
                    record(Some(id), metric::ACCURACY, acc);
                }
                record(None, metric::MEAN_ACCURACY, eval.mean());
                record(None, metric::ACTIVE_CLIENTS, eval.per_client.len() as f64);
                record(None, metric::TRAINING_STEPS, framework.training_steps() as f64);
                record(None, metric::RECOVERY_STEPS, framework.recovery_steps() as f64);
            }
        }
    }
    Ok(())
}
