//! Accounting of every parameter transfer.

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Endpoint {
    Client(usize),
    Server,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Transmission {
    pub round: usize,
    pub sender: Endpoint,
    pub receiver: Endpoint,
    pub parameter_count: usize,
    /// Scalars carried alongside the parameters, e.g. a training accuracy.
    pub scalar_count: usize,
    pub includes_head: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TransmissionLedger {
    pub entries: Vec<Transmission>,
}

impl TransmissionLedger {
    pub fn record(
        &mut self,
        round: usize,
        sender: Endpoint,
        receiver: Endpoint,
        parameter_count: usize,
        scalar_count: usize,
        includes_head: bool,
    ) {
        self.entries.push(Transmission {
            round,
            sender,
            receiver,
            parameter_count,
            scalar_count,
            includes_head,
        });
    }

    pub fn round(&self, round: usize) -> impl Iterator<Item = &Transmission> {
        self.entries.iter().filter(move |t| t.round == round)
    }

    pub fn params_in_round(&self, round: usize) -> u64 {
        self.round(round).map(|t| t.parameter_count as u64).sum()
    }

    pub fn head_transmissions_in_round(&self, round: usize) -> usize {
        self.round(round).filter(|t| t.includes_head).count()
    }

    pub fn total_params(&self) -> u64 {
        self.entries.iter().map(|t| t.parameter_count as u64).sum()
    }

    pub fn head_transmissions(&self) -> usize {
        self.entries.iter().filter(|t| t.includes_head).count()
    }
}

/// Where a head fingerprint changed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Stage {
    LocalTraining,
    Aggregation,
    Gossip,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct HeadChange {
    pub round: usize,
    pub client: usize,
    pub stage: Stage,
}

/// Log of head fingerprint changes, taken around every stage of every round.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct HeadAudit {
    pub changes: Vec<HeadChange>,
}

impl HeadAudit {
    pub fn compare(&mut self, round: usize, stage: Stage, before: &[u64], after: &[u64]) {
        for (client, (b, a)) in before.iter().zip(after).enumerate() {
            if b != a {
                self.changes.push(HeadChange { round, client, stage });
            }
        }
    }

    /// Changes that happened outside local training, after round `after_round`.
    pub fn external_changes_after(&self, after_round: usize) -> usize {
        self.changes
            .iter()
            .filter(|c| c.round > after_round && c.stage != Stage::LocalTraining)
            .count()
    }
}
