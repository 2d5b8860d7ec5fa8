//! Federated training protocols: two server baselines (FedAvg, FedRep), a
//! uniform ring baseline (RDFL) and the Fibonacci ring family.

mod config;
mod engine;
mod experiment;
mod ledger;

pub use config::{Method, ProtocolConfig};
pub use engine::Federation;
pub use experiment::{prepare_federation, run_experiment, EvalConfig, EvalMode, ExperimentOutcome};
pub use ledger::{Endpoint, HeadAudit, HeadChange, Stage, Transmission, TransmissionLedger};
