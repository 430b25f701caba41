//! Deterministic, seedable simulator and library for a proof-of-unique-human
//! protocol: hash-chained event ledger with replay, a synthetic biometric
//! model with calibrated error rates, identity lifecycle with beacon-driven
//! verifier assignment, trust delegation, token economics, layered
//! governance, A-judge audits, and an adversary harness quantifying
//! collusion size and attack cost.

pub mod adversary;
pub mod audit;
pub mod biometric;
pub mod cli;
pub mod config;
pub mod engine;
pub mod governance;
pub mod hashing;
pub mod ledger;
pub mod metrics;
pub mod registry;
pub mod sim;
pub mod state;
pub mod tokens;
pub mod trust;

pub use config::ScenarioConfig;
pub use engine::{replay, Engine};
pub use hashing::Digest;
pub use ledger::{verify_chain, Event, EventBody, Ledger};
pub use registry::PersonId;
pub use sim::{attack_sweep, run_attack, run_scenario, RunOutput};
