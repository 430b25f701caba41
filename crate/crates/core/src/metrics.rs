//! Per-epoch metrics rows and the end-of-run report.

use crate::adversary::AttackReport;
use crate::hashing::Digest;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct MetricsRow {
    pub epoch: u64,
    pub verified_count: u64,
    pub pending: u64,
    pub revoked: u64,
    pub expired: u64,
    pub circulating: u128,
    pub minted: u64,
    pub forfeited: u64,
    pub locked: u128,
    pub gini_balance: f64,
    pub calls_opened: u64,
    pub passed: u64,
    pub failed: u64,
    pub missed: u64,
    pub tokens_slashed: u64,
    pub communities: u64,
    pub representatives: u64,
    pub proposals_passed: u64,
    pub proposals_failed: u64,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
pub struct MetricsReport {
    pub rows: Vec<MetricsRow>,
}

pub const CSV_HEADER: &str = "epoch,verified_count,pending,revoked,expired,circulating,minted,\
forfeited,locked,gini_balance,calls_opened,passed,failed,missed,tokens_slashed,communities,\
representatives,proposals_passed,proposals_failed";

impl MetricsReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.rows.len() + 1));
        out.push_str(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{:.6},{},{},{},{},{},{},{},{},{}\n",
                r.epoch,
                r.verified_count,
                r.pending,
                r.revoked,
                r.expired,
                r.circulating,
                r.minted,
                r.forfeited,
                r.locked,
                r.gini_balance,
                r.calls_opened,
                r.passed,
                r.failed,
                r.missed,
                r.tokens_slashed,
                r.communities,
                r.representatives,
                r.proposals_passed,
                r.proposals_failed,
            ));
        }
        out
    }
}

/// Machine-readable run summary, written as report.json.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct RunReport {
    pub seed: u64,
    pub epochs: u64,
    pub state_hash: Digest,
    pub ledger_height: u64,
    /// Calibrated or configured per-modality match threshold.
    pub tau: f64,
    pub verified_count: u64,
    pub pending: u64,
    pub revoked: u64,
    pub expired: u64,
    pub genesis_supply: u64,
    pub minted: u64,
    pub forfeited: u64,
    pub circulating: u128,
    pub locked: u128,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub attack: Option<AttackReport>,
}
