//! Attack scenario engine: behavior overrides for bribed verifiers, the
//! collusion probability oracle, per-attempt counterfactual evaluation,
//! and cost/collusion frontier curves.
//!
//! The central question is how many verifiers must collude, and at what
//! cost, for an attack to succeed. For sequential assignment with no
//! grinding the success probability has the closed form C(k,c)/C(N,c);
//! everything else is measured against the full simulator.

use crate::config::{CityId, GateKind};
use crate::hashing::Digest;
use crate::registry::{assignment_index, PersonId};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AdversaryError {
    #[error("invalid counts: need corrupt <= eligible and required <= eligible")]
    InvalidCounts,
    #[error("plan infeasible within budget: cost {cost} exceeds {budget}")]
    BudgetExceeded { cost: u64, budget: u64 },
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub enum AttackStrategy {
    /// Enroll templates with no human behind them, hoping every assigned
    /// verifier is corrupt.
    FakeIdentityFactory,
    /// Re-enroll noisy readings of already-verified people under fresh
    /// keys, testing the dedup pipeline.
    DuplicateEnrollment,
    /// Flood the stake gate to measure locked and forfeited cost.
    StakeGrinding,
    /// Measure how corrupted-verifier fractions shift audit majorities.
    AuditEvasion,
}

/// Whether a fabricated identity shows up when audited. Identities backed
/// by a real human always appear; this governs the mule-backed ones.
#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize, PartialEq, Eq)]
pub enum AuditAppearance {
    /// Appear only when the adversary controls the panel majority.
    #[default]
    Rational,
    Always,
    Never,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct AdversaryPlan {
    pub strategy: AttackStrategy,
    /// City whose genesis verifiers are bribed, in creation order.
    pub city: CityId,
    pub corrupted_count: u32,
    /// Exogenous bribe per corrupted verifier (off-ledger).
    pub bribe_cost_per_verifier: u64,
    pub attempts: u64,
    /// Tokens carved from the genesis sale to fund stake-gated claims,
    /// split evenly across the adversary's claimant keys.
    #[serde(default)]
    pub funding: u64,
    /// Keep re-rolling assignments after rejections, up to the protocol
    /// cap.
    #[serde(default)]
    pub grinding: bool,
    #[serde(default = "default_gate")]
    pub entry_gate: GateKind,
    #[serde(default)]
    pub audit_appearance: AuditAppearance,
    /// Hard cap on bribes plus funding; exceeding it aborts the run.
    #[serde(default)]
    pub budget: Option<u64>,
}

fn default_gate() -> GateKind {
    GateKind::VerifierSponsor
}

impl AdversaryPlan {
    pub fn validate(&self) -> Result<(), AdversaryError> {
        if self.attempts == 0 {
            return Err(AdversaryError::InvalidPlan("attempts must be at least 1".into()));
        }
        if self.entry_gate == GateKind::Stake && self.funding == 0 {
            return Err(AdversaryError::InvalidPlan(
                "stake-gated plans need non-zero funding".into(),
            ));
        }
        if self.strategy == AttackStrategy::StakeGrinding && self.entry_gate != GateKind::Stake {
            return Err(AdversaryError::InvalidPlan(
                "stake grinding requires the stake gate".into(),
            ));
        }
        if self.entry_gate == GateKind::Invitation {
            return Err(AdversaryError::InvalidPlan(
                "invitation-gated attack plans are not modeled".into(),
            ));
        }
        self.check_budget()?;
        Ok(())
    }

    pub fn bribes_total(&self) -> u64 {
        self.corrupted_count as u64 * self.bribe_cost_per_verifier
    }

    pub fn check_budget(&self) -> Result<(), AdversaryError> {
        if let Some(budget) = self.budget {
            let cost = self.bribes_total().saturating_add(self.funding);
            if cost > budget {
                return Err(AdversaryError::BudgetExceeded { cost, budget });
            }
        }
        Ok(())
    }
}

/// Exact numerator and denominator of C(k,c)/C(N,c) for small inputs.
pub fn all_corrupt_odds_exact(n_eligible: u64, k_corrupt: u64, c_required: u64) -> (u128, u128) {
    (binomial_u128(k_corrupt, c_required), binomial_u128(n_eligible, c_required))
}

fn binomial_u128(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut num: u128 = 1;
    for i in 0..k {
        num = num * (n - i) as u128 / (i + 1) as u128;
    }
    num
}

/// Probability that all `c_required` sequentially assigned distinct
/// verifiers are corrupt: C(k,c)/C(N,c).
pub fn probability_all_assigned_corrupt(
    n_eligible: u64,
    k_corrupt: u64,
    c_required: u64,
) -> Result<f64, AdversaryError> {
    if k_corrupt > n_eligible || c_required > n_eligible {
        return Err(AdversaryError::InvalidCounts);
    }
    if k_corrupt < c_required {
        return Ok(0.0);
    }
    let mut p = 1.0f64;
    for i in 0..c_required {
        p *= (k_corrupt - i) as f64 / (n_eligible - i) as f64;
    }
    Ok(p)
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct FrontierRow {
    pub k: u32,
    pub success_prob: f64,
    pub expected_cost: f64,
}

/// Closed-form collusion frontier for the no-grinding assignment game:
/// for each collusion size k, the success probability and the bribe cost.
/// Returns the rows and the smallest k reaching `target_success_prob`.
pub fn min_collusion_curve(
    n_eligible: u32,
    certs_required: u32,
    bribe_cost_per_verifier: u64,
    target_success_prob: f64,
) -> Result<(Vec<FrontierRow>, Option<u32>), AdversaryError> {
    if !(0.0..1.0).contains(&target_success_prob) && target_success_prob != 1.0 {
        return Err(AdversaryError::InvalidPlan("target probability must lie in (0,1]".into()));
    }
    let mut rows = Vec::new();
    let mut first = None;
    for k in certs_required..=n_eligible {
        let p = probability_all_assigned_corrupt(n_eligible as u64, k as u64, certs_required as u64)?;
        let cost = k as f64 * bribe_cost_per_verifier as f64;
        if first.is_none() && p >= target_success_prob {
            first = Some(k);
        }
        rows.push(FrontierRow { k, success_prob: p, expected_cost: cost });
    }
    Ok((rows, first))
}

/// What one attempt recorded for counterfactual evaluation: its key and
/// when its assignments and verdicts were paced.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct AttemptRecord {
    pub pk: PersonId,
    /// Epoch the first assignment was committed.
    pub first_assign_epoch: u64,
    /// Epoch of the first certificate verdict.
    pub first_verdict_epoch: u64,
    /// Entry stake locked for this attempt (0 for sponsored claims).
    pub stake: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WalkOutcome {
    pub success: bool,
    pub certifiers: Vec<PersonId>,
    pub rejections: u32,
}

/// Re-derive one attempt's outcome under a hypothetical corrupt set.
///
/// Assignment j draws over the static eligible pool minus prior
/// certifiers, indexed by SHA-256(R || pk || j). Verdict j lands one epoch
/// after verdict j-1; a follow-up assignment is committed in the epoch of
/// the verdict that caused it. This mirrors the live driver exactly, so
/// outcomes for the executed corrupt set match the recorded events, and
/// nested corrupt sets yield monotone success counts.
pub fn walk_attempt(
    record: &AttemptRecord,
    eligible_sorted: &[PersonId],
    beacon_at: impl Fn(u64) -> Digest,
    corrupted: &BTreeSet<PersonId>,
    certs_required: u32,
    max_reassignments: u32,
    grinding: bool,
) -> WalkOutcome {
    let mut certifiers: Vec<PersonId> = Vec::with_capacity(certs_required as usize);
    let mut rejections = 0u32;
    let mut seq = 0u64;
    loop {
        let verdict_idx = seq; // every assignment gets exactly one verdict
        let assign_epoch = if seq == 0 {
            record.first_assign_epoch
        } else {
            record.first_verdict_epoch + verdict_idx - 1
        };
        let pool: Vec<&PersonId> =
            eligible_sorted.iter().filter(|v| !certifiers.contains(v)).collect();
        if pool.is_empty() {
            return WalkOutcome { success: false, certifiers, rejections };
        }
        let beacon = beacon_at(assign_epoch);
        let idx = assignment_index(&beacon, &record.pk, seq, pool.len());
        let verifier = *pool[idx];
        seq += 1;
        if corrupted.contains(&verifier) {
            certifiers.push(verifier);
            if certifiers.len() as u32 >= certs_required {
                return WalkOutcome { success: true, certifiers, rejections };
            }
        } else {
            if !grinding || rejections >= max_reassignments {
                return WalkOutcome { success: false, certifiers, rejections };
            }
            rejections += 1;
        }
    }
}

#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize, PartialEq)]
pub struct DetectionStats {
    pub count: u64,
    pub min_epochs: u64,
    pub max_epochs: u64,
    pub mean_epochs: f64,
}

impl DetectionStats {
    pub fn from_delays(delays: &[u64]) -> Self {
        if delays.is_empty() {
            return DetectionStats::default();
        }
        DetectionStats {
            count: delays.len() as u64,
            min_epochs: *delays.iter().min().expect("non-empty"),
            max_epochs: *delays.iter().max().expect("non-empty"),
            mean_epochs: delays.iter().sum::<u64>() as f64 / delays.len() as f64,
        }
    }
}

/// Outcome aggregate of an attack run. Successes are counted at the final
/// epoch; an identity that was verified and later revoked counts as
/// detected, not as a success.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct AttackReport {
    pub strategy: AttackStrategy,
    pub collusion_size: u32,
    pub attempts: u64,
    pub successes: u64,
    pub detected: u64,
    pub failed: u64,
    pub bribes_paid: u64,
    pub stakes_forfeited: u64,
    pub stakes_slashed: u64,
    /// bribes + forfeited + slashed.
    pub tokens_spent: u64,
    pub time_to_detection: DetectionStats,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_matches_frozen_oracle_values() {
        // C(10,3)/C(100,3) = 120/161700.
        let (num, den) = all_corrupt_odds_exact(100, 10, 3);
        assert_eq!((num, den), (120, 161700));
        let p = probability_all_assigned_corrupt(100, 10, 3).unwrap();
        assert!((p - 120.0 / 161700.0).abs() < 1e-15);
    }

    #[test]
    fn degenerate_counts() {
        assert_eq!(probability_all_assigned_corrupt(50, 50, 3).unwrap(), 1.0);
        assert_eq!(probability_all_assigned_corrupt(50, 2, 3).unwrap(), 0.0);
        assert_eq!(
            probability_all_assigned_corrupt(10, 11, 3),
            Err(AdversaryError::InvalidCounts)
        );
        assert_eq!(
            probability_all_assigned_corrupt(10, 5, 11),
            Err(AdversaryError::InvalidCounts)
        );
    }

    #[test]
    fn exhaustive_enumeration_agrees_at_small_n() {
        // Count c-subsets fully inside the corrupt prefix for all small
        // cases; C(12,3) = 220 and C(5,3) = 10 at N=12, k=5.
        for n in 3..=12u64 {
            for k in 0..=n {
                for c in 1..=3u64.min(n) {
                    let mut inside = 0u64;
                    let mut total = 0u64;
                    let idx: Vec<u64> = (0..n).collect();
                    for a in 0..n as usize {
                        for b in (a + 1)..n as usize {
                            if c == 2 {
                                total += 1;
                                if idx[a] < k && idx[b] < k {
                                    inside += 1;
                                }
                            } else if c == 3 {
                                for d in (b + 1)..n as usize {
                                    total += 1;
                                    if idx[a] < k && idx[b] < k && idx[d] < k {
                                        inside += 1;
                                    }
                                }
                            }
                        }
                    }
                    if c == 1 {
                        total = n;
                        inside = k;
                    }
                    let p = probability_all_assigned_corrupt(n, k, c).unwrap();
                    let exact = inside as f64 / total as f64;
                    assert!((p - exact).abs() < 1e-12, "n={n} k={k} c={c}");
                }
            }
        }
    }

    #[test]
    fn frontier_target_half_needs_80_of_100() {
        let (rows, first) = min_collusion_curve(100, 3, 10, 0.5).unwrap();
        assert_eq!(first, Some(80));
        assert_eq!(rows.len(), 98);
        // C(80,3)/C(100,3) = 82160/161700.
        let row80 = rows.iter().find(|r| r.k == 80).unwrap();
        assert!((row80.success_prob - 82160.0 / 161700.0).abs() < 1e-12);
        // Monotone probability and cost.
        for w in rows.windows(2) {
            assert!(w[1].success_prob >= w[0].success_prob);
            assert!(w[1].expected_cost >= w[0].expected_cost);
        }
    }

    #[test]
    fn frontier_target_one_needs_everyone() {
        let (_, first) = min_collusion_curve(20, 3, 1, 1.0).unwrap();
        assert_eq!(first, Some(20));
    }

    #[test]
    fn budget_check() {
        let plan = AdversaryPlan {
            strategy: AttackStrategy::FakeIdentityFactory,
            city: 0,
            corrupted_count: 10,
            bribe_cost_per_verifier: 100,
            attempts: 5,
            funding: 50,
            grinding: false,
            entry_gate: GateKind::VerifierSponsor,
            audit_appearance: AuditAppearance::Rational,
            budget: Some(1000),
        };
        assert_eq!(
            plan.check_budget(),
            Err(AdversaryError::BudgetExceeded { cost: 1050, budget: 1000 })
        );
    }

    #[test]
    fn walk_success_is_monotone_in_nested_corrupt_sets() {
        let pool: Vec<PersonId> = (0..20u8).map(|i| PersonId([i + 1; 32])).collect();
        let beacon_at = |epoch: u64| crate::hashing::sha256(&epoch.to_be_bytes());
        for trial in 0..200u8 {
            let record = AttemptRecord {
                pk: PersonId([trial.wrapping_add(100); 32]),
                first_assign_epoch: 1 + (trial % 3) as u64,
                first_verdict_epoch: 1 + (trial % 3) as u64,
                stake: 0,
            };
            let mut prev = false;
            for k in 0..=20usize {
                let corrupted: BTreeSet<PersonId> = pool[..k].iter().copied().collect();
                let out = walk_attempt(&record, &pool, beacon_at, &corrupted, 3, 3, false);
                assert!(out.success >= prev, "success flipped off as k grew");
                prev = out.success;
            }
        }
    }
}
