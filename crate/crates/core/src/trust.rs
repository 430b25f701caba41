//! Non-tradable trust tokens: each verified person holds exactly one
//! delegation, re-pointable at any time. Delegation counts gate verifier
//! eligibility; suspension removes a verifier from service for a period.

use crate::engine::Engine;
use crate::ledger::EventBody;
use crate::registry::{IdentityStatus, PersonId};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TrustError {
    #[error("delegator or delegate is not verified")]
    Unverified,
    #[error("cannot delegate to oneself")]
    SelfDelegation,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct TrustDelegation {
    pub to: PersonId,
    pub epoch: u64,
}

/// Delegations, received-weight cache, and suspensions. Weights count only
/// delegations whose source is currently Verified; status transitions
/// adjust them through [`TrustState::set_source_active`].
#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
pub struct TrustState {
    pub delegations: BTreeMap<PersonId, TrustDelegation>,
    pub weights: BTreeMap<PersonId, u64>,
    pub suspended_until: BTreeMap<PersonId, u64>,
}

impl TrustState {
    pub fn weight(&self, pk: &PersonId) -> u64 {
        self.weights.get(pk).copied().unwrap_or(0)
    }

    pub fn suspended_until(&self, pk: &PersonId) -> u64 {
        self.suspended_until.get(pk).copied().unwrap_or(0)
    }

    fn bump(&mut self, pk: &PersonId, delta: i64) {
        let w = self.weights.entry(*pk).or_insert(0);
        let next = (*w as i64) + delta;
        debug_assert!(next >= 0, "trust weight underflow for {pk}");
        *w = next.max(0) as u64;
        if *w == 0 {
            self.weights.remove(pk);
        }
    }

    /// Record a (re-)delegation from a currently verified source.
    pub fn delegate(&mut self, from: PersonId, to: PersonId, epoch: u64) {
        if let Some(prev) = self.delegations.get(&from) {
            let prev_to = prev.to;
            self.bump(&prev_to, -1);
        }
        self.delegations.insert(from, TrustDelegation { to, epoch });
        self.bump(&to, 1);
    }

    /// Activate or deactivate a source's outgoing delegation when its
    /// verified status changes.
    pub fn set_source_active(&mut self, from: &PersonId, active: bool) {
        if let Some(d) = self.delegations.get(from) {
            let to = d.to;
            self.bump(&to, if active { 1 } else { -1 });
        }
    }

    /// Move a person's delegation records to a new key after recovery.
    pub fn rekey(&mut self, old: &PersonId, new: PersonId) {
        if let Some(d) = self.delegations.remove(old) {
            self.delegations.insert(new, d);
        }
        for d in self.delegations.values_mut() {
            if d.to == *old {
                d.to = new;
            }
        }
        if let Some(w) = self.weights.remove(old) {
            *self.weights.entry(new).or_insert(0) += w;
        }
        if let Some(s) = self.suspended_until.remove(old) {
            let entry = self.suspended_until.entry(new).or_insert(0);
            *entry = (*entry).max(s);
        }
    }

    /// Recompute weights from scratch; used by invariant checks.
    pub fn recomputed_weights(
        &self,
        is_verified: impl Fn(&PersonId) -> bool,
    ) -> BTreeMap<PersonId, u64> {
        let mut weights = BTreeMap::new();
        for (from, d) in &self.delegations {
            if is_verified(from) {
                *weights.entry(d.to).or_insert(0) += 1;
            }
        }
        weights
    }
}

impl Engine {
    /// Delegate (or re-delegate) the caller's single trust token.
    pub fn delegate_trust(&mut self, from: PersonId, to: PersonId) -> Result<(), TrustError> {
        if from == to {
            return Err(TrustError::SelfDelegation);
        }
        let verified = |pk: &PersonId| {
            self.state
                .identities
                .get(pk)
                .is_some_and(|r| r.status == IdentityStatus::Verified)
        };
        if !verified(&from) || !verified(&to) {
            return Err(TrustError::Unverified);
        }
        self.commit(EventBody::TrustDelegated { from, to })
            .expect("validated delegation must apply");
        Ok(())
    }

    /// Suspend a verifier's trust after a corruption verdict. In-flight
    /// assignments to the verifier are voided and re-drawn for free.
    pub fn suspend_trust(&mut self, pk: PersonId, until_epoch: u64) {
        self.commit(EventBody::TrustSuspended { pk, until_epoch })
            .expect("suspension cannot be rejected");
    }
}
