//! A-judge re-checks: quota-limited calls by verifiers and layer-3
//! representatives, all-verifier adjudication with a deadline, revocation
//! of fakes, slashing of their certifiers to the caller, and random checks.

use crate::biometric::{match_template, BiometricTemplate};
use crate::engine::Engine;
use crate::ledger::EventBody;
use crate::registry::{IdentityStatus, PersonId, RevocationReason};
use crate::tokens::LockReason;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AuditError {
    #[error("re-check quota exhausted")]
    QuotaExhausted,
    #[error("caller is neither an eligible verifier nor a layer-3 representative")]
    NotAuthorized,
    #[error("target is not verified")]
    TargetNotVerified,
    #[error("deadline passed")]
    DeadlinePassed,
    #[error("unknown audit call")]
    UnknownCall,
    #[error("audit call already settled")]
    CallClosed,
    #[error("no eligible verifiers available to adjudicate")]
    NoPanel,
    #[error("event rejected: {0}")]
    Internal(String),
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub enum AuditOutcome {
    PassedGenuine,
    FailedFake,
    MissedDeadline,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct AuditCall {
    pub id: u64,
    pub caller: PersonId,
    pub target: PersonId,
    pub called_epoch: u64,
    pub deadline_epoch: u64,
    pub outcome: Option<AuditOutcome>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
pub struct AuditState {
    pub calls: BTreeMap<u64, AuditCall>,
    pub next_call_id: u64,
    /// Windowed re-check usage per caller (verifiers and representatives).
    pub quotas: BTreeMap<PersonId, crate::registry::WindowedQuota>,
}

impl AuditState {
    pub fn open_calls(&self) -> impl Iterator<Item = &AuditCall> {
        self.calls.values().filter(|c| c.outcome.is_none())
    }
}

/// Settlement of one failed audit: what was revoked, slashed, suspended.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Settlement {
    pub target: PersonId,
    pub slashes: Vec<(PersonId, u64)>,
    pub suspended: Vec<PersonId>,
}

impl Engine {
    /// Open a re-check. Verifiers and layer-3 representatives spend quota;
    /// the system account (random checks) does not.
    pub fn call_ajudge(&mut self, caller: PersonId, target: PersonId) -> Result<u64, AuditError> {
        let epoch = self.state.epoch;
        match self.state.identities.get(&target) {
            Some(r) if r.status == IdentityStatus::Verified => {}
            _ => return Err(AuditError::TargetNotVerified),
        }
        if caller != PersonId::SYSTEM {
            let authorized = self.state.is_eligible_verifier(&caller, epoch)
                || self.state.governance.is_layer3_rep(&caller);
            if !authorized {
                return Err(AuditError::NotAuthorized);
            }
            let used = self
                .state
                .audit
                .quotas
                .get(&caller)
                .map_or(0, |q| q.used_in(epoch, self.state.config.protocol.quota_window_epochs));
            if used >= self.state.config.protocol.recheck_quota {
                return Err(AuditError::QuotaExhausted);
            }
        }
        let call_id = self.state.audit.next_call_id;
        let deadline_epoch = epoch + self.state.config.protocol.ajudge_deadline_epochs;
        self.commit(EventBody::AJudgeCalled { call_id, caller, target, deadline_epoch })
            .map_err(|e| AuditError::Internal(e.to_string()))?;
        Ok(call_id)
    }

    /// The target appeared: every eligible verifier of the target's city
    /// samples them and votes. A strict majority of genuine votes passes
    /// and rewards the target; otherwise the identity is revoked and its
    /// certifiers are slashed to the caller.
    pub fn adjudicate(
        &mut self,
        call_id: u64,
        samples: &[(PersonId, BiometricTemplate)],
    ) -> Result<(AuditOutcome, Option<Settlement>), AuditError> {
        let epoch = self.state.epoch;
        let call = self.state.audit.calls.get(&call_id).ok_or(AuditError::UnknownCall)?;
        if call.outcome.is_some() {
            return Err(AuditError::CallClosed);
        }
        if epoch > call.deadline_epoch {
            return Err(AuditError::DeadlinePassed);
        }
        let target = call.target;
        let caller = call.caller;
        let identity =
            self.state.identities.get(&target).ok_or(AuditError::TargetNotVerified)?;
        if identity.status != IdentityStatus::Verified {
            return Err(AuditError::TargetNotVerified);
        }
        let adversary_target = identity.adversary;
        let panel = self.state.eligible_verifiers(identity.city, epoch);
        if panel.is_empty() {
            return Err(AuditError::NoPanel);
        }
        let provided: Vec<PersonId> = samples.iter().map(|(pk, _)| *pk).collect();
        if provided != panel {
            return Err(AuditError::Internal(
                "samples must cover exactly the eligible city verifiers in order".into(),
            ));
        }
        let enrolled = self
            .bio
            .enrolled
            .get(&target)
            .ok_or_else(|| AuditError::Internal("missing enrolled template".into()))?
            .clone();
        let mut votes_genuine = 0u64;
        let mut votes_fake = 0u64;
        for (verifier, presented) in samples {
            let genuine = if adversary_target && self.state.is_corrupted(verifier) {
                true
            } else {
                match_template(presented, &enrolled, &self.bio.policy)
                    .map_err(|e| AuditError::Internal(e.to_string()))?
            };
            if genuine {
                votes_genuine += 1;
            } else {
                votes_fake += 1;
            }
        }
        let passed = votes_genuine > votes_fake;
        self.commit(EventBody::AJudgeResolved { call_id, target, votes_genuine, votes_fake, passed })
            .map_err(|e| AuditError::Internal(e.to_string()))?;
        if passed {
            let amount = self.state.config.monetary.ajudge_reward;
            self.commit(EventBody::AuditRewardMinted { pk: target, amount })
                .map_err(|e| AuditError::Internal(e.to_string()))?;
            Ok((AuditOutcome::PassedGenuine, None))
        } else {
            let settlement =
                self.settle_failed_audit(target, caller, RevocationReason::AuditFailed)?;
            Ok((AuditOutcome::FailedFake, Some(settlement)))
        }
    }

    /// The target never appeared: revoke without slashing, since a no-show
    /// proves nothing about the certifying verifiers.
    pub fn miss_deadline(&mut self, call_id: u64) -> Result<(), AuditError> {
        let epoch = self.state.epoch;
        let call = self.state.audit.calls.get(&call_id).ok_or(AuditError::UnknownCall)?;
        if call.outcome.is_some() {
            return Err(AuditError::CallClosed);
        }
        if epoch <= call.deadline_epoch {
            return Err(AuditError::Internal("deadline has not passed yet".into()));
        }
        let target = call.target;
        self.commit(EventBody::AJudgeMissed { call_id, target })
            .map_err(|e| AuditError::Internal(e.to_string()))?;
        if self
            .state
            .identities
            .get(&target)
            .is_some_and(|r| r.status == IdentityStatus::Verified)
        {
            self.revoke_identity(target, RevocationReason::AuditMissed)?;
        }
        Ok(())
    }

    fn revoke_identity(&mut self, pk: PersonId, reason: RevocationReason) -> Result<(), AuditError> {
        let digest = self.state.identities[&pk].template_digest;
        self.commit(EventBody::IdentityRevoked { pk, reason })
            .map_err(|e| AuditError::Internal(e.to_string()))?;
        self.bio.index.remove(&digest);
        Ok(())
    }

    /// Revoke the fake and slash every certifying verifier's stake to the
    /// caller, suspending their trust.
    fn settle_failed_audit(
        &mut self,
        target: PersonId,
        caller: PersonId,
        reason: RevocationReason,
    ) -> Result<Settlement, AuditError> {
        self.revoke_identity(target, reason)?;
        let certifiers: Vec<PersonId> = self.state.identities[&target]
            .certificates
            .iter()
            .map(|c| c.verifier)
            .collect();
        let until = self.state.epoch + self.state.config.protocol.suspension_epochs;
        let mut slashes = Vec::new();
        let mut suspended = Vec::new();
        for verifier in certifiers {
            if let Some(amount) = self.state.tokens.lock_amount(&verifier, LockReason::VerifierStake)
            {
                self.commit(EventBody::StakeSlashed { pk: verifier, beneficiary: caller, amount })
                    .map_err(|e| AuditError::Internal(e.to_string()))?;
                slashes.push((verifier, amount));
            }
            self.commit(EventBody::TrustSuspended { pk: verifier, until_epoch: until })
                .map_err(|e| AuditError::Internal(e.to_string()))?;
            suspended.push(verifier);
        }
        Ok(Settlement { target, slashes, suspended })
    }
}
