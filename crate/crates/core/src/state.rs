//! Derived application state and the single transition function.
//!
//! Live runs and replays mutate state through exactly one path,
//! [`AppState::apply`], so a replayed log reproduces the live state hash
//! by construction. Handlers validate everything before mutating: a failed
//! apply leaves the state untouched, and replay reports the offending
//! height. Where a payload records a choice that is recomputable from
//! state (verifier assignments, community partitions, election winners,
//! tallies), apply recomputes and rejects mismatches, so forged logs fail.

use crate::audit::{AuditCall, AuditOutcome, AuditState};
use crate::config::{CityId, ScenarioConfig};
use crate::governance::{
    plurality_winner, representative_valid, tally, Community, CommunitySpec, GovernanceState,
    LayerGroup, ParamTarget, Proposal, ProposalStatus,
};
use crate::hashing::{hash_canonical, Digest};
use crate::ledger::EventBody;
use crate::registry::{
    assignment_index, AssignmentCause, EntryGate, IdentityRecord, IdentityStatus, PersonId,
    RandomnessBeacon, VerifierRecord, WindowedQuota,
};
use crate::tokens::{mint_credits, LockReason, TokenState};
use crate::trust::TrustState;
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
#[error("rejected: {0}")]
pub struct ApplyError(pub String);

fn reject<T>(msg: impl Into<String>) -> Result<T, ApplyError> {
    Err(ApplyError(msg.into()))
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct AppState {
    pub config: ScenarioConfig,
    pub started: bool,
    pub epoch: u64,
    pub beacon: RandomnessBeacon,
    pub identities: BTreeMap<PersonId, IdentityRecord>,
    pub retired_pks: BTreeSet<PersonId>,
    pub verifiers: BTreeMap<PersonId, VerifierRecord>,
    /// Genesis verifiers per city in creation order; corruption plans and
    /// collusion sweeps index into this.
    pub genesis_order: BTreeMap<CityId, Vec<PersonId>>,
    pub corrupted: BTreeSet<PersonId>,
    pub trust: TrustState,
    pub tokens: TokenState,
    pub governance: GovernanceState,
    pub audit: AuditState,
    /// Template digests of currently verified identities.
    pub dedup_digests: BTreeSet<Digest>,
    /// Stake-gated claims in flight per city; drives the entry stake price.
    pub pending_stake_claims: BTreeMap<CityId, u64>,
    pub pending_param_changes: Vec<(u64, ParamTarget, u64)>,
}

impl AppState {
    pub fn new(config: ScenarioConfig) -> Self {
        let beacon = RandomnessBeacon::genesis(config.seed);
        AppState {
            config,
            started: false,
            epoch: 0,
            beacon,
            identities: BTreeMap::new(),
            retired_pks: BTreeSet::new(),
            verifiers: BTreeMap::new(),
            genesis_order: BTreeMap::new(),
            corrupted: BTreeSet::new(),
            trust: TrustState::default(),
            tokens: TokenState::default(),
            governance: GovernanceState::default(),
            audit: AuditState::default(),
            dedup_digests: BTreeSet::new(),
            pending_stake_claims: BTreeMap::new(),
            pending_param_changes: Vec::new(),
        }
    }

    pub fn state_hash(&self) -> Digest {
        hash_canonical(self)
    }

    pub fn pk_in_use(&self, pk: &PersonId) -> bool {
        *pk == PersonId::SYSTEM || self.identities.contains_key(pk) || self.retired_pks.contains(pk)
    }

    pub fn is_corrupted(&self, pk: &PersonId) -> bool {
        self.corrupted.contains(pk)
    }

    /// Entry stake scales linearly with unresolved stake-gated claims in
    /// the city.
    pub fn required_stake(&self, city: CityId) -> u64 {
        let pending = self.pending_stake_claims.get(&city).copied().unwrap_or(0);
        self.config.monetary.base_stake * (1 + pending)
    }

    pub fn is_eligible_verifier(&self, pk: &PersonId, epoch: u64) -> bool {
        let Some(v) = self.verifiers.get(pk) else { return false };
        let verified = self
            .identities
            .get(pk)
            .is_some_and(|r| r.status == IdentityStatus::Verified);
        let staked = self.tokens.lock_amount(pk, LockReason::VerifierStake)
            == Some(self.config.monetary.verifier_stake);
        let unsuspended = epoch >= self.trust.suspended_until(pk);
        let trusted =
            v.genesis || self.trust.weight(pk) >= self.config.protocol.verifier_trust_threshold;
        verified && staked && unsuspended && trusted
    }

    /// Eligible verifiers of a city in ascending pk order.
    pub fn eligible_verifiers(&self, city: CityId, epoch: u64) -> Vec<PersonId> {
        self.verifiers
            .values()
            .filter(|v| v.city == city && self.is_eligible_verifier(&v.pk, epoch))
            .map(|v| v.pk)
            .collect()
    }

    /// The beacon-determined next assignee: eligible city verifiers minus
    /// those already certifying and the claimant, indexed by
    /// SHA-256(R || pk || seq).
    pub fn expected_assignee(&self, identity: &IdentityRecord) -> Option<PersonId> {
        let pool: Vec<PersonId> = self
            .eligible_verifiers(identity.city, self.epoch)
            .into_iter()
            .filter(|v| !identity.certified_by(v) && *v != identity.pk)
            .collect();
        if pool.is_empty() {
            return None;
        }
        let idx = assignment_index(&self.beacon.value, &identity.pk, identity.assignment_seq, pool.len());
        Some(pool[idx])
    }

    /// Renewal draws from all eligible city verifiers except the renewing
    /// identity itself.
    pub fn renewal_assignee(&self, identity: &IdentityRecord) -> Option<PersonId> {
        let pool: Vec<PersonId> = self
            .eligible_verifiers(identity.city, self.epoch)
            .into_iter()
            .filter(|v| *v != identity.pk)
            .collect();
        if pool.is_empty() {
            return None;
        }
        let idx = assignment_index(&self.beacon.value, &identity.pk, identity.assignment_seq, pool.len());
        Some(pool[idx])
    }

    pub fn verified_ids(&self) -> impl Iterator<Item = &IdentityRecord> {
        self.identities.values().filter(|r| r.status == IdentityStatus::Verified)
    }

    pub fn status_counts(&self) -> StatusCounts {
        let mut counts = StatusCounts::default();
        for r in self.identities.values() {
            match r.status {
                IdentityStatus::PendingEntry | IdentityStatus::PendingVerification => {
                    counts.pending += 1
                }
                IdentityStatus::Verified => counts.verified += 1,
                IdentityStatus::Revoked => counts.revoked += 1,
                IdentityStatus::Expired => counts.expired += 1,
            }
        }
        counts
    }

    /// Deterministic community partition: per city (ascending), verified
    /// members in pk order, split evenly into groups of at most
    /// community_max; cities with fewer than community_min members form no
    /// community this term.
    pub fn compute_community_partition(&self) -> Vec<CommunitySpec> {
        let min = self.config.protocol.community_min as usize;
        let max = self.config.protocol.community_max as usize;
        let mut by_city: BTreeMap<CityId, Vec<PersonId>> = BTreeMap::new();
        for r in self.verified_ids() {
            by_city.entry(r.city).or_default().push(r.pk);
        }
        let mut id = self.governance.next_community_id;
        let mut specs = Vec::new();
        for (city, members) in by_city {
            for group in crate::governance::partition_even(&members, min, max) {
                specs.push(CommunitySpec { id, city, members: group });
                id += 1;
            }
        }
        specs
    }

    /// Layers 2 and 3 from the current layer-1 representatives: sort by pk,
    /// split evenly within the configured bounds; each group's member with
    /// the highest trust weight (ties to the lowest pk) is chosen.
    pub fn compute_layers(&self) -> (Vec<LayerGroup>, Vec<LayerGroup>) {
        let choose = |members: &[PersonId]| -> PersonId {
            *members
                .iter()
                .max_by(|a, b| self.trust.weight(a).cmp(&self.trust.weight(b)).then(b.cmp(a)))
                .expect("groups are non-empty")
        };
        let mut layer1 = self.governance.layer1_reps();
        layer1.sort();
        layer1.dedup();
        let p = &self.config.protocol;
        let layer2: Vec<LayerGroup> = crate::governance::partition_even(
            &layer1,
            p.layer2_group_min as usize,
            p.layer2_group_max as usize,
        )
        .into_iter()
        .map(|members| LayerGroup { chosen: choose(&members), members })
        .collect();
        let mut layer2_reps: Vec<PersonId> = layer2.iter().map(|g| g.chosen).collect();
        layer2_reps.sort();
        layer2_reps.dedup();
        let layer3: Vec<LayerGroup> = crate::governance::partition_even(
            &layer2_reps,
            p.layer3_group_min as usize,
            p.layer3_group_max as usize,
        )
        .into_iter()
        .map(|members| LayerGroup { chosen: choose(&members), members })
        .collect();
        (layer2, layer3)
    }

    fn identity(&self, pk: &PersonId) -> Result<&IdentityRecord, ApplyError> {
        self.identities.get(pk).ok_or_else(|| ApplyError(format!("unknown identity {pk}")))
    }

    /// The single state-transition function. Validates fully before any
    /// mutation.
    pub fn apply(&mut self, body: &EventBody) -> Result<(), ApplyError> {
        use EventBody::*;
        match body {
            ScenarioStarted { config } => {
                if self.started {
                    return reject("log already started");
                }
                if *config != self.config {
                    return reject("config does not match the state under replay");
                }
                self.started = true;
                Ok(())
            }

            TokensAllocated { allocations } => {
                if !self.started {
                    return reject("allocation before start");
                }
                self.tokens
                    .genesis_allocate(allocations, self.config.monetary.genesis_supply())
                    .map_err(|e| ApplyError(e.to_string()))
            }

            GenesisVerifierAdded { pk, city, template_digest } => {
                if self.epoch != 0 {
                    return reject("genesis verifiers may only be added at epoch 0");
                }
                if self.pk_in_use(pk) {
                    return reject("pk already in use");
                }
                if !self.config.cities.iter().any(|c| c.city == *city) {
                    return reject(format!("unknown city {city}"));
                }
                if self.tokens.lock_amount(pk, LockReason::VerifierStake)
                    != Some(self.config.monetary.verifier_stake)
                {
                    return reject("genesis verifier must have the verifier stake locked");
                }
                let ttl = self.config.protocol.identity_ttl_epochs;
                self.identities.insert(
                    *pk,
                    IdentityRecord {
                        pk: *pk,
                        template_digest: *template_digest,
                        city: *city,
                        status: IdentityStatus::Verified,
                        certificates: Vec::new(),
                        certs_required: self.config.protocol.certs_required,
                        assignment_seq: 0,
                        current_assignee: None,
                        entry_gate: None,
                        trust_circle: Vec::new(),
                        verified_epoch: Some(0),
                        expiry_epoch: Some(ttl),
                        reassignments_used: 0,
                        rejection_pending: false,
                        assignment_voided: false,
                        invitations_remaining: self.config.protocol.invitations_per_user,
                        dedup_pending: Vec::new(),
                        adversary: false,
                    },
                );
                self.verifiers.insert(
                    *pk,
                    VerifierRecord {
                        pk: *pk,
                        city: *city,
                        genesis: true,
                        sponsor_quota: WindowedQuota::default(),
                    },
                );
                self.genesis_order.entry(*city).or_default().push(*pk);
                self.dedup_digests.insert(*template_digest);
                if let Some(plan) = &self.config.adversary {
                    if plan.city == *city && (self.corrupted.len() as u32) < plan.corrupted_count {
                        self.corrupted.insert(*pk);
                    }
                }
                Ok(())
            }

            EpochStarted { epoch } => {
                if !self.started {
                    return reject("epoch before start");
                }
                if *epoch != self.epoch + 1 {
                    return reject(format!("expected epoch {}, got {epoch}", self.epoch + 1));
                }
                self.epoch = *epoch;
                self.beacon.next();
                let due: Vec<(u64, ParamTarget, u64)> = self
                    .pending_param_changes
                    .iter()
                    .filter(|(eff, _, _)| *eff <= *epoch)
                    .cloned()
                    .collect();
                self.pending_param_changes.retain(|(eff, _, _)| *eff > *epoch);
                for (_, param, value) in due {
                    self.set_param(param, value);
                }
                Ok(())
            }

            IdentityClaimed { pk, city, template_digest, entry_gate, dedup_flags, adversary } => {
                if self.pk_in_use(pk) {
                    return reject("pk already in use");
                }
                if !self.config.cities.iter().any(|c| c.city == *city) {
                    return reject(format!("unknown city {city}"));
                }
                match entry_gate {
                    EntryGate::Invitation { inviter } => {
                        let r = self.identity(inviter)?;
                        if r.status != IdentityStatus::Verified {
                            return reject("inviter not verified");
                        }
                        if r.invitations_remaining == 0 {
                            return reject("inviter has no invitations left");
                        }
                    }
                    EntryGate::Stake { amount } => {
                        if *amount != self.required_stake(*city) {
                            return reject("stake amount does not match the required stake");
                        }
                        if self.tokens.lock_amount(pk, LockReason::EntryStake) != Some(*amount) {
                            return reject("entry stake not locked");
                        }
                    }
                    EntryGate::VerifierSponsor { sponsor } => {
                        if !self.is_eligible_verifier(sponsor, self.epoch) {
                            return reject("sponsor not an eligible verifier");
                        }
                        let v = &self.verifiers[sponsor];
                        if v.city != *city {
                            return reject("sponsor serves another city");
                        }
                        let used = v
                            .sponsor_quota
                            .used_in(self.epoch, self.config.protocol.sponsor_window_epochs);
                        if used >= self.config.protocol.sponsor_quota {
                            return reject("sponsor quota exhausted");
                        }
                    }
                }
                // Checks done; apply side effects.
                match entry_gate {
                    EntryGate::Invitation { inviter } => {
                        self.identities.get_mut(inviter).expect("checked").invitations_remaining -=
                            1;
                    }
                    EntryGate::Stake { .. } => {
                        *self.pending_stake_claims.entry(*city).or_insert(0) += 1;
                    }
                    EntryGate::VerifierSponsor { sponsor } => {
                        let window = self.config.protocol.sponsor_window_epochs;
                        let epoch = self.epoch;
                        self.verifiers
                            .get_mut(sponsor)
                            .expect("checked")
                            .sponsor_quota
                            .record_use(epoch, window);
                    }
                }
                let status = if dedup_flags.is_empty() {
                    IdentityStatus::PendingVerification
                } else {
                    IdentityStatus::PendingEntry
                };
                self.identities.insert(
                    *pk,
                    IdentityRecord {
                        pk: *pk,
                        template_digest: *template_digest,
                        city: *city,
                        status,
                        certificates: Vec::new(),
                        certs_required: self.config.protocol.certs_required,
                        assignment_seq: 0,
                        current_assignee: None,
                        entry_gate: Some(*entry_gate),
                        trust_circle: Vec::new(),
                        verified_epoch: None,
                        expiry_epoch: None,
                        reassignments_used: 0,
                        rejection_pending: false,
                        assignment_voided: false,
                        invitations_remaining: 0,
                        dedup_pending: dedup_flags.clone(),
                        adversary: *adversary,
                    },
                );
                Ok(())
            }

            DedupAdjudicated { pk, matched_digest, votes_duplicate, votes_distinct, confirmed_duplicate } => {
                let identity = self.identity(pk)?;
                if identity.status != IdentityStatus::PendingEntry {
                    return reject("no adjudication pending");
                }
                if !identity.dedup_pending.contains(matched_digest) {
                    return reject("digest was not flagged for this claim");
                }
                let panel = self.eligible_verifiers(identity.city, self.epoch).len() as u64;
                if votes_duplicate + votes_distinct != panel || panel == 0 {
                    return reject("adjudication votes must cover the eligible city verifiers");
                }
                if *confirmed_duplicate != (votes_duplicate > votes_distinct) {
                    return reject("confirmation flag contradicts the vote counts");
                }
                let identity = self.identities.get_mut(pk).expect("checked");
                identity.dedup_pending.retain(|d| d != matched_digest);
                if !*confirmed_duplicate && identity.dedup_pending.is_empty() {
                    identity.status = IdentityStatus::PendingVerification;
                }
                Ok(())
            }

            VerifierAssigned { pk, verifier, seq, cause } => {
                let identity = self.identity(pk)?;
                if identity.status != IdentityStatus::PendingVerification {
                    return reject("identity not pending verification");
                }
                if identity.current_assignee.is_some() {
                    return reject("an assignment is already unresolved");
                }
                if *seq != identity.assignment_seq {
                    return reject("assignment sequence mismatch");
                }
                match cause {
                    AssignmentCause::Initial => {
                        if identity.rejection_pending || identity.assignment_voided {
                            return reject("initial assignment after rejection or void");
                        }
                    }
                    AssignmentCause::Reassignment => {
                        if !identity.rejection_pending {
                            return reject("reassignment without rejection");
                        }
                        if identity.reassignments_used >= self.config.protocol.max_reassignments {
                            return reject("reassignment limit reached");
                        }
                    }
                    AssignmentCause::Voided => {
                        if !identity.assignment_voided {
                            return reject("no voided assignment to replace");
                        }
                    }
                }
                match self.expected_assignee(identity) {
                    Some(expected) if expected == *verifier => {}
                    Some(_) => return reject("assigned verifier contradicts the beacon"),
                    None => return reject("no eligible verifiers in city"),
                }
                let identity = self.identities.get_mut(pk).expect("checked");
                identity.current_assignee = Some(*verifier);
                identity.assignment_seq += 1;
                match cause {
                    AssignmentCause::Reassignment => {
                        identity.reassignments_used += 1;
                        identity.rejection_pending = false;
                    }
                    AssignmentCause::Voided => identity.assignment_voided = false,
                    AssignmentCause::Initial => {}
                }
                Ok(())
            }

            CertificateIssued { pk, verifier } => {
                let identity = self.identity(pk)?;
                if identity.status != IdentityStatus::PendingVerification {
                    return reject("identity not pending verification");
                }
                if identity.current_assignee != Some(*verifier) {
                    return reject("certificate not from the assigned verifier");
                }
                if identity.certified_by(verifier) {
                    return reject("verifier already certified this identity");
                }
                let epoch = self.epoch;
                let identity = self.identities.get_mut(pk).expect("checked");
                identity.certificates.push(crate::registry::Certificate { verifier: *verifier, epoch });
                identity.current_assignee = None;
                Ok(())
            }

            CertificateRejected { pk, verifier } => {
                let identity = self.identity(pk)?;
                if identity.status != IdentityStatus::PendingVerification {
                    return reject("identity not pending verification");
                }
                if identity.current_assignee != Some(*verifier) {
                    return reject("rejection not from the assigned verifier");
                }
                let identity = self.identities.get_mut(pk).expect("checked");
                identity.current_assignee = None;
                identity.rejection_pending = true;
                Ok(())
            }

            IdentityVerified { pk, expiry_epoch } => {
                let identity = self.identity(pk)?;
                if identity.status != IdentityStatus::PendingVerification {
                    return reject("identity not pending verification");
                }
                if (identity.certificates.len() as u32) < identity.certs_required {
                    return reject("not enough certificates");
                }
                if *expiry_epoch != self.epoch + self.config.protocol.identity_ttl_epochs {
                    return reject("expiry does not match the identity ttl");
                }
                let gate = identity.entry_gate;
                let city = identity.city;
                let digest = identity.template_digest;
                let invitations = self.config.protocol.invitations_per_user;
                let epoch = self.epoch;
                let identity = self.identities.get_mut(pk).expect("checked");
                identity.status = IdentityStatus::Verified;
                identity.verified_epoch = Some(epoch);
                identity.expiry_epoch = Some(*expiry_epoch);
                identity.invitations_remaining = invitations;
                identity.rejection_pending = false;
                self.dedup_digests.insert(digest);
                if let Some(EntryGate::Stake { .. }) = gate {
                    let c = self.pending_stake_claims.entry(city).or_insert(0);
                    *c = c.saturating_sub(1);
                }
                self.trust.set_source_active(pk, true);
                Ok(())
            }

            ClaimTerminated { pk, reason: _ } => {
                let identity = self.identity(pk)?;
                if !identity.is_active() {
                    return reject("claim is not active");
                }
                let gate = identity.entry_gate;
                let city = identity.city;
                let identity = self.identities.get_mut(pk).expect("checked");
                identity.status = IdentityStatus::Revoked;
                identity.current_assignee = None;
                identity.dedup_pending.clear();
                if let Some(EntryGate::Stake { .. }) = gate {
                    let c = self.pending_stake_claims.entry(city).or_insert(0);
                    *c = c.saturating_sub(1);
                }
                Ok(())
            }

            TokensMinted { pk, credits } => {
                let identity = self.identity(pk)?;
                if identity.status != IdentityStatus::Verified
                    || identity.verified_epoch != Some(self.epoch)
                {
                    return reject("mint must follow a verification in the same epoch");
                }
                let verifier_pks: Vec<PersonId> =
                    identity.certificates.iter().map(|c| c.verifier).collect();
                let expected = mint_credits(self.config.monetary.x, *pk, &verifier_pks);
                if *credits != expected {
                    return reject("mint credits do not match the split rule");
                }
                self.tokens.credit_minted_verification(credits);
                Ok(())
            }

            AuditRewardMinted { pk, amount } => {
                if *amount != self.config.monetary.ajudge_reward {
                    return reject("audit reward amount mismatch");
                }
                let identity = self.identity(pk)?;
                if identity.status != IdentityStatus::Verified {
                    return reject("audit reward for a non-verified identity");
                }
                self.tokens.credit_minted_reward(*pk, *amount);
                Ok(())
            }

            StakeLocked { pk, amount, reason } => {
                self.tokens.lock(*pk, *reason, *amount).map_err(|e| ApplyError(e.to_string()))
            }

            StakeReturned { pk, reason } => {
                self.tokens.release(*pk, *reason).map(|_| ()).map_err(|e| ApplyError(e.to_string()))
            }

            StakeForfeited { pk, reason } => {
                self.tokens.forfeit(*pk, *reason).map(|_| ()).map_err(|e| ApplyError(e.to_string()))
            }

            StakeSlashed { pk, beneficiary, amount } => {
                if self.tokens.lock_amount(pk, LockReason::VerifierStake) != Some(*amount) {
                    return reject("slash amount does not match the active verifier stake");
                }
                self.tokens
                    .slash_to(*pk, LockReason::VerifierStake, *beneficiary)
                    .map(|_| ())
                    .map_err(|e| ApplyError(e.to_string()))
            }

            VerifierRegistered { pk } => {
                let identity = self.identity(pk)?;
                if identity.status != IdentityStatus::Verified {
                    return reject("only verified identities can register as verifiers");
                }
                if self.verifiers.contains_key(pk) {
                    return reject("already a verifier");
                }
                if self.tokens.lock_amount(pk, LockReason::VerifierStake)
                    != Some(self.config.monetary.verifier_stake)
                {
                    return reject("verifier stake not locked");
                }
                if self.trust.weight(pk) < self.config.protocol.verifier_trust_threshold {
                    return reject("trust weight below the verifier threshold");
                }
                let city = identity.city;
                self.verifiers.insert(
                    *pk,
                    VerifierRecord {
                        pk: *pk,
                        city,
                        genesis: false,
                        sponsor_quota: WindowedQuota::default(),
                    },
                );
                Ok(())
            }

            TrustDelegated { from, to } => {
                if from == to {
                    return reject("self-delegation");
                }
                let verified = |pk: &PersonId| {
                    self.identities.get(pk).is_some_and(|r| r.status == IdentityStatus::Verified)
                };
                if !verified(from) || !verified(to) {
                    return reject("delegator and delegate must be verified");
                }
                self.trust.delegate(*from, *to, self.epoch);
                Ok(())
            }

            TrustSuspended { pk, until_epoch } => {
                if !self.verifiers.contains_key(pk) {
                    return reject("suspension targets a non-verifier");
                }
                let until = self.trust.suspended_until(pk).max(*until_epoch);
                self.trust.suspended_until.insert(*pk, until);
                // Void in-flight assignments to the suspended verifier; the
                // affected claimants get a free re-draw.
                for identity in self.identities.values_mut() {
                    if identity.current_assignee == Some(*pk) {
                        identity.current_assignee = None;
                        identity.assignment_voided = true;
                    }
                }
                Ok(())
            }

            TrustCircleDeclared { pk, members } => {
                let identity = self.identity(pk)?;
                if identity.status != IdentityStatus::Verified {
                    return reject("only verified identities declare trust circles");
                }
                if (members.len() as u32) < self.config.protocol.trust_circle_min {
                    return reject("trust circle too small");
                }
                if members.contains(pk) {
                    return reject("trust circle cannot contain its owner");
                }
                let mut unique = members.clone();
                unique.sort();
                unique.dedup();
                if unique.len() != members.len() {
                    return reject("trust circle members must be distinct");
                }
                for m in members {
                    let r = self.identity(m)?;
                    if r.status != IdentityStatus::Verified {
                        return reject("trust circle member not verified");
                    }
                }
                self.identities.get_mut(pk).expect("checked").trust_circle = members.clone();
                Ok(())
            }

            IdentityRecovered { old_pk, new_pk, approvals } => {
                let identity = self.identity(old_pk)?;
                if !matches!(identity.status, IdentityStatus::Verified | IdentityStatus::Expired) {
                    return reject("only verified or expired identities can be recovered");
                }
                if self.pk_in_use(new_pk) {
                    return reject("new pk already in use");
                }
                let circle = identity.trust_circle.clone();
                if circle.is_empty() {
                    return reject("no trust circle declared");
                }
                let mut distinct: Vec<&PersonId> =
                    approvals.iter().filter(|a| circle.contains(a)).collect();
                distinct.sort();
                distinct.dedup();
                if distinct.len() < circle.len() / 2 + 1 {
                    return reject("approvals below the circle majority");
                }
                let was_verified = identity.status == IdentityStatus::Verified;
                let digest = identity.template_digest;
                if was_verified {
                    self.trust.set_source_active(old_pk, false);
                    self.dedup_digests.remove(&digest);
                }
                let mut record = self.identities.remove(old_pk).expect("checked");
                record.pk = *new_pk;
                record.status = IdentityStatus::PendingVerification;
                record.certificates.clear();
                record.current_assignee = None;
                record.rejection_pending = false;
                record.assignment_voided = false;
                record.verified_epoch = None;
                record.expiry_epoch = None;
                record.reassignments_used = 0;
                record.dedup_pending.clear();
                self.identities.insert(*new_pk, record);
                self.retired_pks.insert(*old_pk);
                self.trust.rekey(old_pk, *new_pk);
                self.tokens.rekey(old_pk, *new_pk);
                if let Some(mut v) = self.verifiers.remove(old_pk) {
                    v.pk = *new_pk;
                    self.verifiers.insert(*new_pk, v);
                }
                if self.corrupted.remove(old_pk) {
                    self.corrupted.insert(*new_pk);
                }
                for order in self.genesis_order.values_mut() {
                    for slot in order.iter_mut() {
                        if slot == old_pk {
                            *slot = *new_pk;
                        }
                    }
                }
                for r in self.identities.values_mut() {
                    for m in r.trust_circle.iter_mut() {
                        if m == old_pk {
                            *m = *new_pk;
                        }
                    }
                }
                Ok(())
            }

            RenewalCertified { pk, verifier, new_expiry_epoch } => {
                let identity = self.identity(pk)?;
                if identity.status != IdentityStatus::Verified {
                    return reject("renewal of a non-verified identity");
                }
                if identity.expiry_epoch.is_some_and(|x| x < self.epoch) {
                    return reject("identity already past expiry");
                }
                match self.renewal_assignee(identity) {
                    Some(v) if v == *verifier => {}
                    _ => return reject("renewal verifier contradicts the beacon"),
                }
                if *new_expiry_epoch != self.epoch + self.config.protocol.identity_ttl_epochs {
                    return reject("renewal expiry does not match the ttl");
                }
                let identity = self.identities.get_mut(pk).expect("checked");
                identity.assignment_seq += 1;
                identity.expiry_epoch = Some(*new_expiry_epoch);
                Ok(())
            }

            RenewalRejected { pk, verifier } => {
                let identity = self.identity(pk)?;
                if identity.status != IdentityStatus::Verified {
                    return reject("renewal of a non-verified identity");
                }
                match self.renewal_assignee(identity) {
                    Some(v) if v == *verifier => {}
                    _ => return reject("renewal verifier contradicts the beacon"),
                }
                self.identities.get_mut(pk).expect("checked").assignment_seq += 1;
                Ok(())
            }

            IdentityExpired { pk } => {
                let identity = self.identity(pk)?;
                if identity.status != IdentityStatus::Verified {
                    return reject("only verified identities expire");
                }
                if identity.expiry_epoch.is_none_or(|x| x > self.epoch) {
                    return reject("identity has not reached expiry");
                }
                let digest = identity.template_digest;
                self.identities.get_mut(pk).expect("checked").status = IdentityStatus::Expired;
                self.dedup_digests.remove(&digest);
                self.trust.set_source_active(pk, false);
                Ok(())
            }

            IdentityRevoked { pk, reason: _ } => {
                let identity = self.identity(pk)?;
                if identity.status != IdentityStatus::Verified {
                    return reject("only verified identities can be revoked");
                }
                let digest = identity.template_digest;
                self.identities.get_mut(pk).expect("checked").status = IdentityStatus::Revoked;
                self.dedup_digests.remove(&digest);
                self.trust.set_source_active(pk, false);
                Ok(())
            }

            AJudgeCalled { call_id, caller, target, deadline_epoch } => {
                if *call_id != self.audit.next_call_id {
                    return reject("audit call id out of sequence");
                }
                let t = self.identity(target)?;
                if t.status != IdentityStatus::Verified {
                    return reject("audit target not verified");
                }
                if *deadline_epoch != self.epoch + self.config.protocol.ajudge_deadline_epochs {
                    return reject("audit deadline mismatch");
                }
                if *caller != PersonId::SYSTEM {
                    let authorized = self.is_eligible_verifier(caller, self.epoch)
                        || self.governance.is_layer3_rep(caller);
                    if !authorized {
                        return reject("caller not authorized for audits");
                    }
                    let window = self.config.protocol.quota_window_epochs;
                    let used =
                        self.audit.quotas.get(caller).map_or(0, |q| q.used_in(self.epoch, window));
                    if used >= self.config.protocol.recheck_quota {
                        return reject("re-check quota exhausted");
                    }
                    let epoch = self.epoch;
                    self.audit.quotas.entry(*caller).or_default().record_use(epoch, window);
                }
                self.audit.calls.insert(
                    *call_id,
                    AuditCall {
                        id: *call_id,
                        caller: *caller,
                        target: *target,
                        called_epoch: self.epoch,
                        deadline_epoch: *deadline_epoch,
                        outcome: None,
                    },
                );
                self.audit.next_call_id += 1;
                Ok(())
            }

            AJudgeResolved { call_id, target, votes_genuine, votes_fake, passed } => {
                let call = self
                    .audit
                    .calls
                    .get(call_id)
                    .ok_or_else(|| ApplyError("unknown audit call".into()))?;
                if call.outcome.is_some() {
                    return reject("audit call already settled");
                }
                if call.target != *target {
                    return reject("audit target mismatch");
                }
                if self.epoch > call.deadline_epoch {
                    return reject("adjudication after the deadline");
                }
                let t = self.identity(target)?;
                if t.status != IdentityStatus::Verified {
                    return reject("audit target not verified");
                }
                let panel = self.eligible_verifiers(t.city, self.epoch).len() as u64;
                if panel == 0 || votes_genuine + votes_fake != panel {
                    return reject("votes must cover the eligible city verifiers");
                }
                if *passed != (votes_genuine > votes_fake) {
                    return reject("pass flag contradicts the majority");
                }
                let outcome =
                    if *passed { AuditOutcome::PassedGenuine } else { AuditOutcome::FailedFake };
                self.audit.calls.get_mut(call_id).expect("checked").outcome = Some(outcome);
                Ok(())
            }

            AJudgeMissed { call_id, target } => {
                let call = self
                    .audit
                    .calls
                    .get(call_id)
                    .ok_or_else(|| ApplyError("unknown audit call".into()))?;
                if call.outcome.is_some() {
                    return reject("audit call already settled");
                }
                if call.target != *target {
                    return reject("audit target mismatch");
                }
                if self.epoch <= call.deadline_epoch {
                    return reject("deadline has not passed");
                }
                self.audit.calls.get_mut(call_id).expect("checked").outcome =
                    Some(AuditOutcome::MissedDeadline);
                Ok(())
            }

            CommunitiesFormed { communities } => {
                let expected = self.compute_community_partition();
                if expected.is_empty() {
                    return reject("too few verified identities for communities");
                }
                if *communities != expected {
                    return reject("community partition contradicts the deterministic rule");
                }
                self.governance.communities = communities
                    .iter()
                    .map(|s| {
                        (
                            s.id,
                            Community {
                                id: s.id,
                                city: s.city,
                                members: s.members.clone(),
                                representative: None,
                                election_support: 0,
                            },
                        )
                    })
                    .collect();
                self.governance.next_community_id += communities.len() as u64;
                self.governance.layer2.clear();
                self.governance.layer3.clear();
                Ok(())
            }

            RepresentativeElected { community_id, representative, support } => {
                let community = self
                    .governance
                    .communities
                    .get(community_id)
                    .ok_or_else(|| ApplyError("unknown community".into()))?;
                let votes = crate::governance::community_votes(&community.members, |m| {
                    self.trust.delegations.get(m).map(|d| d.to)
                });
                match plurality_winner(&votes) {
                    Some((winner, count)) if winner == *representative && count == *support => {}
                    _ => return reject("election result contradicts the delegations"),
                }
                let community = self.governance.communities.get_mut(community_id).expect("checked");
                community.representative = Some(*representative);
                community.election_support = *support;
                Ok(())
            }

            RepresentativeInvalidated { community_id, representative, support } => {
                let community = self
                    .governance
                    .communities
                    .get(community_id)
                    .ok_or_else(|| ApplyError("unknown community".into()))?;
                if community.representative != Some(*representative) {
                    return reject("not the sitting representative");
                }
                let votes = crate::governance::community_votes(&community.members, |m| {
                    self.trust.delegations.get(m).map(|d| d.to)
                });
                let current = votes.get(representative).copied().unwrap_or(0);
                if current != *support {
                    return reject("support count mismatch");
                }
                if representative_valid(
                    community.election_support,
                    current,
                    self.config.protocol.rep_retention,
                ) {
                    return reject("representative still holds enough support");
                }
                let community = self.governance.communities.get_mut(community_id).expect("checked");
                community.representative = None;
                community.election_support = 0;
                Ok(())
            }

            LayersFormed { layer2, layer3 } => {
                let (expected2, expected3) = self.compute_layers();
                if *layer2 != expected2 || *layer3 != expected3 {
                    return reject("layer structure contradicts the deterministic rule");
                }
                self.governance.layer2 = layer2.clone();
                self.governance.layer3 = layer3.clone();
                Ok(())
            }

            ProposalOpened { proposal_id, importance, target } => {
                if *proposal_id != self.governance.next_proposal_id {
                    return reject("proposal id out of sequence");
                }
                if !self.governance.layers_populated() {
                    return reject("layers are not populated");
                }
                if let Some((param, value)) = target {
                    validate_param_value(*param, *value)?;
                }
                self.governance.proposals.insert(
                    *proposal_id,
                    Proposal {
                        id: *proposal_id,
                        importance: *importance,
                        target: *target,
                        status: ProposalStatus::Open,
                    },
                );
                self.governance.next_proposal_id += 1;
                Ok(())
            }

            ProposalTallied { proposal_id, layers, passed } => {
                let proposal = self
                    .governance
                    .proposals
                    .get(proposal_id)
                    .ok_or_else(|| ApplyError("unknown proposal".into()))?;
                if proposal.status != ProposalStatus::Open {
                    return reject("proposal is not open");
                }
                if layers.len() != 3 {
                    return reject("a tally covers exactly three layers");
                }
                let sizes = [
                    self.governance.layer1_reps().len() as u64,
                    self.governance.layer2.len() as u64,
                    self.governance.layer3.len() as u64,
                ];
                for (tally_row, size) in layers.iter().zip(sizes) {
                    if tally_row.size() != size {
                        return reject("ballot counts do not cover the layer");
                    }
                }
                let thresholds = self.config.protocol.thresholds.for_class(proposal.importance);
                let computed =
                    tally(layers, thresholds).map_err(|e| ApplyError(e.to_string()))?;
                if computed != *passed {
                    return reject("tally result contradicts the thresholds");
                }
                self.governance.proposals.get_mut(proposal_id).expect("checked").status =
                    if *passed { ProposalStatus::Passed } else { ProposalStatus::Failed };
                Ok(())
            }

            ParameterChanged { proposal_id, param, value, effective_epoch } => {
                let proposal = self
                    .governance
                    .proposals
                    .get(proposal_id)
                    .ok_or_else(|| ApplyError("unknown proposal".into()))?;
                if proposal.status != ProposalStatus::Passed {
                    return reject("parameter change without a passed proposal");
                }
                if proposal.target != Some((*param, *value)) {
                    return reject("parameter change contradicts the proposal target");
                }
                if *effective_epoch != self.epoch + 1 {
                    return reject("parameter changes take effect at the next epoch");
                }
                validate_param_value(*param, *value)?;
                self.pending_param_changes.push((*effective_epoch, *param, *value));
                Ok(())
            }
        }
    }

    fn set_param(&mut self, param: ParamTarget, value: u64) {
        match param {
            ParamTarget::CertsRequired => self.config.protocol.certs_required = value as u32,
            ParamTarget::VerifierTrustThreshold => {
                self.config.protocol.verifier_trust_threshold = value
            }
            ParamTarget::BaseStake => self.config.monetary.base_stake = value,
            ParamTarget::RecheckQuota => self.config.protocol.recheck_quota = value as u32,
            ParamTarget::IdentityTtlEpochs => self.config.protocol.identity_ttl_epochs = value,
        }
    }
}

fn validate_param_value(param: ParamTarget, value: u64) -> Result<(), ApplyError> {
    let ok = match param {
        ParamTarget::CertsRequired => (1..=64).contains(&value),
        ParamTarget::VerifierTrustThreshold => true,
        ParamTarget::BaseStake => value >= 1,
        ParamTarget::RecheckQuota => value <= u32::MAX as u64,
        ParamTarget::IdentityTtlEpochs => value >= 1,
    };
    if ok {
        Ok(())
    } else {
        reject(format!("invalid value {value} for parameter"))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StatusCounts {
    pub verified: u64,
    pub pending: u64,
    pub revoked: u64,
    pub expired: u64,
}
