//! Identity lifecycle: claims through entry gates, beacon-driven sequential
//! verifier assignment, certificate collection, reassignment, trust
//! circles, recovery, and renewal.

use crate::biometric::{match_template, BiometricTemplate};
use crate::config::CityId;
use crate::engine::Engine;
use crate::hashing::{sha256_concat, Digest};
use crate::ledger::EventBody;
use crate::tokens::LockReason;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;
use thiserror::Error;

/// Opaque 32-byte public-key identifier; no real signature scheme.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PersonId(pub [u8; 32]);

impl PersonId {
    /// Reserved account for system-initiated actions (random checks).
    pub const SYSTEM: PersonId = PersonId([0u8; 32]);

    pub fn to_hex(self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self, hex::FromHexError> {
        let bytes = hex::decode(s)?;
        let arr: [u8; 32] =
            bytes.try_into().map_err(|_| hex::FromHexError::InvalidStringLength)?;
        Ok(PersonId(arr))
    }
}

impl fmt::Debug for PersonId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PersonId({}..)", &self.to_hex()[..8])
    }
}

impl fmt::Display for PersonId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for PersonId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for PersonId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        PersonId::from_hex(&s).map_err(|e| D::Error::custom(format!("bad person id: {e}")))
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub enum IdentityStatus {
    /// Claimed, awaiting uniqueness adjudication.
    PendingEntry,
    /// Collecting certificates.
    PendingVerification,
    Verified,
    Revoked,
    Expired,
}

/// How a claim satisfied the entry barrier.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub enum EntryGate {
    Invitation { inviter: PersonId },
    Stake { amount: u64 },
    VerifierSponsor { sponsor: PersonId },
}

/// Caller-facing gate selection; the stake amount is computed by the
/// engine from the city's pending stake-gated claims.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GateChoice {
    Invitation { inviter: PersonId },
    Stake,
    VerifierSponsor { sponsor: PersonId },
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub enum AssignmentCause {
    /// First assignment of a claim, after an accepted certificate, or
    /// after recovery.
    Initial,
    /// Requested after a rejection; counts against the cap.
    Reassignment,
    /// Replacement for an assignment voided by a suspension; free.
    Voided,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub enum TerminationReason {
    DuplicateConfirmed,
    ReassignmentsExhausted,
    Abandoned,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub enum RevocationReason {
    AuditFailed,
    AuditMissed,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Certificate {
    pub verifier: PersonId,
    pub epoch: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct IdentityRecord {
    pub pk: PersonId,
    pub template_digest: Digest,
    pub city: CityId,
    pub status: IdentityStatus,
    pub certificates: Vec<Certificate>,
    /// Certificates needed for this claim; frozen at claim time so
    /// in-flight verifications survive parameter changes.
    pub certs_required: u32,
    pub assignment_seq: u64,
    pub current_assignee: Option<PersonId>,
    pub entry_gate: Option<EntryGate>,
    pub trust_circle: Vec<PersonId>,
    pub verified_epoch: Option<u64>,
    pub expiry_epoch: Option<u64>,
    pub reassignments_used: u32,
    pub rejection_pending: bool,
    /// Last assignment was voided by a suspension; next one is free.
    pub assignment_voided: bool,
    pub invitations_remaining: u32,
    /// Uniqueness collisions still awaiting adjudication.
    pub dedup_pending: Vec<Digest>,
    pub adversary: bool,
}

impl IdentityRecord {
    pub fn is_active(&self) -> bool {
        matches!(
            self.status,
            IdentityStatus::PendingEntry | IdentityStatus::PendingVerification
        )
    }

    pub fn certified_by(&self, verifier: &PersonId) -> bool {
        self.certificates.iter().any(|c| c.verifier == *verifier)
    }
}

/// Windowed usage counter: quotas reset at window boundaries.
#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
pub struct WindowedQuota {
    pub window: u64,
    pub used: u32,
}

impl WindowedQuota {
    pub fn used_in(&self, epoch: u64, window_epochs: u64) -> u32 {
        if epoch / window_epochs == self.window {
            self.used
        } else {
            0
        }
    }

    pub fn record_use(&mut self, epoch: u64, window_epochs: u64) {
        let w = epoch / window_epochs;
        if w != self.window {
            self.window = w;
            self.used = 0;
        }
        self.used += 1;
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct VerifierRecord {
    pub pk: PersonId,
    pub city: CityId,
    /// Trusted-setup verifier: exempt from the trust-weight threshold.
    pub genesis: bool,
    pub sponsor_quota: WindowedQuota,
}

/// Deterministic hash-chain randomness beacon.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct RandomnessBeacon {
    pub round: u64,
    pub value: Digest,
}

impl RandomnessBeacon {
    /// Round 0 value is the SHA-256 of the scenario seed as 8 big-endian
    /// bytes.
    pub fn genesis(seed: u64) -> Self {
        RandomnessBeacon { round: 0, value: crate::hashing::sha256(&seed.to_be_bytes()) }
    }

    pub fn next(&mut self) {
        self.round += 1;
        self.value = sha256_concat(&[&self.value.0, &self.round.to_be_bytes()]);
    }
}

/// Index into the sorted eligible pool for assignment step `seq`.
pub fn assignment_index(beacon: &Digest, pk: &PersonId, seq: u64, pool_len: usize) -> usize {
    let digest = sha256_concat(&[&beacon.0, &pk.0, &seq.to_be_bytes()]);
    (digest.prefix_u64() % pool_len as u64) as usize
}

#[derive(Debug, Error, PartialEq)]
pub enum RegistryError {
    #[error("public key already in use")]
    DuplicatePk,
    #[error("entry gate unsatisfied: {0}")]
    GateUnsatisfied(String),
    #[error("no eligible verifiers in city")]
    NoEligibleVerifiersInCity,
    #[error("identity is not pending verification")]
    NotPending,
    #[error("certificate not from the assigned verifier")]
    WrongVerifier,
    #[error("reassignment limit reached")]
    ReassignmentLimitReached,
    #[error("no rejection pending")]
    NoRejectionPending,
    #[error("trust circle needs at least {0} members")]
    TooFewMembers(u32),
    #[error("trust circle member not verified")]
    UnverifiedMember,
    #[error("insufficient recovery approvals")]
    InsufficientApprovals,
    #[error("new public key already in use")]
    PkInUse,
    #[error("identity already expired")]
    AlreadyExpired,
    #[error("unknown identity")]
    UnknownIdentity,
    #[error("event rejected: {0}")]
    Internal(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ClaimOutcome {
    /// The claim collided with indexed templates and awaits adjudication.
    pub flagged: bool,
    pub assigned: Option<PersonId>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CertOutcome {
    pub accepted: bool,
    pub verified: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RenewOutcome {
    pub verifier: PersonId,
    pub renewed: bool,
    pub new_expiry: Option<u64>,
}

impl Engine {
    /// Open an identity claim through one of the entry gates. Runs the
    /// uniqueness check; unflagged claims get their first verifier
    /// immediately, flagged ones await adjudication.
    pub fn claim_identity(
        &mut self,
        pk: PersonId,
        template: BiometricTemplate,
        city: CityId,
        gate: GateChoice,
        adversary: bool,
    ) -> Result<ClaimOutcome, RegistryError> {
        if self.state.pk_in_use(&pk) {
            return Err(RegistryError::DuplicatePk);
        }
        let epoch = self.state.epoch;
        let entry_gate = match gate {
            GateChoice::Invitation { inviter } => {
                let record = self
                    .state
                    .identities
                    .get(&inviter)
                    .ok_or_else(|| RegistryError::GateUnsatisfied("unknown inviter".into()))?;
                if record.status != IdentityStatus::Verified {
                    return Err(RegistryError::GateUnsatisfied("inviter not verified".into()));
                }
                if record.invitations_remaining == 0 {
                    return Err(RegistryError::GateUnsatisfied("inviter has no invitations".into()));
                }
                EntryGate::Invitation { inviter }
            }
            GateChoice::Stake => {
                let amount = self.state.required_stake(city);
                if self.state.tokens.balance(&pk) < amount {
                    return Err(RegistryError::GateUnsatisfied(format!(
                        "stake of {amount} exceeds balance"
                    )));
                }
                EntryGate::Stake { amount }
            }
            GateChoice::VerifierSponsor { sponsor } => {
                if !self.state.is_eligible_verifier(&sponsor, epoch) {
                    return Err(RegistryError::GateUnsatisfied("sponsor not eligible".into()));
                }
                let v = &self.state.verifiers[&sponsor];
                if v.city != city {
                    return Err(RegistryError::GateUnsatisfied("sponsor serves another city".into()));
                }
                let used = v.sponsor_quota.used_in(epoch, self.state.config.protocol.sponsor_window_epochs);
                if used >= self.state.config.protocol.sponsor_quota {
                    return Err(RegistryError::GateUnsatisfied("sponsor quota exhausted".into()));
                }
                EntryGate::VerifierSponsor { sponsor }
            }
        };
        if self.state.eligible_verifiers(city, epoch).is_empty() {
            return Err(RegistryError::NoEligibleVerifiersInCity);
        }

        let flags = self
            .bio
            .index
            .check(&template, &self.bio.policy)
            .map_err(|e| RegistryError::Internal(e.to_string()))?;
        let dedup_flags: Vec<Digest> = flags.iter().map(|f| f.existing_digest).collect();
        let template_digest = template.digest();

        if let EntryGate::Stake { amount } = entry_gate {
            self.commit(EventBody::StakeLocked { pk, amount, reason: LockReason::EntryStake })?;
        }
        self.commit(EventBody::IdentityClaimed {
            pk,
            city,
            template_digest,
            entry_gate,
            dedup_flags: dedup_flags.clone(),
            adversary,
        })?;
        self.bio.enrolled.insert(pk, template);

        let flagged = !dedup_flags.is_empty();
        let assigned = if flagged {
            None
        } else {
            Some(self.assign_verifier(pk, AssignmentCause::Initial)?)
        };
        Ok(ClaimOutcome { flagged, assigned })
    }

    /// Draw the next verifier for a pending identity from the beacon.
    pub fn assign_verifier(
        &mut self,
        pk: PersonId,
        cause: AssignmentCause,
    ) -> Result<PersonId, RegistryError> {
        let identity = self.state.identities.get(&pk).ok_or(RegistryError::UnknownIdentity)?;
        if identity.status != IdentityStatus::PendingVerification
            || identity.current_assignee.is_some()
        {
            return Err(RegistryError::NotPending);
        }
        let seq = identity.assignment_seq;
        let verifier = self
            .state
            .expected_assignee(identity)
            .ok_or(RegistryError::NoEligibleVerifiersInCity)?;
        self.commit(EventBody::VerifierAssigned { pk, verifier, seq, cause })?;
        Ok(verifier)
    }

    /// The assigned verifier examines a live reading and issues or refuses
    /// a certificate. Corrupted verifiers accept anything.
    pub fn submit_certificate(
        &mut self,
        verifier: PersonId,
        user: PersonId,
        presented: &BiometricTemplate,
    ) -> Result<CertOutcome, RegistryError> {
        let identity = self.state.identities.get(&user).ok_or(RegistryError::UnknownIdentity)?;
        if identity.status != IdentityStatus::PendingVerification {
            return Err(RegistryError::NotPending);
        }
        if identity.current_assignee != Some(verifier) {
            return Err(RegistryError::WrongVerifier);
        }
        let accepted = if self.state.is_corrupted(&verifier) {
            true
        } else {
            let enrolled = self
                .bio
                .enrolled
                .get(&user)
                .ok_or_else(|| RegistryError::Internal("missing enrolled template".into()))?;
            match_template(presented, enrolled, &self.bio.policy)
                .map_err(|e| RegistryError::Internal(e.to_string()))?
        };

        if !accepted {
            self.commit(EventBody::CertificateRejected { pk: user, verifier })?;
            return Ok(CertOutcome { accepted: false, verified: false });
        }
        self.commit(EventBody::CertificateIssued { pk: user, verifier })?;
        let identity = &self.state.identities[&user];
        if (identity.certificates.len() as u32) < identity.certs_required {
            return Ok(CertOutcome { accepted: true, verified: false });
        }

        // Threshold reached: promote, settle the gate, mint.
        let expiry = self.state.epoch + self.state.config.protocol.identity_ttl_epochs;
        let gate = identity.entry_gate;
        let verifier_pks: Vec<PersonId> =
            identity.certificates.iter().map(|c| c.verifier).collect();
        self.commit(EventBody::IdentityVerified { pk: user, expiry_epoch: expiry })?;
        if let Some(EntryGate::Stake { .. }) = gate {
            self.commit(EventBody::StakeReturned { pk: user, reason: LockReason::EntryStake })?;
        }
        let credits =
            crate::tokens::mint_credits(self.state.config.monetary.x, user, &verifier_pks);
        self.commit(EventBody::TokensMinted { pk: user, credits })?;
        if let Some(t) = self.bio.enrolled.get(&user) {
            self.bio.index.insert(t.clone());
        }
        Ok(CertOutcome { accepted: true, verified: true })
    }

    /// After a rejection the claimant may ask for a fresh draw, up to the
    /// configured cap.
    pub fn request_reassignment(&mut self, pk: PersonId) -> Result<PersonId, RegistryError> {
        let identity = self.state.identities.get(&pk).ok_or(RegistryError::UnknownIdentity)?;
        if identity.status != IdentityStatus::PendingVerification || !identity.rejection_pending {
            return Err(RegistryError::NoRejectionPending);
        }
        if identity.reassignments_used >= self.state.config.protocol.max_reassignments {
            return Err(RegistryError::ReassignmentLimitReached);
        }
        self.assign_verifier(pk, AssignmentCause::Reassignment)
    }

    /// Terminal failure of a claim: forfeits any entry stake.
    pub fn terminate_claim(
        &mut self,
        pk: PersonId,
        reason: TerminationReason,
    ) -> Result<(), RegistryError> {
        let identity = self.state.identities.get(&pk).ok_or(RegistryError::UnknownIdentity)?;
        if !identity.is_active() {
            return Err(RegistryError::NotPending);
        }
        if let Some(EntryGate::Stake { .. }) = identity.entry_gate {
            self.commit(EventBody::StakeForfeited { pk, reason: LockReason::EntryStake })?;
        }
        self.commit(EventBody::ClaimTerminated { pk, reason })?;
        self.bio.enrolled.remove(&pk);
        Ok(())
    }

    pub fn declare_trust_circle(
        &mut self,
        pk: PersonId,
        members: Vec<PersonId>,
    ) -> Result<(), RegistryError> {
        let min = self.state.config.protocol.trust_circle_min;
        let identity = self.state.identities.get(&pk).ok_or(RegistryError::UnknownIdentity)?;
        if identity.status != IdentityStatus::Verified {
            return Err(RegistryError::NotPending);
        }
        let mut unique: Vec<PersonId> = members.clone();
        unique.sort();
        unique.dedup();
        if unique.len() != members.len() || (members.len() as u32) < min {
            return Err(RegistryError::TooFewMembers(min));
        }
        if members.contains(&pk) {
            return Err(RegistryError::UnverifiedMember);
        }
        for m in &members {
            match self.state.identities.get(m) {
                Some(r) if r.status == IdentityStatus::Verified => {}
                _ => return Err(RegistryError::UnverifiedMember),
            }
        }
        self.commit(EventBody::TrustCircleDeclared { pk, members })?;
        Ok(())
    }

    /// Re-key a stolen or lost identity with trust-circle approval. The
    /// identity re-enters verification under the new key.
    pub fn recover_identity(
        &mut self,
        old_pk: PersonId,
        new_pk: PersonId,
        approvals: Vec<PersonId>,
    ) -> Result<(), RegistryError> {
        let identity = self.state.identities.get(&old_pk).ok_or(RegistryError::UnknownIdentity)?;
        if !matches!(identity.status, IdentityStatus::Verified | IdentityStatus::Expired) {
            return Err(RegistryError::NotPending);
        }
        if self.state.pk_in_use(&new_pk) {
            return Err(RegistryError::PkInUse);
        }
        let circle = identity.trust_circle.clone();
        if circle.is_empty() {
            return Err(RegistryError::InsufficientApprovals);
        }
        let mut distinct: Vec<&PersonId> =
            approvals.iter().filter(|a| circle.contains(a)).collect();
        distinct.sort();
        distinct.dedup();
        // Strict majority of the circle: ceil((n+1)/2) = n/2 + 1.
        let needed = circle.len() / 2 + 1;
        if distinct.len() < needed {
            return Err(RegistryError::InsufficientApprovals);
        }
        self.commit(EventBody::IdentityRecovered { old_pk, new_pk, approvals })?;
        if let Some(t) = self.bio.enrolled.remove(&old_pk) {
            self.bio.index.remove(&t.digest());
            self.bio.enrolled.insert(new_pk, t);
        }
        Ok(())
    }

    /// Single-verifier expiry extension for a verified identity.
    pub fn renew_identity(
        &mut self,
        pk: PersonId,
        presented: &BiometricTemplate,
    ) -> Result<RenewOutcome, RegistryError> {
        let epoch = self.state.epoch;
        let identity = self.state.identities.get(&pk).ok_or(RegistryError::UnknownIdentity)?;
        if identity.status == IdentityStatus::Expired
            || (identity.status == IdentityStatus::Verified
                && identity.expiry_epoch.is_some_and(|x| x < epoch))
        {
            return Err(RegistryError::AlreadyExpired);
        }
        if identity.status != IdentityStatus::Verified {
            return Err(RegistryError::NotPending);
        }
        let verifier = self
            .state
            .renewal_assignee(identity)
            .ok_or(RegistryError::NoEligibleVerifiersInCity)?;
        let accepted = if self.state.is_corrupted(&verifier) {
            true
        } else {
            let enrolled = self
                .bio
                .enrolled
                .get(&pk)
                .ok_or_else(|| RegistryError::Internal("missing enrolled template".into()))?;
            match_template(presented, enrolled, &self.bio.policy)
                .map_err(|e| RegistryError::Internal(e.to_string()))?
        };
        if accepted {
            let new_expiry = epoch + self.state.config.protocol.identity_ttl_epochs;
            self.commit(EventBody::RenewalCertified { pk, verifier, new_expiry_epoch: new_expiry })?;
            Ok(RenewOutcome { verifier, renewed: true, new_expiry: Some(new_expiry) })
        } else {
            self.commit(EventBody::RenewalRejected { pk, verifier })?;
            Ok(RenewOutcome { verifier, renewed: false, new_expiry: None })
        }
    }
}
