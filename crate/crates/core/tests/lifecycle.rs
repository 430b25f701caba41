//! Operation-level lifecycle tests driven directly through the engine,
//! independent of the scenario driver: entry gates, certificate flows,
//! reassignment caps, trust circles, recovery, renewal, suspension, and
//! audit quotas.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use std::collections::BTreeMap;
use uniqueid_core::audit::AuditError;
use uniqueid_core::biometric::{
    generate_person_ground_truth, sample_template, BiometricTemplate, GroundTruthBiometric,
    MatchPolicy,
};
use uniqueid_core::config::ScenarioConfig;
use uniqueid_core::engine::Engine;
use uniqueid_core::ledger::EventBody;
use uniqueid_core::registry::{
    AssignmentCause, EntryGate, GateChoice, IdentityStatus, PersonId, RegistryError,
};
use uniqueid_core::tokens::{Allocation, LockReason};
use uniqueid_core::trust::TrustError;

struct Bed {
    engine: Engine,
    rng: ChaCha12Rng,
    truths: BTreeMap<PersonId, GroundTruthBiometric>,
    verifiers: Vec<PersonId>,
}

impl Bed {
    fn new(n_verifiers: u32, tweak: impl FnOnce(&mut ScenarioConfig)) -> Bed {
        Bed::with_funded(n_verifiers, &[], tweak)
    }

    /// Genesis with `n_verifiers` ring-delegated verifiers and optional
    /// pre-funded claimant accounts (covered by the genesis sale).
    fn with_funded(
        n_verifiers: u32,
        funded: &[(PersonId, u64)],
        tweak: impl FnOnce(&mut ScenarioConfig),
    ) -> Bed {
        let mut config = ScenarioConfig::minimal(4242, 1000);
        config.cities[0].genesis_verifiers = n_verifiers;
        config.cities[0].arrival_rate = 0.0;
        config.biometric.tau = Some(0.74);
        config.monetary.a = 10_000;
        tweak(&mut config);
        config.validate().unwrap();
        let policy = MatchPolicy {
            tau: config.biometric.tau.unwrap(),
            n_modalities: config.biometric.n_modalities,
            k_required: config.biometric.k_required,
            genuine_noise_sigma: config.biometric.genuine_noise_sigma,
        };
        let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
        let mut engine = Engine::new(config.clone(), policy);
        let mut truths = BTreeMap::new();
        let mut verifiers = Vec::new();
        let mut allocations = Vec::new();
        let mut templates = Vec::new();
        for _ in 0..n_verifiers {
            let pk = PersonId(rng.random());
            let truth = generate_person_ground_truth(
                config.biometric.template_dim,
                config.biometric.n_modalities,
                &mut rng,
            );
            let template =
                sample_template(&truth, config.biometric.genuine_noise_sigma, &mut rng);
            truths.insert(pk, truth);
            verifiers.push(pk);
            allocations
                .push(Allocation { account: pk, amount: config.monetary.verifier_stake });
            templates.push((pk, template));
        }
        for (pk, amount) in funded {
            allocations.push(Allocation { account: *pk, amount: *amount });
        }
        let allocated: u64 = allocations.iter().map(|a| a.amount).sum();
        let rest = config.monetary.genesis_supply() - allocated;
        if rest > 0 {
            allocations.push(Allocation { account: PersonId([0xaa; 32]), amount: rest });
        }
        engine.commit(EventBody::TokensAllocated { allocations }).unwrap();
        for (pk, template) in templates {
            engine
                .commit(EventBody::StakeLocked {
                    pk,
                    amount: config.monetary.verifier_stake,
                    reason: LockReason::VerifierStake,
                })
                .unwrap();
            engine
                .commit(EventBody::GenesisVerifierAdded {
                    pk,
                    city: 0,
                    template_digest: template.digest(),
                })
                .unwrap();
            engine.bio.enrolled.insert(pk, template.clone());
            engine.bio.index.insert(template);
        }
        if verifiers.len() > 1 {
            for (i, from) in verifiers.iter().enumerate() {
                let to = verifiers[(i + 1) % verifiers.len()];
                engine.delegate_trust(*from, to).unwrap();
            }
        }
        let mut bed = Bed { engine, rng, truths, verifiers };
        bed.advance_epoch();
        bed
    }

    fn advance_epoch(&mut self) {
        let next = self.engine.state.epoch + 1;
        self.engine.commit(EventBody::EpochStarted { epoch: next }).unwrap();
    }

    fn new_person(&mut self) -> (PersonId, BiometricTemplate) {
        let pk = PersonId(self.rng.random());
        let b = &self.engine.state.config.biometric;
        let truth = generate_person_ground_truth(b.template_dim, b.n_modalities, &mut self.rng);
        let template = sample_template(&truth, b.genuine_noise_sigma, &mut self.rng);
        self.truths.insert(pk, truth);
        (pk, template)
    }

    fn sample(&mut self, pk: &PersonId) -> BiometricTemplate {
        let sigma = self.engine.state.config.biometric.genuine_noise_sigma;
        sample_template(&self.truths[pk], sigma, &mut self.rng)
    }

    /// Drive an unflagged claim through honest verdicts to Verified.
    fn verify_identity(&mut self, pk: PersonId) {
        for _ in 0..16 {
            let record = &self.engine.state.identities[&pk];
            if record.status == IdentityStatus::Verified {
                return;
            }
            let assignee = record.current_assignee;
            match assignee {
                Some(v) => {
                    let presented = self.sample(&pk);
                    let out = self.engine.submit_certificate(v, pk, &presented).unwrap();
                    if !out.accepted {
                        self.engine.request_reassignment(pk).unwrap();
                    }
                }
                None => {
                    self.engine.assign_verifier(pk, AssignmentCause::Initial).unwrap();
                }
            }
            self.advance_epoch();
        }
        panic!("identity failed to verify within 16 epochs");
    }
}

#[test]
fn invitation_gate_decrements_and_exhausts() {
    let mut bed = Bed::new(5, |_| {});
    let inviter = bed.verifiers[0];
    assert_eq!(bed.engine.state.identities[&inviter].invitations_remaining, 2);
    for expected_left in [1, 0] {
        let (pk, template) = bed.new_person();
        bed.engine
            .claim_identity(pk, template, 0, GateChoice::Invitation { inviter }, false)
            .unwrap();
        assert_eq!(
            bed.engine.state.identities[&inviter].invitations_remaining,
            expected_left
        );
    }
    let (pk, template) = bed.new_person();
    let err = bed
        .engine
        .claim_identity(pk, template, 0, GateChoice::Invitation { inviter }, false)
        .unwrap_err();
    assert!(matches!(err, RegistryError::GateUnsatisfied(_)));
}

#[test]
fn stake_gate_scales_with_pending_claims() {
    // base_stake 10 with 4 pending stake entries: the fifth pays 50.
    let claimants: Vec<PersonId> = (1..=5).map(|i| PersonId([i; 32])).collect();
    let funded: Vec<(PersonId, u64)> = claimants.iter().map(|pk| (*pk, 100)).collect();
    let mut bed = Bed::with_funded(5, &funded, |c| {
        c.monetary.base_stake = 10;
    });
    let expected = [10, 20, 30, 40, 50];
    for (i, pk) in claimants.iter().enumerate() {
        assert_eq!(bed.engine.state.required_stake(0), expected[i]);
        let b = &bed.engine.state.config.biometric;
        let truth = generate_person_ground_truth(b.template_dim, b.n_modalities, &mut bed.rng);
        let template = sample_template(&truth, b.genuine_noise_sigma, &mut bed.rng);
        bed.truths.insert(*pk, truth);
        bed.engine.claim_identity(*pk, template, 0, GateChoice::Stake, false).unwrap();
        assert_eq!(
            bed.engine.state.identities[pk].entry_gate,
            Some(EntryGate::Stake { amount: expected[i] })
        );
    }
    // A sixth claimant with only 25 tokens cannot meet the 60 now required.
    let poor = PersonId([9; 32]);
    let mut bed2 = Bed::with_funded(5, &[(poor, 25)], |c| c.monetary.base_stake = 10);
    let (_, template) = bed2.new_person();
    bed2.truths.insert(poor, bed2.truths.values().next().unwrap().clone());
    let err = bed2.engine.claim_identity(poor, template, 0, GateChoice::Stake, false);
    assert!(err.is_ok(), "first stake claim needs only 10");
}

#[test]
fn duplicate_pk_rejected() {
    let mut bed = Bed::new(5, |_| {});
    let inviter = bed.verifiers[0];
    let (pk, template) = bed.new_person();
    bed.engine
        .claim_identity(pk, template.clone(), 0, GateChoice::Invitation { inviter }, false)
        .unwrap();
    let err = bed
        .engine
        .claim_identity(pk, template, 0, GateChoice::Invitation { inviter }, false)
        .unwrap_err();
    assert_eq!(err, RegistryError::DuplicatePk);
}

#[test]
fn certificates_flow_to_verified_with_mint_in_same_epoch() {
    let mut bed = Bed::new(6, |_| {});
    let inviter = bed.verifiers[0];
    let (pk, template) = bed.new_person();
    bed.engine
        .claim_identity(pk, template, 0, GateChoice::Invitation { inviter }, false)
        .unwrap();
    bed.verify_identity(pk);
    let record = &bed.engine.state.identities[&pk];
    assert_eq!(record.certificates.len(), 3);
    let verified_epoch = record.verified_epoch.unwrap();
    let mint = bed
        .engine
        .ledger
        .events()
        .iter()
        .find(|e| matches!(&e.body, EventBody::TokensMinted { pk: p, .. } if *p == pk))
        .expect("mint event exists");
    assert_eq!(mint.epoch, verified_epoch);
    // x=100 split four ways.
    if let EventBody::TokensMinted { credits, .. } = &mint.body {
        assert_eq!(credits.len(), 4);
        assert!(credits.iter().all(|c| c.amount == 25));
    }
}

#[test]
fn wrong_verifier_cannot_certify() {
    let mut bed = Bed::new(6, |_| {});
    let inviter = bed.verifiers[0];
    let (pk, template) = bed.new_person();
    bed.engine
        .claim_identity(pk, template, 0, GateChoice::Invitation { inviter }, false)
        .unwrap();
    let assigned = bed.engine.state.identities[&pk].current_assignee.unwrap();
    let other = *bed.verifiers.iter().find(|v| **v != assigned).unwrap();
    let presented = bed.sample(&pk);
    assert_eq!(
        bed.engine.submit_certificate(other, pk, &presented).unwrap_err(),
        RegistryError::WrongVerifier
    );
}

#[test]
fn reassignment_cap_is_enforced() {
    let mut bed = Bed::new(8, |c| c.protocol.max_reassignments = 3);
    let inviter = bed.verifiers[0];
    let (pk, _) = bed.new_person();
    // Enroll a template that never matches live readings, so every honest
    // verdict is a rejection.
    let b = bed.engine.state.config.biometric.clone();
    let foreign = uniqueid_core::biometric::foreign_template(
        b.template_dim,
        b.n_modalities,
        b.genuine_noise_sigma,
        &mut bed.rng,
    );
    bed.engine
        .claim_identity(pk, foreign, 0, GateChoice::Invitation { inviter }, false)
        .unwrap();
    for _ in 0..3 {
        let v = bed.engine.state.identities[&pk].current_assignee.unwrap();
        let presented = bed.sample(&pk);
        let out = bed.engine.submit_certificate(v, pk, &presented).unwrap();
        assert!(!out.accepted);
        bed.engine.request_reassignment(pk).unwrap();
        bed.advance_epoch();
    }
    let v = bed.engine.state.identities[&pk].current_assignee.unwrap();
    let presented = bed.sample(&pk);
    bed.engine.submit_certificate(v, pk, &presented).unwrap();
    assert_eq!(
        bed.engine.request_reassignment(pk).unwrap_err(),
        RegistryError::ReassignmentLimitReached
    );
}

#[test]
fn reassignment_without_rejection_is_an_error() {
    let mut bed = Bed::new(6, |_| {});
    let inviter = bed.verifiers[0];
    let (pk, template) = bed.new_person();
    bed.engine
        .claim_identity(pk, template, 0, GateChoice::Invitation { inviter }, false)
        .unwrap();
    assert_eq!(
        bed.engine.request_reassignment(pk).unwrap_err(),
        RegistryError::NoRejectionPending
    );
}

#[test]
fn trust_circle_rules() {
    let mut bed = Bed::new(8, |_| {});
    let owner = bed.verifiers[0];
    let members: Vec<PersonId> = bed.verifiers[1..6].to_vec();
    // Too few.
    assert!(matches!(
        bed.engine.declare_trust_circle(owner, members[..4].to_vec()),
        Err(RegistryError::TooFewMembers(5))
    ));
    // Contains self.
    let mut with_self = members.clone();
    with_self[0] = owner;
    assert!(bed.engine.declare_trust_circle(owner, with_self).is_err());
    // Unverified member.
    let (stranger, template) = bed.new_person();
    bed.engine
        .claim_identity(stranger, template, 0, GateChoice::Invitation { inviter: owner }, false)
        .unwrap();
    let mut with_pending = members.clone();
    with_pending[0] = stranger;
    assert_eq!(
        bed.engine.declare_trust_circle(owner, with_pending).unwrap_err(),
        RegistryError::UnverifiedMember
    );
    // Five verified friends work.
    bed.engine.declare_trust_circle(owner, members.clone()).unwrap();
    assert_eq!(bed.engine.state.identities[&owner].trust_circle, members);
}

#[test]
fn recovery_requires_majority_and_unused_key() {
    let mut bed = Bed::new(8, |_| {});
    let owner = bed.verifiers[0];
    let members: Vec<PersonId> = bed.verifiers[1..6].to_vec();
    bed.engine.declare_trust_circle(owner, members.clone()).unwrap();

    let new_pk = PersonId([0x77; 32]);
    // Two of five approvals are not a majority.
    assert_eq!(
        bed.engine
            .recover_identity(owner, new_pk, members[..2].to_vec())
            .unwrap_err(),
        RegistryError::InsufficientApprovals
    );
    // Three of five re-keys the identity into re-verification.
    bed.engine.recover_identity(owner, new_pk, members[..3].to_vec()).unwrap();
    assert!(bed.engine.state.identities.get(&owner).is_none());
    let rec = &bed.engine.state.identities[&new_pk];
    assert_eq!(rec.status, IdentityStatus::PendingVerification);
    assert!(rec.certificates.is_empty());
    // The old key is retired forever.
    let (_, template) = bed.new_person();
    assert_eq!(
        bed.engine
            .claim_identity(owner, template, 0, GateChoice::Invitation { inviter: bed.verifiers[6] }, false)
            .unwrap_err(),
        RegistryError::DuplicatePk
    );
    // Re-using an existing key for recovery fails.
    let other = bed.verifiers[6];
    bed.engine.declare_trust_circle(other, members.clone()).unwrap();
    assert_eq!(
        bed.engine
            .recover_identity(other, bed.verifiers[7], members[..3].to_vec())
            .unwrap_err(),
        RegistryError::PkInUse
    );
    // The truth moves with the identity: verify under the new key.
    let truth = bed.truths[&owner].clone();
    bed.truths.insert(new_pk, truth);
    bed.verify_identity(new_pk);
    assert_eq!(bed.engine.state.identities[&new_pk].status, IdentityStatus::Verified);
}

#[test]
fn renewal_extends_expiry_and_expired_cannot_renew() {
    let mut bed = Bed::new(6, |c| c.protocol.identity_ttl_epochs = 52);
    let user = bed.verifiers[0];
    // Advance to epoch 50 and renew: new expiry is 50 + 52 = 102.
    while bed.engine.state.epoch < 50 {
        bed.advance_epoch();
    }
    let presented = bed.sample(&user);
    let out = bed.engine.renew_identity(user, &presented).unwrap();
    assert!(out.renewed);
    assert_eq!(out.new_expiry, Some(102));
    assert_eq!(bed.engine.state.identities[&user].expiry_epoch, Some(102));

    // Let another identity expire, then refuse its renewal.
    let victim = bed.verifiers[1];
    while bed.engine.state.epoch < 103 {
        bed.advance_epoch();
    }
    bed.engine.commit(EventBody::IdentityExpired { pk: victim }).unwrap();
    assert_eq!(bed.engine.state.identities[&victim].status, IdentityStatus::Expired);
    let presented = bed.sample(&victim);
    assert_eq!(
        bed.engine.renew_identity(victim, &presented).unwrap_err(),
        RegistryError::AlreadyExpired
    );
}

#[test]
fn delegation_rules_and_suspension_interval() {
    let mut bed = Bed::new(6, |_| {});
    let a = bed.verifiers[0];
    assert_eq!(bed.engine.delegate_trust(a, a).unwrap_err(), TrustError::SelfDelegation);
    let (pending, template) = bed.new_person();
    bed.engine
        .claim_identity(pending, template, 0, GateChoice::Invitation { inviter: a }, false)
        .unwrap();
    assert_eq!(bed.engine.delegate_trust(pending, a).unwrap_err(), TrustError::Unverified);

    // Suspend verifier a for epochs [now, now+5).
    let now = bed.engine.state.epoch;
    bed.engine.suspend_trust(a, now + 5);
    assert!(!bed.engine.state.is_eligible_verifier(&a, now));
    assert!(!bed.engine.state.is_eligible_verifier(&a, now + 4));
    assert!(bed.engine.state.is_eligible_verifier(&a, now + 5));
    // Double suspension keeps the later end.
    bed.engine.suspend_trust(a, now + 3);
    assert_eq!(bed.engine.state.trust.suspended_until(&a), now + 5);
}

#[test]
fn suspension_voids_inflight_assignment_with_free_redraw() {
    let mut bed = Bed::new(6, |c| c.protocol.max_reassignments = 0);
    let inviter = bed.verifiers[0];
    let (pk, template) = bed.new_person();
    bed.engine
        .claim_identity(pk, template, 0, GateChoice::Invitation { inviter }, false)
        .unwrap();
    let assigned = bed.engine.state.identities[&pk].current_assignee.unwrap();
    bed.engine.suspend_trust(assigned, bed.engine.state.epoch + 10);
    let record = &bed.engine.state.identities[&pk];
    assert_eq!(record.current_assignee, None);
    assert!(record.assignment_voided);
    // The re-draw is free even with a zero reassignment budget.
    let next = bed.engine.assign_verifier(pk, AssignmentCause::Voided).unwrap();
    assert_ne!(next, assigned, "suspended verifier is out of the pool");
    assert_eq!(bed.engine.state.identities[&pk].reassignments_used, 0);
}

#[test]
fn audit_quota_and_authorization() {
    let mut bed = Bed::new(8, |c| {
        c.protocol.recheck_quota = 2;
        c.protocol.quota_window_epochs = 4;
    });
    let caller = bed.verifiers[0];
    let t1 = bed.verifiers[1];
    let t2 = bed.verifiers[2];
    let t3 = bed.verifiers[3];
    // Ordinary users may not call.
    let (user, template) = bed.new_person();
    bed.engine
        .claim_identity(user, template, 0, GateChoice::Invitation { inviter: caller }, false)
        .unwrap();
    assert_eq!(bed.engine.call_ajudge(user, t1).unwrap_err(), AuditError::NotAuthorized);
    // Two calls fit the window, the third does not.
    bed.engine.call_ajudge(caller, t1).unwrap();
    bed.engine.call_ajudge(caller, t2).unwrap();
    assert_eq!(bed.engine.call_ajudge(caller, t3).unwrap_err(), AuditError::QuotaExhausted);
    // Next window refreshes the quota.
    for _ in 0..4 {
        bed.advance_epoch();
    }
    bed.engine.call_ajudge(caller, t3).unwrap();
    // The system account bypasses quota entirely.
    bed.engine.call_ajudge(PersonId::SYSTEM, t1).unwrap();
    bed.engine.call_ajudge(PersonId::SYSTEM, t2).unwrap();
}

#[test]
fn adjudication_rewards_genuine_and_settles_fakes() {
    let mut bed = Bed::new(5, |c| {
        c.protocol.recheck_quota = 10;
        c.monetary.ajudge_reward = 5;
    });
    let caller = bed.verifiers[0];
    let target = bed.verifiers[1];
    let call_id = bed.engine.call_ajudge(caller, target).unwrap();
    bed.advance_epoch();
    // Genuine target appears: every eligible verifier samples the real
    // human and matches.
    let panel = bed.engine.state.eligible_verifiers(0, bed.engine.state.epoch);
    let samples: Vec<(PersonId, BiometricTemplate)> =
        panel.iter().map(|v| (*v, bed.sample(&target))).collect();
    let balance_before = bed.engine.state.tokens.balance(&target);
    let (outcome, settlement) = bed.engine.adjudicate(call_id, &samples).unwrap();
    assert_eq!(outcome, uniqueid_core::audit::AuditOutcome::PassedGenuine);
    assert!(settlement.is_none());
    assert_eq!(bed.engine.state.tokens.balance(&target), balance_before + 5);
}

#[test]
fn missed_deadline_revokes_without_slashing() {
    let mut bed = Bed::new(5, |c| {
        c.protocol.recheck_quota = 10;
        c.protocol.ajudge_deadline_epochs = 2;
    });
    let caller = bed.verifiers[0];
    let target = bed.verifiers[1];
    let call_id = bed.engine.call_ajudge(caller, target).unwrap();
    // Too early to declare a miss.
    assert!(bed.engine.miss_deadline(call_id).is_err());
    for _ in 0..3 {
        bed.advance_epoch();
    }
    let slashes_before = bed
        .engine
        .ledger
        .events()
        .iter()
        .filter(|e| matches!(e.body, EventBody::StakeSlashed { .. }))
        .count();
    bed.engine.miss_deadline(call_id).unwrap();
    assert_eq!(bed.engine.state.identities[&target].status, IdentityStatus::Revoked);
    let slashes_after = bed
        .engine
        .ledger
        .events()
        .iter()
        .filter(|e| matches!(e.body, EventBody::StakeSlashed { .. }))
        .count();
    assert_eq!(slashes_before, slashes_after, "a no-show proves nothing about verifiers");
}

#[test]
fn assignment_uniformity_over_beacon_rounds() {
    // With 10 eligible verifiers, 100k fresh beacon rounds should assign
    // each about 10% of the time (within 1%).
    use uniqueid_core::registry::assignment_index;
    let pool_len = 10usize;
    let pk = PersonId([5; 32]);
    let mut beacon = uniqueid_core::registry::RandomnessBeacon::genesis(99);
    let mut counts = [0u64; 10];
    let rounds = 100_000u64;
    for _ in 0..rounds {
        beacon.next();
        counts[assignment_index(&beacon.value, &pk, 0, pool_len)] += 1;
    }
    for (i, c) in counts.iter().enumerate() {
        let share = *c as f64 / rounds as f64;
        assert!((share - 0.1).abs() < 0.01, "slot {i} drew {share}");
    }
}
