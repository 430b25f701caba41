//! Deterministic scenario engine: genesis, then a fixed per-epoch phase
//! order: (1) beacon, (2) arrivals and adversary claims, (3) verification
//! steps, (4) renewals and expiries, (5) audits, (6) governance,
//! (7) economics, (8) metrics. One seeded generator drives every random
//! choice, and actor collections iterate in ascending pk order, so equal
//! configs produce byte-identical ledgers.

use crate::adversary::{
    AdversaryError, AttackReport, AttackStrategy, AttemptRecord, DetectionStats, FrontierRow,
};
use crate::biometric::{
    calibrate_tau, foreign_template, generate_person_ground_truth, sample_template,
    BiometricError, BiometricTemplate, GroundTruthBiometric, MatchPolicy,
};
use crate::config::{CityId, ConfigError, GateKind, ScenarioConfig};
use crate::engine::Engine;
use crate::governance::{GovernanceError, ImportanceClass, LayerTally};
use crate::hashing::{sha256_concat, Digest};
use crate::ledger::{EventBody, Ledger};
use crate::metrics::{MetricsReport, MetricsRow, RunReport};
use crate::registry::{
    AssignmentCause, GateChoice, IdentityStatus, PersonId, RandomnessBeacon,
    RegistryError, TerminationReason,
};
use crate::state::AppState;
use crate::tokens::{Allocation, LockReason};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Poisson};
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("biometric calibration: {0}")]
    Calibration(#[from] BiometricError),
    #[error("adversary: {0}")]
    Adversary(#[from] AdversaryError),
    #[error("internal: {0}")]
    Internal(String),
}

/// Everything a finished run produces.
pub struct RunOutput {
    pub ledger: Ledger,
    pub metrics: MetricsReport,
    pub report: RunReport,
    pub state: AppState,
    /// Per-attempt log of the adversary campaign, for frontier evaluation.
    pub attempt_log: Vec<AttemptLogEntry>,
}

#[derive(Clone, Debug)]
pub struct AttemptLogEntry {
    /// Pacing record; None when the claim never reached an assignment.
    pub record: Option<AttemptRecord>,
    pub reached_verified: bool,
    pub surviving: bool,
}

enum Human {
    Genuine(GroundTruthBiometric),
    /// No human behind the identity: live scans read as strangers.
    Fake,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum AttemptOutcome {
    Pending,
    Succeeded,
    Detected,
    Failed,
}

struct AttemptState {
    claim_epoch: u64,
    stake: u64,
    first_assign_epoch: Option<u64>,
    first_verdict_epoch: Option<u64>,
    verified_epoch: Option<u64>,
    detected_epoch: Option<u64>,
    outcome: AttemptOutcome,
}

struct AttackDriver {
    launched: u64,
    gate_failed: u64,
    attempts: BTreeMap<PersonId, AttemptState>,
    claimants: Vec<PersonId>,
    next_claimant: usize,
}

#[derive(Default)]
struct EpochCounters {
    calls_opened: u64,
    passed: u64,
    failed: u64,
    missed: u64,
    tokens_slashed: u64,
    proposals_passed: u64,
    proposals_failed: u64,
}

struct Simulation {
    engine: Engine,
    rng: ChaCha12Rng,
    humans: BTreeMap<PersonId, Human>,
    /// Candidate inviters per city; entries are lazily dropped once stale.
    invite_candidates: BTreeMap<CityId, Vec<PersonId>>,
    /// Verified identities per city, append-only with staleness checks.
    verified_pool: BTreeMap<CityId, Vec<PersonId>>,
    all_verified: Vec<PersonId>,
    /// Gate-starved honest arrivals awaiting entry.
    waiting: VecDeque<(PersonId, CityId)>,
    /// target -> verifiers that rejected it while pending.
    rejected_by: BTreeMap<PersonId, Vec<PersonId>>,
    /// verifier -> verified targets it rejected earlier and wants audited.
    suspicions: BTreeMap<PersonId, BTreeSet<PersonId>>,
    audit_called: BTreeSet<(PersonId, PersonId)>,
    attack: Option<AttackDriver>,
    counters: EpochCounters,
}

/// Match threshold for a config: explicit tau, or calibrated from a seed
/// derived from the scenario seed.
pub fn resolve_policy(config: &ScenarioConfig) -> Result<(MatchPolicy, f64), SimError> {
    let b = &config.biometric;
    let tau = match b.tau {
        Some(t) => t,
        None => {
            let cal_seed =
                sha256_concat(&[b"calibration", &config.seed.to_be_bytes()]).prefix_u64();
            let mut rng = ChaCha12Rng::seed_from_u64(cal_seed);
            calibrate_tau(
                b.template_dim,
                b.genuine_noise_sigma,
                b.calibration_pairs as usize,
                b.target_eer,
                &mut rng,
            )?
            .tau
        }
    };
    Ok((
        MatchPolicy {
            tau,
            n_modalities: b.n_modalities,
            k_required: b.k_required,
            genuine_noise_sigma: b.genuine_noise_sigma,
        },
        tau,
    ))
}

pub fn run_scenario(config: &ScenarioConfig) -> Result<RunOutput, SimError> {
    config.validate()?;
    if let Some(plan) = &config.adversary {
        plan.check_budget()?;
    }
    let (policy, tau) = resolve_policy(config)?;
    let mut effective = config.clone();
    effective.biometric.tau = Some(tau);

    let mut sim = Simulation::genesis(effective, policy)?;
    let epochs = sim.engine.state.config.epochs;
    let mut rows = Vec::with_capacity(epochs as usize);
    for epoch in 1..=epochs {
        sim.engine
            .commit(EventBody::EpochStarted { epoch })
            .map_err(|e| SimError::Internal(e.to_string()))?;
        sim.phase_arrivals()?;
        sim.phase_verification()?;
        sim.phase_renewals()?;
        sim.phase_audits()?;
        sim.phase_governance()?;
        sim.phase_economics()?;
        rows.push(sim.snapshot_metrics());
    }
    Ok(sim.finish(rows))
}

impl Simulation {
    fn genesis(config: ScenarioConfig, policy: MatchPolicy) -> Result<Simulation, SimError> {
        let seed = config.seed;
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut engine = Engine::new(config.clone(), policy);
        let mut humans = BTreeMap::new();

        // Draw genesis verifiers city by city (ascending).
        let mut cities = config.cities.clone();
        cities.sort_by_key(|c| c.city);
        let mut genesis: Vec<(CityId, PersonId, BiometricTemplate)> = Vec::new();
        let mut allocations: Vec<Allocation> = Vec::new();
        let endowment = config.monetary.verifier_stake + config.monetary.genesis_verifier_extra;
        for city in &cities {
            for _ in 0..city.genesis_verifiers {
                let pk = PersonId(rng.random());
                let truth = generate_person_ground_truth(
                    config.biometric.template_dim,
                    config.biometric.n_modalities,
                    &mut rng,
                );
                let template =
                    sample_template(&truth, config.biometric.genuine_noise_sigma, &mut rng);
                humans.insert(pk, Human::Genuine(truth));
                genesis.push((city.city, pk, template));
                allocations.push(Allocation { account: pk, amount: endowment });
            }
        }

        // Adversary claimant keys are derived, so stake funding can be
        // allocated before the campaign starts.
        let mut attack = None;
        if let Some(plan) = &config.adversary {
            let claimants: Vec<PersonId> = (0..plan.attempts)
                .map(|i| {
                    PersonId(
                        sha256_concat(&[
                            b"uniqueid.adversary",
                            &seed.to_be_bytes(),
                            &i.to_be_bytes(),
                        ])
                        .0,
                    )
                })
                .collect();
            if plan.funding > 0 {
                let share = plan.funding / plan.attempts;
                let remainder = plan.funding % plan.attempts;
                for (i, pk) in claimants.iter().enumerate() {
                    let amount = share + if i == 0 { remainder } else { 0 };
                    if amount > 0 {
                        allocations.push(Allocation { account: *pk, amount });
                    }
                }
            }
            attack = Some(AttackDriver {
                launched: 0,
                gate_failed: 0,
                attempts: BTreeMap::new(),
                claimants,
                next_claimant: 0,
            });
        }

        // Investors take the rest of the genesis supply.
        let reserved: u64 = allocations.iter().map(|a| a.amount).sum();
        let supply = config.monetary.genesis_supply();
        if config.monetary.ico_allocations.is_empty() {
            let remainder = supply - reserved;
            if remainder > 0 {
                let pk = PersonId(sha256_concat(&[b"uniqueid.ico", &0u64.to_be_bytes()]).0);
                allocations.push(Allocation { account: pk, amount: remainder });
            }
        } else {
            for (i, amount) in config.monetary.ico_allocations.iter().enumerate() {
                let pk =
                    PersonId(sha256_concat(&[b"uniqueid.ico", &(i as u64).to_be_bytes()]).0);
                allocations.push(Allocation { account: pk, amount: *amount });
            }
        }

        engine
            .commit(EventBody::TokensAllocated { allocations })
            .map_err(|e| SimError::Internal(format!("genesis allocation: {e}")))?;

        let mut verified_pool: BTreeMap<CityId, Vec<PersonId>> = BTreeMap::new();
        let mut invite_candidates: BTreeMap<CityId, Vec<PersonId>> = BTreeMap::new();
        let mut all_verified = Vec::new();
        for (city, pk, template) in &genesis {
            engine
                .commit(EventBody::StakeLocked {
                    pk: *pk,
                    amount: config.monetary.verifier_stake,
                    reason: LockReason::VerifierStake,
                })
                .map_err(|e| SimError::Internal(format!("genesis stake: {e}")))?;
            engine
                .commit(EventBody::GenesisVerifierAdded {
                    pk: *pk,
                    city: *city,
                    template_digest: template.digest(),
                })
                .map_err(|e| SimError::Internal(format!("genesis verifier: {e}")))?;
            engine.bio.enrolled.insert(*pk, template.clone());
            engine.bio.index.insert(template.clone());
            verified_pool.entry(*city).or_default().push(*pk);
            invite_candidates.entry(*city).or_default().push(*pk);
            all_verified.push(*pk);
        }

        // Ring delegations inside each city's genesis set.
        for city in &cities {
            let members: Vec<PersonId> =
                genesis.iter().filter(|(c, _, _)| *c == city.city).map(|(_, pk, _)| *pk).collect();
            if members.len() > 1 {
                for (i, from) in members.iter().enumerate() {
                    let to = members[(i + 1) % members.len()];
                    engine
                        .delegate_trust(*from, to)
                        .map_err(|e| SimError::Internal(format!("genesis delegation: {e}")))?;
                }
            }
        }

        Ok(Simulation {
            engine,
            rng,
            humans,
            invite_candidates,
            verified_pool,
            all_verified,
            waiting: VecDeque::new(),
            rejected_by: BTreeMap::new(),
            suspicions: BTreeMap::new(),
            audit_called: BTreeSet::new(),
            attack,
            counters: EpochCounters::default(),
        })
    }

    fn epoch(&self) -> u64 {
        self.engine.state.epoch
    }

    fn sigma(&self) -> f64 {
        self.engine.state.config.biometric.genuine_noise_sigma
    }

    fn live_sample(&mut self, pk: &PersonId) -> BiometricTemplate {
        let sigma = self.sigma();
        let (dim, n_modalities) = {
            let b = &self.engine.state.config.biometric;
            (b.template_dim, b.n_modalities)
        };
        match self.humans.get(pk) {
            Some(Human::Genuine(truth)) => sample_template(truth, sigma, &mut self.rng),
            Some(Human::Fake) | None => foreign_template(dim, n_modalities, sigma, &mut self.rng),
        }
    }

    fn fresh_pk(&mut self) -> PersonId {
        loop {
            let pk = PersonId(self.rng.random());
            if !self.engine.state.pk_in_use(&pk) && !self.humans.contains_key(&pk) {
                return pk;
            }
        }
    }

    /// Uniform pick from a lazily maintained candidate vector; stale
    /// entries are swap-removed as they are discovered.
    fn pick_candidate(
        rng: &mut ChaCha12Rng,
        pool: &mut Vec<PersonId>,
        valid: impl Fn(&PersonId) -> bool,
    ) -> Option<PersonId> {
        while !pool.is_empty() {
            let i = rng.random_range(0..pool.len());
            let pk = pool[i];
            if valid(&pk) {
                return Some(pk);
            }
            pool.swap_remove(i);
        }
        None
    }

    // Phase 2: honest arrivals claim identities; the adversary submits its
    // batch afterwards.
    fn phase_arrivals(&mut self) -> Result<(), SimError> {
        let epoch = self.epoch();
        let behavior = self.engine.state.config.behavior.clone();
        let stopped = behavior.arrival_stop_epoch.is_some_and(|stop| epoch > stop);
        let mut cities = self.engine.state.config.cities.clone();
        cities.sort_by_key(|c| c.city);
        if !stopped {
            for city in &cities {
                let n = if city.arrival_rate <= 0.0 {
                    0
                } else if behavior.arrival_jitter {
                    Poisson::new(city.arrival_rate)
                        .map_err(|e| SimError::Internal(e.to_string()))?
                        .sample(&mut self.rng) as u64
                } else {
                    city.arrival_rate.round() as u64
                };
                for _ in 0..n {
                    let pk = self.fresh_pk();
                    let truth = generate_person_ground_truth(
                        self.engine.state.config.biometric.template_dim,
                        self.engine.state.config.biometric.n_modalities,
                        &mut self.rng,
                    );
                    self.humans.insert(pk, Human::Genuine(truth));
                    self.waiting.push_back((pk, city.city));
                }
            }
        }

        // Everyone waiting tries the allowed gates in preference order.
        let queue: Vec<(PersonId, CityId)> = self.waiting.drain(..).collect();
        for (pk, city) in queue {
            match self.try_claim_honest(pk, city)? {
                true => {}
                false => self.waiting.push_back((pk, city)),
            }
        }

        if self.attack.is_some() {
            self.attack_launch_batch()?;
        }
        Ok(())
    }

    /// Returns true when the claim was opened.
    fn try_claim_honest(&mut self, pk: PersonId, city: CityId) -> Result<bool, SimError> {
        let epoch = self.epoch();
        let gates = self.engine.state.config.protocol.allowed_gates.clone();
        let mut choice = None;
        for gate in gates {
            match gate {
                GateKind::Invitation => {
                    let state = &self.engine.state;
                    let pool = self.invite_candidates.entry(city).or_default();
                    let picked = Self::pick_candidate(&mut self.rng, pool, |cand| {
                        state
                            .identities
                            .get(cand)
                            .is_some_and(|r| {
                                r.status == IdentityStatus::Verified
                                    && r.invitations_remaining > 0
                            })
                    });
                    if let Some(inviter) = picked {
                        choice = Some(GateChoice::Invitation { inviter });
                        break;
                    }
                }
                GateKind::VerifierSponsor => {
                    let state = &self.engine.state;
                    let quota = state.config.protocol.sponsor_quota;
                    let window = state.config.protocol.sponsor_window_epochs;
                    let candidates: Vec<PersonId> = state
                        .eligible_verifiers(city, epoch)
                        .into_iter()
                        .filter(|v| {
                            state.verifiers[v].sponsor_quota.used_in(epoch, window) < quota
                        })
                        .collect();
                    if !candidates.is_empty() {
                        let sponsor = candidates[self.rng.random_range(0..candidates.len())];
                        choice = Some(GateChoice::VerifierSponsor { sponsor });
                        break;
                    }
                }
                GateKind::Stake => {
                    let state = &self.engine.state;
                    if state.tokens.balance(&pk) >= state.required_stake(city) {
                        choice = Some(GateChoice::Stake);
                        break;
                    }
                }
            }
        }
        let Some(gate) = choice else { return Ok(false) };
        let sigma = self.sigma();
        let template = match self.humans.get(&pk) {
            Some(Human::Genuine(truth)) => sample_template(truth, sigma, &mut self.rng),
            _ => return Err(SimError::Internal("arrival without a human".into())),
        };
        match self.engine.claim_identity(pk, template, city, gate, false) {
            Ok(_) => Ok(true),
            // Lost a race for quota or verifiers this epoch; retry later.
            Err(RegistryError::GateUnsatisfied(_))
            | Err(RegistryError::NoEligibleVerifiersInCity) => Ok(false),
            Err(e) => Err(SimError::Internal(format!("honest claim: {e}"))),
        }
    }

    fn attack_launch_batch(&mut self) -> Result<(), SimError> {
        let epoch = self.epoch();
        let plan = self.engine.state.config.adversary.clone().expect("attack driver has a plan");
        let parallelism = self.engine.state.config.behavior.attack_parallelism as u64;
        let sigma = self.sigma();
        let (dim, n_modalities) = {
            let b = &self.engine.state.config.biometric;
            (b.template_dim, b.n_modalities)
        };
        let mut launched_now = 0u64;
        loop {
            {
                let attack = self.attack.as_ref().expect("attack driver");
                if launched_now >= parallelism || attack.launched >= plan.attempts {
                    break;
                }
            }
            let pk = {
                let attack = self.attack.as_ref().expect("attack driver");
                attack.claimants[attack.next_claimant]
            };

            // Template and human model per strategy.
            let template = match plan.strategy {
                AttackStrategy::DuplicateEnrollment => {
                    let state = &self.engine.state;
                    let humans = &self.humans;
                    let victim = Self::pick_candidate(&mut self.rng, &mut self.all_verified, |v| {
                        state
                            .identities
                            .get(v)
                            .is_some_and(|r| r.status == IdentityStatus::Verified && !r.adversary)
                            && matches!(humans.get(v), Some(Human::Genuine(_)))
                    });
                    let Some(victim) = victim else { break };
                    let truth = match self.humans.get(&victim) {
                        Some(Human::Genuine(t)) => t.clone(),
                        _ => unreachable!("victim validated as genuine"),
                    };
                    let template = sample_template(&truth, sigma, &mut self.rng);
                    self.humans.insert(pk, Human::Genuine(truth));
                    template
                }
                _ => {
                    self.humans.insert(pk, Human::Fake);
                    foreign_template(dim, n_modalities, sigma, &mut self.rng)
                }
            };

            let gate = match plan.entry_gate {
                GateKind::VerifierSponsor => {
                    // Sponsorship is onboarding capacity, not an
                    // endorsement: prefer bribed sponsors, fall back to
                    // any verifier with quota left.
                    let state = &self.engine.state;
                    let quota = state.config.protocol.sponsor_quota;
                    let window = state.config.protocol.sponsor_window_epochs;
                    let with_quota = |v: &PersonId| {
                        state.verifiers[v].sponsor_quota.used_in(epoch, window) < quota
                    };
                    let eligible = state.eligible_verifiers(plan.city, epoch);
                    let sponsor = eligible
                        .iter()
                        .find(|v| state.is_corrupted(v) && with_quota(v))
                        .or_else(|| eligible.iter().find(|v| with_quota(v)));
                    match sponsor {
                        Some(s) => GateChoice::VerifierSponsor { sponsor: *s },
                        None => break, // no sponsorship capacity this epoch
                    }
                }
                GateKind::Stake => GateChoice::Stake,
                GateKind::Invitation => break,
            };

            match self.engine.claim_identity(pk, template, plan.city, gate, true) {
                Ok(outcome) => {
                    let stake = self
                        .engine
                        .state
                        .tokens
                        .lock_amount(&pk, LockReason::EntryStake)
                        .unwrap_or(0);
                    let attack = self.attack.as_mut().expect("attack driver");
                    attack.attempts.insert(
                        pk,
                        AttemptState {
                            claim_epoch: epoch,
                            stake,
                            first_assign_epoch: outcome.assigned.map(|_| epoch),
                            first_verdict_epoch: None,
                            verified_epoch: None,
                            detected_epoch: None,
                            outcome: AttemptOutcome::Pending,
                        },
                    );
                    attack.launched += 1;
                    attack.next_claimant += 1;
                    launched_now += 1;
                }
                Err(RegistryError::GateUnsatisfied(_)) => {
                    // Cannot afford the stake (or quota raced): a failed
                    // attempt with no events.
                    let attack = self.attack.as_mut().expect("attack driver");
                    attack.launched += 1;
                    attack.gate_failed += 1;
                    attack.next_claimant += 1;
                    launched_now += 1;
                    self.humans.remove(&pk);
                }
                Err(RegistryError::NoEligibleVerifiersInCity) => break,
                Err(e) => return Err(SimError::Internal(format!("attack claim: {e}"))),
            }
        }
        Ok(())
    }

    // Phase 3: each pending identity advances at most one step.
    fn phase_verification(&mut self) -> Result<(), SimError> {
        let pending: Vec<PersonId> = self
            .engine
            .state
            .identities
            .values()
            .filter(|r| r.is_active())
            .map(|r| r.pk)
            .collect();
        for pk in pending {
            let Some(record) = self.engine.state.identities.get(&pk) else { continue };
            match record.status {
                IdentityStatus::PendingEntry => self.step_dedup_adjudication(pk)?,
                IdentityStatus::PendingVerification => match record.current_assignee {
                    Some(verifier) => self.step_verdict(pk, verifier)?,
                    None => self.step_assign(pk)?,
                },
                _ => {}
            }
        }
        Ok(())
    }

    fn step_dedup_adjudication(&mut self, pk: PersonId) -> Result<(), SimError> {
        let epoch = self.epoch();
        let (city, flag, adversary) = {
            let r = &self.engine.state.identities[&pk];
            let Some(flag) = r.dedup_pending.first().copied() else {
                return Ok(());
            };
            (r.city, flag, r.adversary)
        };
        let panel = self.engine.state.eligible_verifiers(city, epoch);
        if panel.is_empty() {
            return Ok(());
        }
        let existing = self.engine.bio.index.get(&flag).cloned();
        let mut votes_duplicate = 0u64;
        let mut votes_distinct = 0u64;
        for verifier in &panel {
            let duplicate = match &existing {
                None => false, // flagged template left the verified set
                Some(t) => {
                    if adversary && self.engine.state.is_corrupted(verifier) {
                        false
                    } else {
                        let presented = self.live_sample(&pk);
                        crate::biometric::match_template(&presented, t, &self.engine.bio.policy)
                            .map_err(|e| SimError::Internal(e.to_string()))?
                    }
                }
            };
            if duplicate {
                votes_duplicate += 1;
            } else {
                votes_distinct += 1;
            }
        }
        let confirmed = votes_duplicate > votes_distinct;
        self.engine
            .commit(EventBody::DedupAdjudicated {
                pk,
                matched_digest: flag,
                votes_duplicate,
                votes_distinct,
                confirmed_duplicate: confirmed,
            })
            .map_err(|e| SimError::Internal(e.to_string()))?;
        if confirmed {
            self.engine
                .terminate_claim(pk, TerminationReason::DuplicateConfirmed)
                .map_err(|e| SimError::Internal(e.to_string()))?;
            self.attack_mark(pk, AttemptOutcome::Detected);
        } else if self.engine.state.identities[&pk].status == IdentityStatus::PendingVerification {
            // Cleared: first assignment happens now, first verdict next
            // epoch.
            if self.engine.assign_verifier(pk, AssignmentCause::Initial).is_ok() {
                self.attack_note_assignment(pk);
            }
        }
        Ok(())
    }

    fn step_assign(&mut self, pk: PersonId) -> Result<(), SimError> {
        let record = &self.engine.state.identities[&pk];
        let result = if record.assignment_voided {
            self.engine.assign_verifier(pk, AssignmentCause::Voided)
        } else if record.rejection_pending {
            match self.engine.request_reassignment(pk) {
                Err(RegistryError::ReassignmentLimitReached) => {
                    self.engine
                        .terminate_claim(pk, TerminationReason::ReassignmentsExhausted)
                        .map_err(|e| SimError::Internal(e.to_string()))?;
                    self.attack_mark(pk, AttemptOutcome::Failed);
                    return Ok(());
                }
                other => other,
            }
        } else {
            self.engine.assign_verifier(pk, AssignmentCause::Initial)
        };
        match result {
            Ok(_) => {
                self.attack_note_assignment(pk);
                Ok(())
            }
            Err(RegistryError::NoEligibleVerifiersInCity) => Ok(()), // retry next epoch
            Err(e) => Err(SimError::Internal(format!("assignment: {e}"))),
        }
    }

    fn step_verdict(&mut self, pk: PersonId, verifier: PersonId) -> Result<(), SimError> {
        let epoch = self.epoch();
        let presented = self.live_sample(&pk);
        let adversary = self.engine.state.identities[&pk].adversary;
        let grinding = self
            .engine
            .state
            .config
            .adversary
            .as_ref()
            .is_some_and(|p| p.grinding);
        let outcome = self
            .engine
            .submit_certificate(verifier, pk, &presented)
            .map_err(|e| SimError::Internal(format!("certificate: {e}")))?;
        if let Some(attack) = self.attack.as_mut() {
            if let Some(a) = attack.attempts.get_mut(&pk) {
                if a.first_verdict_epoch.is_none() {
                    a.first_verdict_epoch = Some(epoch);
                }
            }
        }
        if outcome.accepted {
            if outcome.verified {
                self.post_verify(pk)?;
            } else {
                // Next verifier is disclosed immediately; its verdict waits
                // for the next epoch.
                match self.engine.assign_verifier(pk, AssignmentCause::Initial) {
                    Ok(_) | Err(RegistryError::NoEligibleVerifiersInCity) => {}
                    Err(e) => return Err(SimError::Internal(format!("assignment: {e}"))),
                }
            }
            return Ok(());
        }
        // Rejected.
        self.rejected_by.entry(pk).or_default().push(verifier);
        if adversary && !grinding {
            self.engine
                .terminate_claim(pk, TerminationReason::Abandoned)
                .map_err(|e| SimError::Internal(e.to_string()))?;
            self.attack_mark(pk, AttemptOutcome::Failed);
            return Ok(());
        }
        match self.engine.request_reassignment(pk) {
            Ok(_) => Ok(()),
            Err(RegistryError::ReassignmentLimitReached) => {
                self.engine
                    .terminate_claim(pk, TerminationReason::ReassignmentsExhausted)
                    .map_err(|e| SimError::Internal(e.to_string()))?;
                self.attack_mark(pk, AttemptOutcome::Failed);
                Ok(())
            }
            Err(RegistryError::NoEligibleVerifiersInCity) => Ok(()),
            Err(e) => Err(SimError::Internal(format!("reassignment: {e}"))),
        }
    }

    fn post_verify(&mut self, pk: PersonId) -> Result<(), SimError> {
        let epoch = self.epoch();
        let (city, adversary) = {
            let r = &self.engine.state.identities[&pk];
            (r.city, r.adversary)
        };
        self.verified_pool.entry(city).or_default().push(pk);
        self.all_verified.push(pk);
        self.invite_candidates.entry(city).or_default().push(pk);
        // Verifiers that rejected this identity earlier now have grounds to
        // call a re-check.
        if let Some(rejectors) = self.rejected_by.remove(&pk) {
            for v in rejectors {
                if !self.engine.state.is_corrupted(&v) {
                    self.suspicions.entry(v).or_default().insert(pk);
                }
            }
        }
        if let Some(attack) = self.attack.as_mut() {
            if let Some(a) = attack.attempts.get_mut(&pk) {
                a.verified_epoch = Some(epoch);
                a.outcome = AttemptOutcome::Succeeded;
            }
        }
        if adversary {
            return Ok(());
        }
        // Honest behavior: delegate trust to a city verifier, declare a
        // trust circle when enough peers exist.
        let state = &self.engine.state;
        let targets: Vec<PersonId> = state
            .verifiers
            .values()
            .filter(|v| {
                v.city == city
                    && v.pk != pk
                    && state
                        .identities
                        .get(&v.pk)
                        .is_some_and(|r| r.status == IdentityStatus::Verified)
            })
            .map(|v| v.pk)
            .collect();
        if !targets.is_empty() {
            let to = targets[self.rng.random_range(0..targets.len())];
            self.engine
                .delegate_trust(pk, to)
                .map_err(|e| SimError::Internal(format!("delegation: {e}")))?;
        }
        if self.engine.state.config.behavior.declare_trust_circles {
            let min = self.engine.state.config.protocol.trust_circle_min as usize;
            let mut members: Vec<PersonId> = Vec::with_capacity(min);
            let state = &self.engine.state;
            let pool = self.verified_pool.entry(city).or_default();
            // Sample distinct verified peers; give up quietly when the city
            // is too small.
            for _ in 0..min * 4 {
                if members.len() == min {
                    break;
                }
                let candidate = Self::pick_candidate(&mut self.rng, pool, |c| {
                    *c != pk
                        && state
                            .identities
                            .get(c)
                            .is_some_and(|r| r.status == IdentityStatus::Verified)
                });
                match candidate {
                    Some(c) => {
                        if !members.contains(&c) {
                            members.push(c);
                        }
                    }
                    None => break,
                }
            }
            if members.len() == min {
                self.engine
                    .declare_trust_circle(pk, members)
                    .map_err(|e| SimError::Internal(format!("trust circle: {e}")))?;
            }
        }
        Ok(())
    }

    // Phase 4: renewals first, hard expiries second.
    fn phase_renewals(&mut self) -> Result<(), SimError> {
        let epoch = self.epoch();
        let lead = self.engine.state.config.behavior.renewal_lead_epochs;
        let due: Vec<PersonId> = self
            .engine
            .state
            .verified_ids()
            .filter(|r| r.expiry_epoch.is_some_and(|x| x >= epoch && x - epoch <= lead))
            .map(|r| r.pk)
            .collect();
        for pk in due {
            let presented = self.live_sample(&pk);
            match self.engine.renew_identity(pk, &presented) {
                Ok(_) | Err(RegistryError::NoEligibleVerifiersInCity) => {}
                Err(RegistryError::AlreadyExpired) => {}
                Err(e) => return Err(SimError::Internal(format!("renewal: {e}"))),
            }
        }
        let expired: Vec<(PersonId, Digest)> = self
            .engine
            .state
            .verified_ids()
            .filter(|r| r.expiry_epoch.is_some_and(|x| x <= epoch))
            .map(|r| (r.pk, r.template_digest))
            .collect();
        for (pk, digest) in expired {
            self.engine
                .commit(EventBody::IdentityExpired { pk })
                .map_err(|e| SimError::Internal(e.to_string()))?;
            self.engine.bio.index.remove(&digest);
        }
        Ok(())
    }

    // Phase 5: suspicion-driven calls, random checks, adjudications.
    fn phase_audits(&mut self) -> Result<(), SimError> {
        let epoch = self.epoch();

        // (a) Verifiers call re-checks on identities they rejected that
        // were verified anyway.
        let suspicion_snapshot: Vec<(PersonId, Vec<PersonId>)> = self
            .suspicions
            .iter()
            .map(|(v, targets)| (*v, targets.iter().copied().collect()))
            .collect();
        for (verifier, targets) in suspicion_snapshot {
            for target in targets {
                if self.audit_called.contains(&(verifier, target)) {
                    self.suspicions.get_mut(&verifier).map(|s| s.remove(&target));
                    continue;
                }
                match self.engine.call_ajudge(verifier, target) {
                    Ok(_) => {
                        self.counters.calls_opened += 1;
                        self.audit_called.insert((verifier, target));
                        self.suspicions.get_mut(&verifier).map(|s| s.remove(&target));
                    }
                    Err(crate::audit::AuditError::QuotaExhausted) => break,
                    Err(crate::audit::AuditError::TargetNotVerified) => {
                        self.suspicions.get_mut(&verifier).map(|s| s.remove(&target));
                    }
                    Err(crate::audit::AuditError::NotAuthorized) => break,
                    Err(e) => return Err(SimError::Internal(format!("audit call: {e}"))),
                }
            }
        }

        // (b) Random system check.
        let rate = self.engine.state.config.protocol.random_check_rate;
        if rate > 0.0 && self.rng.random::<f64>() < rate {
            let state = &self.engine.state;
            let target = Self::pick_candidate(&mut self.rng, &mut self.all_verified, |c| {
                state.identities.get(c).is_some_and(|r| r.status == IdentityStatus::Verified)
            });
            if let Some(target) = target {
                if self.engine.call_ajudge(PersonId::SYSTEM, target).is_ok() {
                    self.counters.calls_opened += 1;
                }
            }
        }

        // (c) Adjudicate open calls whose target appears; expire the rest.
        let open: Vec<(u64, PersonId, u64, u64)> = self
            .engine
            .state
            .audit
            .open_calls()
            .map(|c| (c.id, c.target, c.called_epoch, c.deadline_epoch))
            .collect();
        for (call_id, target, called_epoch, deadline_epoch) in open {
            if epoch <= called_epoch {
                continue; // the target appears from the next epoch on
            }
            let target_state = self.engine.state.identities.get(&target);
            let verified =
                target_state.is_some_and(|r| r.status == IdentityStatus::Verified);
            let appears = verified && self.target_appears(&target);
            if appears && epoch <= deadline_epoch {
                let city = self.engine.state.identities[&target].city;
                let panel = self.engine.state.eligible_verifiers(city, epoch);
                if panel.is_empty() {
                    continue;
                }
                let samples: Vec<(PersonId, BiometricTemplate)> =
                    panel.iter().map(|v| (*v, self.live_sample(&target))).collect();
                match self.engine.adjudicate(call_id, &samples) {
                    Ok((crate::audit::AuditOutcome::PassedGenuine, _)) => {
                        self.counters.passed += 1;
                    }
                    Ok((crate::audit::AuditOutcome::FailedFake, settlement)) => {
                        self.counters.failed += 1;
                        if let Some(s) = settlement {
                            self.counters.tokens_slashed +=
                                s.slashes.iter().map(|(_, a)| a).sum::<u64>();
                        }
                        self.attack_mark(target, AttemptOutcome::Detected);
                    }
                    Ok((crate::audit::AuditOutcome::MissedDeadline, _)) => {}
                    Err(crate::audit::AuditError::NoPanel) => {}
                    Err(e) => return Err(SimError::Internal(format!("adjudication: {e}"))),
                }
            } else if epoch > deadline_epoch {
                self.engine
                    .miss_deadline(call_id)
                    .map_err(|e| SimError::Internal(format!("missed deadline: {e}")))?;
                self.counters.missed += 1;
                if verified {
                    self.attack_mark(target, AttemptOutcome::Detected);
                }
                if let Some(r) = self.engine.state.identities.get(&target) {
                    self.engine.bio.index.remove(&r.template_digest);
                }
            }
        }
        Ok(())
    }

    /// Whether an audited identity shows up for adjudication. Honest
    /// identities always appear, as do biometric duplicates (the real
    /// human passes). Mule-backed fabrications follow the plan's
    /// appearance policy; the rational default appears only behind a
    /// corrupt panel majority.
    fn target_appears(&self, target: &PersonId) -> bool {
        let record = &self.engine.state.identities[target];
        if !record.adversary {
            return true;
        }
        match self.humans.get(target) {
            Some(Human::Genuine(_)) => true,
            _ => {
                let policy = self
                    .engine
                    .state
                    .config
                    .adversary
                    .as_ref()
                    .map(|p| p.audit_appearance)
                    .unwrap_or_default();
                match policy {
                    crate::adversary::AuditAppearance::Always => true,
                    crate::adversary::AuditAppearance::Never => false,
                    crate::adversary::AuditAppearance::Rational => {
                        let panel =
                            self.engine.state.eligible_verifiers(record.city, self.epoch());
                        let corrupt =
                            panel.iter().filter(|v| self.engine.state.is_corrupted(v)).count();
                        2 * corrupt > panel.len()
                    }
                }
            }
        }
    }

    // Phase 6: governance.
    fn phase_governance(&mut self) -> Result<(), SimError> {
        let epoch = self.epoch();
        let period = self.engine.state.config.behavior.governance_period;
        if period == 0 {
            return Ok(());
        }
        let mut structure_changed = false;
        if epoch % period == 0 {
            match self.engine.form_communities() {
                Ok(_) => {
                    structure_changed = true;
                    let ids: Vec<u64> =
                        self.engine.state.governance.communities.keys().copied().collect();
                    for id in ids {
                        match self.engine.elect_representative(id) {
                            Ok(_) => {}
                            Err(GovernanceError::NoVotesCast(_)) => {}
                            Err(e) => {
                                return Err(SimError::Internal(format!("election: {e}")))
                            }
                        }
                    }
                }
                Err(GovernanceError::TooFewVerified) => {}
                Err(e) => return Err(SimError::Internal(format!("communities: {e}"))),
            }
        } else if !self.engine.state.governance.communities.is_empty() {
            let invalidated = self
                .engine
                .check_representative_validity()
                .map_err(|e| SimError::Internal(format!("validity: {e}")))?;
            if !invalidated.is_empty() {
                structure_changed = true;
                for id in invalidated {
                    match self.engine.elect_representative(id) {
                        Ok(_) => {}
                        Err(GovernanceError::NoVotesCast(_)) => {}
                        Err(e) => return Err(SimError::Internal(format!("re-election: {e}"))),
                    }
                }
            }
        }
        if structure_changed {
            self.engine
                .form_layers()
                .map_err(|e| SimError::Internal(format!("layers: {e}")))?;
        }

        let proposal_period = self.engine.state.config.behavior.proposal_period;
        if proposal_period > 0
            && epoch % proposal_period == 0
            && self.engine.state.governance.layers_populated()
        {
            let id = self
                .engine
                .open_proposal(ImportanceClass::Routine, None)
                .map_err(|e| SimError::Internal(format!("proposal: {e}")))?;
            let approval_rate = self.engine.state.config.behavior.approval_rate;
            let sizes = [
                self.engine.state.governance.layer1_reps().len() as u64,
                self.engine.state.governance.layer2.len() as u64,
                self.engine.state.governance.layer3.len() as u64,
            ];
            let mut rows = Vec::with_capacity(3);
            for size in sizes {
                let mut approve = 0;
                for _ in 0..size {
                    if self.rng.random::<f64>() < approval_rate {
                        approve += 1;
                    }
                }
                rows.push(LayerTally { approve, reject: size - approve, abstain: 0 });
            }
            let passed = self
                .engine
                .tally_proposal(id, rows)
                .map_err(|e| SimError::Internal(format!("tally: {e}")))?;
            if passed {
                self.counters.proposals_passed += 1;
            } else {
                self.counters.proposals_failed += 1;
            }
        }
        Ok(())
    }

    // Phase 7: organic verifier registration and re-staking.
    fn phase_economics(&mut self) -> Result<(), SimError> {
        let stake = self.engine.state.config.monetary.verifier_stake;
        let threshold = self.engine.state.config.protocol.verifier_trust_threshold;
        let candidates: Vec<(PersonId, bool)> = self
            .engine
            .state
            .verified_ids()
            .filter_map(|r| {
                let registered = self.engine.state.verifiers.contains_key(&r.pk);
                let staked = self
                    .engine
                    .state
                    .tokens
                    .lock_amount(&r.pk, LockReason::VerifierStake)
                    .is_some();
                let weight = self.engine.state.trust.weight(&r.pk);
                let balance = self.engine.state.tokens.balance(&r.pk);
                if !registered && weight >= threshold && balance >= stake {
                    Some((r.pk, false))
                } else if registered && !staked && balance >= stake {
                    Some((r.pk, true)) // slashed verifier re-staking
                } else {
                    None
                }
            })
            .collect();
        for (pk, registered) in candidates {
            self.engine
                .commit(EventBody::StakeLocked {
                    pk,
                    amount: stake,
                    reason: LockReason::VerifierStake,
                })
                .map_err(|e| SimError::Internal(e.to_string()))?;
            if !registered {
                self.engine
                    .commit(EventBody::VerifierRegistered { pk })
                    .map_err(|e| SimError::Internal(e.to_string()))?;
            }
        }
        Ok(())
    }

    fn snapshot_metrics(&mut self) -> MetricsRow {
        let state = &self.engine.state;
        let counts = state.status_counts();
        let supply = &state.tokens.supply;
        let row = MetricsRow {
            epoch: state.epoch,
            verified_count: counts.verified,
            pending: counts.pending,
            revoked: counts.revoked,
            expired: counts.expired,
            circulating: state.tokens.circulating(),
            minted: supply.minted(),
            forfeited: supply.forfeited,
            locked: state.tokens.total_locked(),
            gini_balance: state.tokens.gini(),
            calls_opened: self.counters.calls_opened,
            passed: self.counters.passed,
            failed: self.counters.failed,
            missed: self.counters.missed,
            tokens_slashed: self.counters.tokens_slashed,
            communities: state.governance.communities.len() as u64,
            representatives: state.governance.layer1_reps().len() as u64,
            proposals_passed: self.counters.proposals_passed,
            proposals_failed: self.counters.proposals_failed,
        };
        self.counters = EpochCounters::default();
        row
    }

    fn attack_mark(&mut self, pk: PersonId, outcome: AttemptOutcome) {
        let epoch = self.epoch();
        if let Some(attack) = self.attack.as_mut() {
            if let Some(a) = attack.attempts.get_mut(&pk) {
                a.outcome = outcome;
                if outcome == AttemptOutcome::Detected {
                    a.detected_epoch = Some(epoch);
                }
            }
        }
    }

    fn attack_note_assignment(&mut self, pk: PersonId) {
        let epoch = self.epoch();
        if let Some(attack) = self.attack.as_mut() {
            if let Some(a) = attack.attempts.get_mut(&pk) {
                if a.first_assign_epoch.is_none() {
                    a.first_assign_epoch = Some(epoch);
                }
            }
        }
    }

    fn finish(self, rows: Vec<MetricsRow>) -> RunOutput {
        let Simulation { engine, attack, .. } = self;
        let state = engine.state;
        let ledger = engine.ledger;
        let counts = state.status_counts();

        let (attack_report, attempt_log) = match (&state.config.adversary, attack) {
            (Some(plan), Some(driver)) => {
                let mut successes = 0u64;
                let mut detected = 0u64;
                let mut failed = driver.gate_failed;
                let mut forfeited = 0u64;
                let mut delays = Vec::new();
                let mut log = Vec::with_capacity(driver.attempts.len());
                for (pk, a) in &driver.attempts {
                    let surviving = state
                        .identities
                        .get(pk)
                        .is_some_and(|r| r.status == IdentityStatus::Verified);
                    match a.outcome {
                        AttemptOutcome::Succeeded => successes += 1,
                        AttemptOutcome::Detected => {
                            detected += 1;
                            if let Some(d) = a.detected_epoch {
                                delays.push(d - a.claim_epoch);
                            }
                            if a.verified_epoch.is_none() {
                                forfeited += a.stake; // stopped at dedup, stake lost
                            }
                        }
                        AttemptOutcome::Failed => {
                            failed += 1;
                            forfeited += a.stake;
                        }
                        AttemptOutcome::Pending => failed += 1, // stuck at run end
                    }
                    log.push(AttemptLogEntry {
                        record: match (a.first_assign_epoch, a.first_verdict_epoch) {
                            (Some(fa), Some(fv)) => Some(AttemptRecord {
                                pk: *pk,
                                first_assign_epoch: fa,
                                first_verdict_epoch: fv,
                                stake: a.stake,
                            }),
                            _ => None,
                        },
                        reached_verified: a.verified_epoch.is_some(),
                        surviving,
                    });
                }
                let slashed: u64 = ledger
                    .events()
                    .iter()
                    .filter_map(|e| match &e.body {
                        EventBody::StakeSlashed { pk, amount, .. }
                            if state.corrupted.contains(pk) =>
                        {
                            Some(*amount)
                        }
                        _ => None,
                    })
                    .sum();
                let bribes = state.corrupted.len() as u64 * plan.bribe_cost_per_verifier;
                let report = AttackReport {
                    strategy: plan.strategy,
                    collusion_size: state.corrupted.len() as u32,
                    attempts: driver.launched,
                    successes,
                    detected,
                    failed,
                    bribes_paid: bribes,
                    stakes_forfeited: forfeited,
                    stakes_slashed: slashed,
                    tokens_spent: bribes + forfeited + slashed,
                    time_to_detection: DetectionStats::from_delays(&delays),
                };
                (Some(report), log)
            }
            _ => (None, Vec::new()),
        };

        let report = RunReport {
            seed: state.config.seed,
            epochs: state.config.epochs,
            state_hash: state.state_hash(),
            ledger_height: ledger.height(),
            tau: state.config.biometric.tau.expect("tau resolved before genesis"),
            verified_count: counts.verified,
            pending: counts.pending,
            revoked: counts.revoked,
            expired: counts.expired,
            genesis_supply: state.tokens.supply.genesis_supply,
            minted: state.tokens.supply.minted(),
            forfeited: state.tokens.supply.forfeited,
            circulating: state.tokens.circulating(),
            locked: state.tokens.total_locked(),
            attack: attack_report,
        };
        RunOutput {
            ledger,
            metrics: MetricsReport { rows },
            report,
            state,
            attempt_log,
        }
    }
}

/// Collusion frontier over a shared attempt stream.
///
/// Runs the scenario once with the adversary at `k_min` corrupted
/// verifiers, then re-evaluates every recorded attempt under each larger
/// nested corrupt set with the same beacon and pool. Sharing one stream
/// keeps the empirical curve monotone in k. Requires a stationary pool:
/// no arrivals, no audits, no governance.
pub fn attack_sweep(
    config: &ScenarioConfig,
    k_min: u32,
    k_max: u32,
    trials: u64,
) -> Result<(Vec<FrontierRow>, Vec<AttackReport>), SimError> {
    let plan = config
        .adversary
        .clone()
        .ok_or_else(|| SimError::Config(ConfigError("adversary plan required".into())))?;
    if trials == 0 {
        return Err(SimError::Config(ConfigError("trials must be positive".into())));
    }
    if k_min > k_max {
        return Err(SimError::Config(ConfigError("empty sweep range".into())));
    }
    let stationary = config.cities.iter().all(|c| c.arrival_rate == 0.0)
        && config.protocol.random_check_rate == 0.0
        && config.protocol.recheck_quota == 0
        && config.behavior.governance_period == 0;
    if !stationary {
        return Err(SimError::Config(ConfigError(
            "sweeps need a stationary pool: zero arrivals, audits and governance".into(),
        )));
    }

    let mut run_config = config.clone();
    let parallelism = run_config.behavior.attack_parallelism.max(1) as u64;
    let slack = (run_config.protocol.certs_required + run_config.protocol.max_reassignments + 8)
        as u64;
    run_config.epochs = trials.div_ceil(parallelism) + slack;
    {
        let p = run_config.adversary.as_mut().expect("plan present");
        p.attempts = trials;
        p.corrupted_count = k_min;
    }
    run_config.validate()?;

    let run = run_scenario(&run_config)?;
    let creation_order = run
        .state
        .genesis_order
        .get(&plan.city)
        .cloned()
        .ok_or_else(|| SimError::Internal("no genesis verifiers in the attack city".into()))?;
    if (k_max as usize) > creation_order.len() {
        return Err(SimError::Config(ConfigError(format!(
            "k_max {} exceeds the city's {} verifiers",
            k_max,
            creation_order.len()
        ))));
    }
    let mut pool = creation_order.clone();
    pool.sort();

    // Beacon values for every epoch a counterfactual walk can touch.
    let max_epoch = run_config.epochs + slack;
    let mut beacon = RandomnessBeacon::genesis(run_config.seed);
    let mut beacon_values = vec![beacon.value];
    for _ in 0..max_epoch {
        beacon.next();
        beacon_values.push(beacon.value);
    }
    let beacon_at = |epoch: u64| beacon_values[epoch as usize];

    let certs_required = run_config.protocol.certs_required;
    let max_reassignments = run_config.protocol.max_reassignments;
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    for k in k_min..=k_max {
        let corrupted: BTreeSet<PersonId> = creation_order[..k as usize].iter().copied().collect();
        let mut successes = 0u64;
        let mut forfeited = 0u64;
        for entry in &run.attempt_log {
            let success = entry.record.as_ref().is_some_and(|record| {
                crate::adversary::walk_attempt(
                    record,
                    &pool,
                    beacon_at,
                    &corrupted,
                    certs_required,
                    max_reassignments,
                    plan.grinding,
                )
                .success
            });
            if success {
                successes += 1;
            } else if let Some(record) = &entry.record {
                forfeited += record.stake;
            }
        }
        if k == k_min {
            let live: u64 = run.attempt_log.iter().filter(|e| e.reached_verified).count() as u64;
            if live != successes {
                return Err(SimError::Internal(format!(
                    "counterfactual walk disagrees with the live run: {successes} vs {live}"
                )));
            }
        }
        let bribes = k as u64 * plan.bribe_cost_per_verifier;
        rows.push(FrontierRow {
            k,
            success_prob: successes as f64 / trials as f64,
            expected_cost: (bribes + forfeited) as f64,
        });
        reports.push(AttackReport {
            strategy: plan.strategy,
            collusion_size: k,
            attempts: trials,
            successes,
            detected: 0,
            failed: trials - successes,
            bribes_paid: bribes,
            stakes_forfeited: forfeited,
            stakes_slashed: 0,
            tokens_spent: bribes + forfeited,
            time_to_detection: DetectionStats::default(),
        });
    }
    Ok((rows, reports))
}

/// Run a full attack scenario and return its report alongside the outputs.
pub fn run_attack(config: &ScenarioConfig) -> Result<(AttackReport, RunOutput), SimError> {
    if config.adversary.is_none() {
        return Err(SimError::Config(ConfigError("adversary plan required".into())));
    }
    let run = run_scenario(config)?;
    let report = run.report.attack.clone().expect("plan present implies a report");
    Ok((report, run))
}
