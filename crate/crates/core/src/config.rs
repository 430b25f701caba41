//! Scenario configuration: every tunable of a simulation run, loaded from
//! JSON and validated before the engine starts. The effective config (with
//! the calibrated match threshold filled in) is recorded in the first
//! ledger event, so a log is self-contained for replay.

use crate::adversary::AdversaryPlan;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type CityId = u32;

#[derive(Debug, Error)]
#[error("invalid config: {0}")]
pub struct ConfigError(pub String);

fn err(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub epochs: u64,
    pub cities: Vec<CityConfig>,
    #[serde(default)]
    pub protocol: ProtocolParams,
    #[serde(default)]
    pub monetary: MonetaryParams,
    #[serde(default)]
    pub biometric: BiometricParams,
    #[serde(default)]
    pub behavior: BehaviorParams,
    #[serde(default)]
    pub adversary: Option<AdversaryPlan>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CityConfig {
    pub city: CityId,
    pub genesis_verifiers: u32,
    /// Mean honest arrivals per epoch (Poisson unless jitter is disabled).
    pub arrival_rate: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolParams {
    /// Certificates needed to reach Verified.
    pub certs_required: u32,
    /// Reassignments a claimant may request after rejections.
    pub max_reassignments: u32,
    /// Trust tokens required for verifier eligibility.
    pub verifier_trust_threshold: u64,
    /// Invitations granted to each newly verified identity.
    pub invitations_per_user: u32,
    /// Sponsorships per verifier per sponsor window.
    pub sponsor_quota: u32,
    pub sponsor_window_epochs: u64,
    /// Identity re-checks per caller per quota window.
    pub recheck_quota: u32,
    pub quota_window_epochs: u64,
    /// Epochs a called identity has to appear for adjudication.
    pub ajudge_deadline_epochs: u64,
    /// Trust suspension length applied to slashed verifiers.
    pub suspension_epochs: u64,
    pub identity_ttl_epochs: u64,
    pub trust_circle_min: u32,
    pub community_min: u32,
    pub community_max: u32,
    pub layer2_group_min: u32,
    pub layer2_group_max: u32,
    pub layer3_group_min: u32,
    pub layer3_group_max: u32,
    pub thresholds: ThresholdTable,
    /// Fraction of election-time support a representative must retain.
    pub rep_retention: f64,
    /// Per-epoch probability of a system-initiated audit call.
    pub random_check_rate: f64,
    /// Entry gates arrivals may use, in preference order.
    pub allowed_gates: Vec<GateKind>,
}

impl Default for ProtocolParams {
    fn default() -> Self {
        ProtocolParams {
            certs_required: 3,
            max_reassignments: 3,
            verifier_trust_threshold: 10,
            invitations_per_user: 2,
            sponsor_quota: 5,
            sponsor_window_epochs: 30,
            recheck_quota: 2,
            quota_window_epochs: 4,
            ajudge_deadline_epochs: 2,
            suspension_epochs: 26,
            identity_ttl_epochs: 52,
            trust_circle_min: 5,
            community_min: 50,
            community_max: 100,
            layer2_group_min: 30,
            layer2_group_max: 40,
            layer3_group_min: 20,
            layer3_group_max: 30,
            thresholds: ThresholdTable::default(),
            rep_retention: 0.8,
            random_check_rate: 0.0,
            allowed_gates: vec![GateKind::Invitation, GateKind::VerifierSponsor, GateKind::Stake],
        }
    }
}

/// Per-layer approval thresholds by proposal importance.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ThresholdTable {
    pub critical: [f64; 3],
    pub routine: [f64; 3],
}

impl Default for ThresholdTable {
    fn default() -> Self {
        ThresholdTable {
            critical: [0.68, 0.85, 0.95],
            routine: [0.51, 0.60, 0.66],
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub enum GateKind {
    Invitation,
    Stake,
    VerifierSponsor,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct MonetaryParams {
    /// Fairness horizon in users: genesis supply equals `a * x`.
    pub a: u64,
    /// Tokens minted per newly verified user.
    pub x: u64,
    pub base_stake: u64,
    pub verifier_stake: u64,
    pub ajudge_reward: u64,
    /// Explicit investor allocations. When empty, everything left of the
    /// genesis supply after verifier endowments and adversary funding goes
    /// to a single derived investor account.
    pub ico_allocations: Vec<u64>,
    /// Extra balance allocated to each genesis verifier on top of the
    /// verifier stake.
    pub genesis_verifier_extra: u64,
}

impl Default for MonetaryParams {
    fn default() -> Self {
        MonetaryParams {
            a: 1000,
            x: 100,
            base_stake: 10,
            verifier_stake: 100,
            ajudge_reward: 5,
            ico_allocations: Vec::new(),
            genesis_verifier_extra: 0,
        }
    }
}

impl MonetaryParams {
    pub fn genesis_supply(&self) -> u64 {
        self.a.checked_mul(self.x).expect("genesis supply overflows u64")
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct BiometricParams {
    pub template_dim: usize,
    pub n_modalities: usize,
    pub k_required: usize,
    pub genuine_noise_sigma: f64,
    /// Calibration fails if the achieved equal error rate exceeds this.
    pub target_eer: f64,
    /// Match threshold. Calibrated from the seed when absent.
    pub tau: Option<f64>,
    pub calibration_pairs: u64,
}

impl Default for BiometricParams {
    fn default() -> Self {
        BiometricParams {
            template_dim: 16,
            n_modalities: 4,
            k_required: 3,
            genuine_noise_sigma: 0.08,
            target_eer: 0.02,
            tau: None,
            calibration_pairs: 20_000,
        }
    }
}

/// Knobs for the behavioral model of honest actors; these shape scenario
/// dynamics but not protocol rules.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct BehaviorParams {
    /// Verified identities renew when this close to expiry.
    pub renewal_lead_epochs: u64,
    /// Epochs between community (re)formations; 0 disables governance.
    pub governance_period: u64,
    /// Epochs between synthetic proposals; 0 disables them.
    pub proposal_period: u64,
    /// Probability a representative approves a synthetic proposal.
    pub approval_rate: f64,
    /// Newly verified identities declare a trust circle when possible.
    pub declare_trust_circles: bool,
    /// Draw arrival counts from a Poisson; otherwise use the rounded rate.
    pub arrival_jitter: bool,
    /// Arrivals stop after this epoch (None = never).
    pub arrival_stop_epoch: Option<u64>,
    /// Adversary claims submitted per epoch.
    pub attack_parallelism: u32,
}

impl Default for BehaviorParams {
    fn default() -> Self {
        BehaviorParams {
            renewal_lead_epochs: 2,
            governance_period: 8,
            proposal_period: 0,
            approval_rate: 0.9,
            declare_trust_circles: true,
            arrival_jitter: true,
            arrival_stop_epoch: None,
            attack_parallelism: 200,
        }
    }
}

impl ScenarioConfig {
    /// Minimal config used by tests and as a starting point for builders.
    pub fn minimal(seed: u64, epochs: u64) -> Self {
        ScenarioConfig {
            seed,
            epochs,
            cities: vec![CityConfig { city: 0, genesis_verifiers: 10, arrival_rate: 0.0 }],
            protocol: ProtocolParams::default(),
            monetary: MonetaryParams::default(),
            biometric: BiometricParams::default(),
            behavior: BehaviorParams::default(),
            adversary: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: ScenarioConfig =
            serde_json::from_str(text).map_err(|e| err(format!("schema: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.cities.is_empty() {
            return Err(err("at least one city required"));
        }
        {
            let mut seen = std::collections::BTreeSet::new();
            for c in &self.cities {
                if !seen.insert(c.city) {
                    return Err(err(format!("duplicate city id {}", c.city)));
                }
                if !c.arrival_rate.is_finite() || c.arrival_rate < 0.0 {
                    return Err(err("arrival_rate must be finite and non-negative"));
                }
                if c.genesis_verifiers < self.protocol.certs_required {
                    return Err(err(format!(
                        "city {}: {} genesis verifiers cannot issue {} distinct certificates",
                        c.city, c.genesis_verifiers, self.protocol.certs_required
                    )));
                }
            }
        }
        let p = &self.protocol;
        if p.certs_required == 0 {
            return Err(err("certs_required must be at least 1"));
        }
        if p.trust_circle_min < 5 {
            return Err(err("trust_circle_min below the protocol minimum of 5"));
        }
        if p.community_min < 2 || p.community_min > p.community_max {
            return Err(err("community bounds must satisfy 2 <= min <= max"));
        }
        if p.layer2_group_min < 2 || p.layer2_group_min > p.layer2_group_max {
            return Err(err("layer2 group bounds must satisfy 2 <= min <= max"));
        }
        if p.layer3_group_min < 2 || p.layer3_group_min > p.layer3_group_max {
            return Err(err("layer3 group bounds must satisfy 2 <= min <= max"));
        }
        for t in [&p.thresholds.critical, &p.thresholds.routine] {
            if t.iter().any(|v| !v.is_finite() || *v < 0.0 || *v > 1.0) {
                return Err(err("thresholds must lie in [0,1]"));
            }
            if !(t[0] <= t[1] && t[1] <= t[2]) {
                return Err(err("thresholds must be non-decreasing across layers"));
            }
        }
        if !(0.0..=1.0).contains(&p.rep_retention) {
            return Err(err("rep_retention must lie in [0,1]"));
        }
        if !(0.0..=1.0).contains(&p.random_check_rate) {
            return Err(err("random_check_rate must lie in [0,1]"));
        }
        if p.allowed_gates.is_empty() {
            return Err(err("at least one entry gate must be allowed"));
        }
        if p.sponsor_window_epochs == 0 || p.quota_window_epochs == 0 {
            return Err(err("quota windows must be positive"));
        }
        let m = &self.monetary;
        if m.a == 0 || m.x == 0 {
            return Err(err("monetary a and x must be positive"));
        }
        if m.base_stake == 0 || m.verifier_stake == 0 {
            return Err(err("stakes must be positive"));
        }
        m.a.checked_mul(m.x).ok_or_else(|| err("a*x overflows"))?;
        let b = &self.biometric;
        if b.template_dim == 0 || b.n_modalities == 0 {
            return Err(err("biometric dimensions must be positive"));
        }
        if b.k_required == 0 || b.k_required > b.n_modalities {
            return Err(err("k_required must lie in [1, n_modalities]"));
        }
        if !b.genuine_noise_sigma.is_finite() || b.genuine_noise_sigma < 0.0 {
            return Err(err("genuine_noise_sigma must be finite and non-negative"));
        }
        if let Some(tau) = b.tau {
            if !tau.is_finite() || tau <= 0.0 {
                return Err(err("tau must be finite and positive"));
            }
        }
        if !(0.0..=0.5).contains(&b.target_eer) {
            return Err(err("target_eer must lie in [0, 0.5]"));
        }
        if b.tau.is_none() && b.calibration_pairs < 1000 {
            return Err(err("calibration_pairs must be at least 1000"));
        }
        if !(0.0..=1.0).contains(&self.behavior.approval_rate) {
            return Err(err("approval_rate must lie in [0,1]"));
        }
        if let Some(plan) = &self.adversary {
            plan.validate().map_err(|e| err(format!("adversary: {e}")))?;
            let total_verifiers: u64 = self
                .cities
                .iter()
                .find(|c| c.city == plan.city)
                .map(|c| c.genesis_verifiers as u64)
                .ok_or_else(|| err(format!("adversary city {} not configured", plan.city)))?;
            if plan.corrupted_count as u64 > total_verifiers {
                return Err(err("corrupted_count exceeds the city's genesis verifiers"));
            }
        }
        // Genesis allocation feasibility mirrors genesis_allocate's checks.
        let verifier_count: u64 = self.cities.iter().map(|c| c.genesis_verifiers as u64).sum();
        let endowment = m
            .verifier_stake
            .checked_add(m.genesis_verifier_extra)
            .ok_or_else(|| err("verifier endowment overflows"))?;
        let reserved = verifier_count
            .checked_mul(endowment)
            .and_then(|v| v.checked_add(self.adversary.as_ref().map_or(0, |p| p.funding)))
            .ok_or_else(|| err("genesis reservations overflow"))?;
        if reserved > m.genesis_supply() {
            return Err(err(format!(
                "genesis supply {} cannot cover verifier endowments and adversary funding {}",
                m.genesis_supply(),
                reserved
            )));
        }
        if !m.ico_allocations.is_empty() {
            let ico: u64 = m
                .ico_allocations
                .iter()
                .try_fold(0u64, |acc, v| acc.checked_add(*v))
                .ok_or_else(|| err("ico allocations overflow"))?;
            if reserved + ico != m.genesis_supply() {
                return Err(err(
                    "explicit ico_allocations plus reservations must equal a*x exactly",
                ));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_validates() {
        ScenarioConfig::minimal(1, 10).validate().unwrap();
    }

    #[test]
    fn rejects_k_above_modalities() {
        let mut cfg = ScenarioConfig::minimal(1, 10);
        cfg.biometric.k_required = 5;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn rejects_too_few_genesis_verifiers() {
        let mut cfg = ScenarioConfig::minimal(1, 10);
        cfg.cities[0].genesis_verifiers = 2;
        let e = cfg.validate().unwrap_err();
        assert!(e.to_string().contains("genesis verifiers"));
    }

    #[test]
    fn rejects_decreasing_thresholds() {
        let mut cfg = ScenarioConfig::minimal(1, 10);
        cfg.protocol.thresholds.critical = [0.9, 0.8, 0.95];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn rejects_unknown_fields() {
        let text = r#"{"seed":1,"epochs":1,"cities":[],"bogus":true}"#;
        assert!(ScenarioConfig::from_json(text).is_err());
    }

    #[test]
    fn json_round_trip_is_stable() {
        let cfg = ScenarioConfig::minimal(7, 3);
        let s1 = crate::hashing::canonical_json(&cfg);
        let back: ScenarioConfig = serde_json::from_str(&s1).unwrap();
        assert_eq!(cfg, back);
        assert_eq!(s1, crate::hashing::canonical_json(&back));
    }
}
