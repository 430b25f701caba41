//! Hierarchical representative democracy: city communities elect layer-1
//! representatives by community-scoped trust delegations; layers 2 and 3
//! are chosen from grouped lower-layer representatives; proposals pass only
//! with a supermajority at every layer.

use crate::config::{CityId, ThresholdTable};
use crate::engine::Engine;
use crate::ledger::EventBody;
use crate::registry::PersonId;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GovernanceError {
    #[error("too few verified identities to form a community")]
    TooFewVerified,
    #[error("no votes cast in community {0}")]
    NoVotesCast(u64),
    #[error("one or more layers are empty")]
    LayersEmpty,
    #[error("proposal is not in the required state")]
    NotPassed,
    #[error("unknown proposal")]
    UnknownProposal,
    #[error("event rejected: {0}")]
    Internal(String),
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub enum ImportanceClass {
    Critical,
    Routine,
}

impl ThresholdTable {
    pub fn for_class(&self, class: ImportanceClass) -> [f64; 3] {
        match class {
            ImportanceClass::Critical => self.critical,
            ImportanceClass::Routine => self.routine,
        }
    }
}

/// Runtime-mutable parameters; the whitelist for governance changes.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub enum ParamTarget {
    CertsRequired,
    VerifierTrustThreshold,
    BaseStake,
    RecheckQuota,
    IdentityTtlEpochs,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Community {
    pub id: u64,
    pub city: CityId,
    /// Sorted ascending.
    pub members: Vec<PersonId>,
    pub representative: Option<PersonId>,
    pub election_support: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct CommunitySpec {
    pub id: u64,
    pub city: CityId,
    pub members: Vec<PersonId>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct LayerGroup {
    pub members: Vec<PersonId>,
    pub chosen: PersonId,
}

/// Per-layer ballot counts; non-voters are abstentions, so the approval
/// denominator is the full layer.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct LayerTally {
    pub approve: u64,
    pub reject: u64,
    pub abstain: u64,
}

impl LayerTally {
    pub fn size(&self) -> u64 {
        self.approve + self.reject + self.abstain
    }

    pub fn approval_ratio(&self) -> f64 {
        if self.size() == 0 {
            0.0
        } else {
            self.approve as f64 / self.size() as f64
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub enum ProposalStatus {
    Open,
    Passed,
    Failed,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Proposal {
    pub id: u64,
    pub importance: ImportanceClass,
    pub target: Option<(ParamTarget, u64)>,
    pub status: ProposalStatus,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
pub struct GovernanceState {
    pub communities: BTreeMap<u64, Community>,
    pub next_community_id: u64,
    pub layer2: Vec<LayerGroup>,
    pub layer3: Vec<LayerGroup>,
    pub proposals: BTreeMap<u64, Proposal>,
    pub next_proposal_id: u64,
}

impl GovernanceState {
    /// Layer-1 representatives in community-id order.
    pub fn layer1_reps(&self) -> Vec<PersonId> {
        self.communities.values().filter_map(|c| c.representative).collect()
    }

    pub fn layer2_reps(&self) -> Vec<PersonId> {
        self.layer2.iter().map(|g| g.chosen).collect()
    }

    pub fn layer3_reps(&self) -> Vec<PersonId> {
        self.layer3.iter().map(|g| g.chosen).collect()
    }

    pub fn is_layer3_rep(&self, pk: &PersonId) -> bool {
        self.layer3.iter().any(|g| g.chosen == *pk)
    }

    pub fn layers_populated(&self) -> bool {
        !self.layer1_reps().is_empty() && !self.layer2.is_empty() && !self.layer3.is_empty()
    }

    pub fn community_of(&self, pk: &PersonId) -> Option<&Community> {
        self.communities.values().find(|c| c.members.binary_search(pk).is_ok())
    }
}

/// Split a sorted member list into groups sized as evenly as possible
/// within [min, max]. Members below the minimum form no group. Group count
/// is ceil(n/max), so sizes land in [min, max] whenever n >= min.
pub fn partition_even(members: &[PersonId], min: usize, max: usize) -> Vec<Vec<PersonId>> {
    let n = members.len();
    if n < min {
        return Vec::new();
    }
    let groups = n.div_ceil(max);
    let base = n / groups;
    let remainder = n % groups;
    let mut out = Vec::with_capacity(groups);
    let mut start = 0;
    for g in 0..groups {
        let size = base + usize::from(g < remainder);
        out.push(members[start..start + size].to_vec());
        start += size;
    }
    out
}

/// Votes for each community member: delegations from fellow members.
pub fn community_votes(
    members: &[PersonId],
    delegation_of: impl Fn(&PersonId) -> Option<PersonId>,
) -> BTreeMap<PersonId, u64> {
    let mut votes = BTreeMap::new();
    for m in members {
        if let Some(to) = delegation_of(m) {
            if members.binary_search(&to).is_ok() {
                *votes.entry(to).or_insert(0) += 1;
            }
        }
    }
    votes
}

/// Plurality winner, ties broken by lowest key. None when nobody voted.
pub fn plurality_winner(votes: &BTreeMap<PersonId, u64>) -> Option<(PersonId, u64)> {
    votes
        .iter()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
        .map(|(pk, count)| (*pk, *count))
}

/// A representative stays valid while current support holds at least
/// ceil(retention * election support).
pub fn representative_valid(election_support: u64, current_support: u64, retention: f64) -> bool {
    let needed = (retention * election_support as f64).ceil() as u64;
    current_support >= needed
}

/// A proposal passes only if every layer clears its threshold. Abstentions
/// count in the denominator.
pub fn tally(layers: &[LayerTally], thresholds: [f64; 3]) -> Result<bool, GovernanceError> {
    if layers.len() != 3 || layers.iter().any(|l| l.size() == 0) {
        return Err(GovernanceError::LayersEmpty);
    }
    Ok(layers
        .iter()
        .zip(thresholds)
        .all(|(layer, threshold)| layer.approval_ratio() >= threshold))
}

impl Engine {
    /// Deterministically partition the verified population by city and pk
    /// order, replacing any previous communities. Representatives must be
    /// re-elected afterwards.
    pub fn form_communities(&mut self) -> Result<usize, GovernanceError> {
        let specs = self.state.compute_community_partition();
        if specs.is_empty() {
            return Err(GovernanceError::TooFewVerified);
        }
        let count = specs.len();
        self.commit(EventBody::CommunitiesFormed { communities: specs })
            .map_err(|e| GovernanceError::Internal(e.to_string()))?;
        Ok(count)
    }

    /// Elect a representative by plurality of community-scoped delegations.
    pub fn elect_representative(&mut self, community_id: u64) -> Result<PersonId, GovernanceError> {
        let community = self
            .state
            .governance
            .communities
            .get(&community_id)
            .ok_or(GovernanceError::Internal(format!("no community {community_id}")))?;
        let votes = community_votes(&community.members, |m| {
            self.state.trust.delegations.get(m).map(|d| d.to)
        });
        let (winner, support) =
            plurality_winner(&votes).ok_or(GovernanceError::NoVotesCast(community_id))?;
        self.commit(EventBody::RepresentativeElected {
            community_id,
            representative: winner,
            support,
        })
        .map_err(|e| GovernanceError::Internal(e.to_string()))?;
        Ok(winner)
    }

    /// Invalidate representatives whose retained support fell below the
    /// threshold; they stand for re-election at the next governance step.
    pub fn check_representative_validity(&mut self) -> Result<Vec<u64>, GovernanceError> {
        let retention = self.state.config.protocol.rep_retention;
        let mut invalidated = Vec::new();
        let snapshot: Vec<(u64, PersonId, u64, u64)> = self
            .state
            .governance
            .communities
            .values()
            .filter_map(|c| {
                c.representative.map(|rep| {
                    let votes = community_votes(&c.members, |m| {
                        self.state.trust.delegations.get(m).map(|d| d.to)
                    });
                    let current = votes.get(&rep).copied().unwrap_or(0);
                    (c.id, rep, c.election_support, current)
                })
            })
            .collect();
        for (id, rep, elected_with, current) in snapshot {
            if !representative_valid(elected_with, current, retention) {
                self.commit(EventBody::RepresentativeInvalidated {
                    community_id: id,
                    representative: rep,
                    support: current,
                })
                .map_err(|e| GovernanceError::Internal(e.to_string()))?;
                invalidated.push(id);
            }
        }
        Ok(invalidated)
    }

    /// Rebuild layers 2 and 3 from the current layer-1 representatives.
    pub fn form_layers(&mut self) -> Result<(), GovernanceError> {
        let (layer2, layer3) = self.state.compute_layers();
        self.commit(EventBody::LayersFormed { layer2, layer3 })
            .map_err(|e| GovernanceError::Internal(e.to_string()))?;
        Ok(())
    }

    pub fn open_proposal(
        &mut self,
        importance: ImportanceClass,
        target: Option<(ParamTarget, u64)>,
    ) -> Result<u64, GovernanceError> {
        if !self.state.governance.layers_populated() {
            return Err(GovernanceError::LayersEmpty);
        }
        let id = self.state.governance.next_proposal_id;
        self.commit(EventBody::ProposalOpened { proposal_id: id, importance, target })
            .map_err(|e| GovernanceError::Internal(e.to_string()))?;
        Ok(id)
    }

    /// Close the vote with explicit per-layer counts; a passed proposal
    /// with a parameter target takes effect at the next epoch boundary.
    pub fn tally_proposal(
        &mut self,
        proposal_id: u64,
        layers: Vec<LayerTally>,
    ) -> Result<bool, GovernanceError> {
        let proposal = self
            .state
            .governance
            .proposals
            .get(&proposal_id)
            .ok_or(GovernanceError::UnknownProposal)?;
        if proposal.status != ProposalStatus::Open {
            return Err(GovernanceError::NotPassed);
        }
        let thresholds = self.state.config.protocol.thresholds.for_class(proposal.importance);
        let passed = tally(&layers, thresholds)?;
        let target = proposal.target;
        self.commit(EventBody::ProposalTallied { proposal_id, layers, passed })
            .map_err(|e| GovernanceError::Internal(e.to_string()))?;
        if passed {
            if let Some((param, value)) = target {
                let effective_epoch = self.state.epoch + 1;
                self.commit(EventBody::ParameterChanged {
                    proposal_id,
                    param,
                    value,
                    effective_epoch,
                })
                .map_err(|e| GovernanceError::Internal(e.to_string()))?;
            }
        }
        Ok(passed)
    }
}
