//! Native token accounting in integer base units: genesis sale, per-user
//! minting split between the user and her certifiers, stake locks, slashes,
//! forfeits, and exact conservation.

use crate::registry::PersonId;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TokenError {
    #[error("genesis allocations sum to {got}, expected {expected}")]
    AllocationMismatch { expected: u64, got: u64 },
    #[error("genesis supply already allocated")]
    AlreadyAllocated,
    #[error("insufficient balance: need {need}, have {have}")]
    InsufficientBalance { need: u64, have: u64 },
    #[error("no active lock for this reason")]
    NoActiveLock,
    #[error("a lock with this reason already exists")]
    LockExists,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq, PartialOrd, Ord)]
pub enum LockReason {
    /// Stake-gated entry; returned on verification, else locked forever.
    EntryStake,
    /// Service stake every verifier posts; slashable.
    VerifierStake,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Allocation {
    pub account: PersonId,
    pub amount: u64,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
pub struct TokenAccount {
    pub balance: u64,
    pub locked: u64,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
pub struct SupplyStats {
    pub genesis_supply: u64,
    /// Minted by verification events; grows by exactly x per verification.
    pub minted_verification: u64,
    /// Minted as audit rewards; tracked apart so the fairness crossover
    /// stays exact.
    pub minted_rewards: u64,
    /// Stakes removed from circulation permanently.
    pub forfeited: u64,
}

impl SupplyStats {
    pub fn minted(&self) -> u64 {
        self.minted_verification + self.minted_rewards
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
pub struct TokenState {
    pub accounts: BTreeMap<PersonId, TokenAccount>,
    /// Active locks per account and reason.
    pub locks: BTreeMap<PersonId, BTreeMap<LockReason, u64>>,
    pub supply: SupplyStats,
    /// Running sum of balance + locked across accounts, kept in lock-step
    /// so conservation is checkable after every event in O(1).
    pub total_held: u128,
}

impl TokenState {
    pub fn balance(&self, pk: &PersonId) -> u64 {
        self.accounts.get(pk).map_or(0, |a| a.balance)
    }

    pub fn locked(&self, pk: &PersonId) -> u64 {
        self.accounts.get(pk).map_or(0, |a| a.locked)
    }

    pub fn lock_amount(&self, pk: &PersonId, reason: LockReason) -> Option<u64> {
        self.locks.get(pk).and_then(|m| m.get(&reason)).copied()
    }

    pub fn total_locked(&self) -> u128 {
        self.accounts.values().map(|a| a.locked as u128).sum()
    }

    pub fn circulating(&self) -> u128 {
        self.supply.genesis_supply as u128 + self.supply.minted() as u128
            - self.supply.forfeited as u128
            - self.total_locked()
    }

    /// Σ(balance + locked) must equal genesis + minted − forfeited.
    pub fn conservation_holds(&self) -> bool {
        let expected = self.supply.genesis_supply as u128 + self.supply.minted() as u128
            - self.supply.forfeited as u128;
        self.total_held == expected
    }

    /// Full recomputation of the running total, for invariant checks.
    pub fn recomputed_total_held(&self) -> u128 {
        self.accounts.values().map(|a| a.balance as u128 + a.locked as u128).sum()
    }

    pub fn genesis_allocate(
        &mut self,
        allocations: &[Allocation],
        genesis_supply: u64,
    ) -> Result<(), TokenError> {
        if self.supply.genesis_supply != 0 {
            return Err(TokenError::AlreadyAllocated);
        }
        let got = allocations
            .iter()
            .map(|a| a.amount as u128)
            .sum::<u128>();
        if got != genesis_supply as u128 {
            return Err(TokenError::AllocationMismatch {
                expected: genesis_supply,
                got: got.min(u64::MAX as u128) as u64,
            });
        }
        for a in allocations {
            self.accounts.entry(a.account).or_default().balance += a.amount;
        }
        self.supply.genesis_supply = genesis_supply;
        self.total_held += genesis_supply as u128;
        Ok(())
    }

    pub fn credit_minted_verification(&mut self, credits: &[Allocation]) {
        for c in credits {
            self.accounts.entry(c.account).or_default().balance += c.amount;
            self.supply.minted_verification += c.amount;
            self.total_held += c.amount as u128;
        }
    }

    pub fn credit_minted_reward(&mut self, pk: PersonId, amount: u64) {
        self.accounts.entry(pk).or_default().balance += amount;
        self.supply.minted_rewards += amount;
        self.total_held += amount as u128;
    }

    pub fn lock(&mut self, pk: PersonId, reason: LockReason, amount: u64) -> Result<(), TokenError> {
        if self.lock_amount(&pk, reason).is_some() {
            return Err(TokenError::LockExists);
        }
        let account = self.accounts.entry(pk).or_default();
        if account.balance < amount {
            return Err(TokenError::InsufficientBalance { need: amount, have: account.balance });
        }
        account.balance -= amount;
        account.locked += amount;
        self.locks.entry(pk).or_default().insert(reason, amount);
        Ok(())
    }

    fn take_lock(&mut self, pk: &PersonId, reason: LockReason) -> Result<u64, TokenError> {
        let locks = self.locks.get_mut(pk).ok_or(TokenError::NoActiveLock)?;
        let amount = locks.remove(&reason).ok_or(TokenError::NoActiveLock)?;
        if locks.is_empty() {
            self.locks.remove(pk);
        }
        let account = self.accounts.get_mut(pk).expect("locked account exists");
        debug_assert!(account.locked >= amount);
        account.locked -= amount;
        Ok(amount)
    }

    pub fn release(&mut self, pk: PersonId, reason: LockReason) -> Result<u64, TokenError> {
        let amount = self.take_lock(&pk, reason)?;
        self.accounts.get_mut(&pk).expect("account exists").balance += amount;
        Ok(amount)
    }

    /// Remove a lock from circulation permanently.
    pub fn forfeit(&mut self, pk: PersonId, reason: LockReason) -> Result<u64, TokenError> {
        let amount = self.take_lock(&pk, reason)?;
        self.supply.forfeited += amount;
        self.total_held -= amount as u128;
        Ok(amount)
    }

    /// Transfer a lock to a beneficiary's balance.
    pub fn slash_to(
        &mut self,
        pk: PersonId,
        reason: LockReason,
        beneficiary: PersonId,
    ) -> Result<u64, TokenError> {
        let amount = self.take_lock(&pk, reason)?;
        self.accounts.entry(beneficiary).or_default().balance += amount;
        Ok(amount)
    }

    /// Move an account and its locks to a new key after recovery.
    pub fn rekey(&mut self, old: &PersonId, new: PersonId) {
        if let Some(acct) = self.accounts.remove(old) {
            let target = self.accounts.entry(new).or_default();
            target.balance += acct.balance;
            target.locked += acct.locked;
        }
        if let Some(locks) = self.locks.remove(old) {
            self.locks.entry(new).or_default().extend(locks);
        }
    }

    /// Gini coefficient over balance + locked, in [0, 1].
    pub fn gini(&self) -> f64 {
        let mut held: Vec<u128> =
            self.accounts.values().map(|a| a.balance as u128 + a.locked as u128).collect();
        let n = held.len();
        if n == 0 {
            return 0.0;
        }
        held.sort_unstable();
        let total: u128 = held.iter().sum();
        if total == 0 {
            return 0.0;
        }
        let mut weighted = 0.0f64;
        for (i, h) in held.iter().enumerate() {
            weighted += (2.0 * (i as f64 + 1.0) - n as f64 - 1.0) * *h as f64;
        }
        weighted / (n as f64 * total as f64)
    }
}

/// Split the per-user mint equally among the user and her certifiers, with
/// the integer remainder going to the user.
pub fn mint_credits(x: u64, user: PersonId, verifiers: &[PersonId]) -> Vec<Allocation> {
    let shares = verifiers.len() as u64 + 1;
    let each = x / shares;
    let remainder = x % shares;
    let mut credits = vec![Allocation { account: user, amount: each + remainder }];
    credits.extend(verifiers.iter().map(|v| Allocation { account: *v, amount: each }));
    credits
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pk(b: u8) -> PersonId {
        PersonId([b; 32])
    }

    fn alloc(b: u8, amount: u64) -> Allocation {
        Allocation { account: pk(b), amount }
    }

    #[test]
    fn genesis_allocation_exact_sum() {
        let mut t = TokenState::default();
        t.genesis_allocate(&[alloc(1, 100_000)], 100_000).unwrap();
        assert_eq!(t.balance(&pk(1)), 100_000);
        assert!(t.conservation_holds());
    }

    #[test]
    fn genesis_allocation_mismatch_rejected() {
        let mut t = TokenState::default();
        let err = t.genesis_allocate(&[alloc(1, 99_999)], 100_000).unwrap_err();
        assert_eq!(err, TokenError::AllocationMismatch { expected: 100_000, got: 99_999 });
    }

    #[test]
    fn mint_split_is_equal_with_remainder_to_user() {
        let vs = [pk(2), pk(3), pk(4)];
        let credits = mint_credits(100, pk(1), &vs);
        assert_eq!(credits.iter().map(|c| c.amount).collect::<Vec<_>>(), [25, 25, 25, 25]);
        let credits = mint_credits(10, pk(1), &vs);
        assert_eq!(credits[0], alloc(1, 4));
        assert_eq!(credits[1].amount, 2);
        assert_eq!(credits.iter().map(|c| c.amount).sum::<u64>(), 10);
    }

    #[test]
    fn lock_release_round_trip_restores_balance() {
        let mut t = TokenState::default();
        t.genesis_allocate(&[alloc(1, 50)], 50).unwrap();
        t.lock(pk(1), LockReason::EntryStake, 30).unwrap();
        assert_eq!(t.balance(&pk(1)), 20);
        assert_eq!(t.locked(&pk(1)), 30);
        assert!(t.conservation_holds());
        let released = t.release(pk(1), LockReason::EntryStake).unwrap();
        assert_eq!(released, 30);
        assert_eq!(t.balance(&pk(1)), 50);
        assert!(t.conservation_holds());
    }

    #[test]
    fn lock_requires_balance_and_no_duplicate() {
        let mut t = TokenState::default();
        t.genesis_allocate(&[alloc(1, 10)], 10).unwrap();
        assert!(matches!(
            t.lock(pk(1), LockReason::EntryStake, 11),
            Err(TokenError::InsufficientBalance { .. })
        ));
        t.lock(pk(1), LockReason::EntryStake, 5).unwrap();
        assert_eq!(t.lock(pk(1), LockReason::EntryStake, 1), Err(TokenError::LockExists));
    }

    #[test]
    fn forfeit_reduces_circulation() {
        let mut t = TokenState::default();
        t.genesis_allocate(&[alloc(1, 40)], 40).unwrap();
        t.lock(pk(1), LockReason::EntryStake, 15).unwrap();
        t.forfeit(pk(1), LockReason::EntryStake).unwrap();
        assert_eq!(t.balance(&pk(1)), 25);
        assert_eq!(t.circulating(), 25);
        assert!(t.conservation_holds());
        assert_eq!(t.release(pk(1), LockReason::EntryStake), Err(TokenError::NoActiveLock));
    }

    #[test]
    fn slash_moves_stake_to_beneficiary() {
        let mut t = TokenState::default();
        t.genesis_allocate(&[alloc(1, 100)], 100).unwrap();
        t.lock(pk(1), LockReason::VerifierStake, 100).unwrap();
        let got = t.slash_to(pk(1), LockReason::VerifierStake, pk(9)).unwrap();
        assert_eq!(got, 100);
        assert_eq!(t.balance(&pk(9)), 100);
        assert_eq!(t.locked(&pk(1)), 0);
        assert!(t.conservation_holds());
    }

    #[test]
    fn gini_zero_when_equal_and_positive_when_skewed() {
        let mut t = TokenState::default();
        t.genesis_allocate(&[alloc(1, 50), alloc(2, 50)], 100).unwrap();
        assert!(t.gini().abs() < 1e-12);
        let mut skewed = TokenState::default();
        skewed.genesis_allocate(&[alloc(1, 99), alloc(2, 1)], 100).unwrap();
        assert!(skewed.gini() > 0.4);
    }
}
