//! Synthetic multi-modal biometric model.
//!
//! Each person is a set of latent unit vectors, one per modality; a reading
//! is the latent plus i.i.d. Gaussian noise. Matching thresholds Euclidean
//! distance, fused k-of-n across modalities. The only externally fixed
//! quantity is the per-modality equal error rate, reached by calibrating
//! the threshold against seeded Monte Carlo pairs.

use crate::hashing::{hash_canonical, Digest};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum BiometricError {
    #[error("modality mismatch: ids or dimensions differ")]
    ModalityMismatch,
    #[error("calibration failed: equal error rate {achieved:.4} exceeds maximum {maximum:.4}")]
    CalibrationFailed { achieved: f64, maximum: f64 },
}

/// One reading of one modality.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ModalitySample {
    pub modality_id: usize,
    pub vector: Vec<f64>,
}

/// One reading per modality; the digest is what ledgers and indexes key on.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct BiometricTemplate {
    pub samples: Vec<ModalitySample>,
}

impl BiometricTemplate {
    pub fn digest(&self) -> Digest {
        hash_canonical(&self.samples)
    }

    pub fn n_modalities(&self) -> usize {
        self.samples.len()
    }
}

/// A person's latent biometrics: the unobservable ground truth readings
/// are noisy copies of.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruthBiometric {
    pub latents: Vec<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct MatchPolicy {
    /// Euclidean distance threshold per modality.
    pub tau: f64,
    pub n_modalities: usize,
    /// Modalities that must match for templates to match.
    pub k_required: usize,
    pub genuine_noise_sigma: f64,
}

fn std_normal(rng: &mut impl Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn unit_normal_vector(dim: usize, rng: &mut impl Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| std_normal(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Draw a fresh person: one unit-normalized standard-normal latent per
/// modality.
pub fn generate_person_ground_truth(
    dim: usize,
    n_modalities: usize,
    rng: &mut impl Rng,
) -> GroundTruthBiometric {
    GroundTruthBiometric {
        latents: (0..n_modalities).map(|_| unit_normal_vector(dim, rng)).collect(),
    }
}

/// A fresh reading of a person: latent plus per-coordinate Gaussian noise.
pub fn sample_template(
    truth: &GroundTruthBiometric,
    sigma: f64,
    rng: &mut impl Rng,
) -> BiometricTemplate {
    let samples = truth
        .latents
        .iter()
        .enumerate()
        .map(|(modality_id, latent)| ModalitySample {
            modality_id,
            vector: latent.iter().map(|x| x + sigma * std_normal(rng)).collect(),
        })
        .collect();
    BiometricTemplate { samples }
}

/// A reading of a brand-new person, used when a claimed identity has no
/// human behind it: whoever shows up scans as an unrelated individual.
pub fn foreign_template(
    dim: usize,
    n_modalities: usize,
    sigma: f64,
    rng: &mut impl Rng,
) -> BiometricTemplate {
    let truth = generate_person_ground_truth(dim, n_modalities, rng);
    sample_template(&truth, sigma, rng)
}

pub fn euclidean_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub fn match_modality(
    a: &ModalitySample,
    b: &ModalitySample,
    policy: &MatchPolicy,
) -> Result<bool, BiometricError> {
    if a.modality_id != b.modality_id || a.vector.len() != b.vector.len() {
        return Err(BiometricError::ModalityMismatch);
    }
    Ok(euclidean_distance(&a.vector, &b.vector) <= policy.tau)
}

/// k-of-n fusion across modalities.
pub fn match_template(
    a: &BiometricTemplate,
    b: &BiometricTemplate,
    policy: &MatchPolicy,
) -> Result<bool, BiometricError> {
    if a.n_modalities() != b.n_modalities() || a.n_modalities() != policy.n_modalities {
        return Err(BiometricError::ModalityMismatch);
    }
    let n = policy.n_modalities;
    let mut matched = 0usize;
    for (i, (sa, sb)) in a.samples.iter().zip(&b.samples).enumerate() {
        if match_modality(sa, sb, policy)? {
            matched += 1;
        }
        if matched >= policy.k_required {
            return Ok(true);
        }
        // Remaining modalities cannot reach k.
        if matched + (n - i - 1) < policy.k_required {
            return Ok(false);
        }
    }
    Ok(matched >= policy.k_required)
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct CalibrationResult {
    pub tau: f64,
    pub far: f64,
    pub frr: f64,
}

impl CalibrationResult {
    pub fn eer(&self) -> f64 {
        0.5 * (self.far + self.frr)
    }
}

/// Calibrate the per-modality threshold to the equal-error point.
///
/// Draws `n_pairs` genuine and `n_pairs` impostor distance samples, then
/// binary-searches the threshold where the false accept and false reject
/// rates cross. FAR is non-decreasing and FRR non-increasing in tau, so the
/// sign of their difference drives the search.
pub fn calibrate_tau(
    dim: usize,
    sigma: f64,
    n_pairs: usize,
    max_eer: f64,
    rng: &mut impl Rng,
) -> Result<CalibrationResult, BiometricError> {
    assert!(n_pairs >= 1000, "calibration needs at least 1000 pairs");
    fn read(base: &[f64], sigma: f64, rng: &mut impl Rng) -> Vec<f64> {
        base.iter().map(|x| x + sigma * std_normal(rng)).collect()
    }
    let mut genuine = Vec::with_capacity(n_pairs);
    let mut impostor = Vec::with_capacity(n_pairs);
    for _ in 0..n_pairs {
        let person = unit_normal_vector(dim, rng);
        let a = read(&person, sigma, rng);
        let b = read(&person, sigma, rng);
        genuine.push(euclidean_distance(&a, &b));
        let other = unit_normal_vector(dim, rng);
        let c = read(&person, sigma, rng);
        let d = read(&other, sigma, rng);
        impostor.push(euclidean_distance(&c, &d));
    }

    let far_at = |tau: f64| impostor.iter().filter(|d| **d <= tau).count() as f64 / n_pairs as f64;
    let frr_at = |tau: f64| genuine.iter().filter(|d| **d > tau).count() as f64 / n_pairs as f64;

    let min_impostor = impostor.iter().cloned().fold(f64::INFINITY, f64::min);
    let max_genuine = genuine.iter().cloned().fold(0.0_f64, f64::max);
    if max_genuine < min_impostor {
        // Perfectly separable (e.g. zero noise): midpoint of the gap.
        let tau = 0.5 * (max_genuine + min_impostor);
        return Ok(CalibrationResult { tau, far: 0.0, frr: 0.0 });
    }

    let (mut lo, mut hi) = (0.0_f64, impostor.iter().cloned().fold(0.0_f64, f64::max) + 1.0);
    for _ in 0..64 {
        let mid = 0.5 * (lo + hi);
        if far_at(mid) < frr_at(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let tau = 0.5 * (lo + hi);
    let result = CalibrationResult { tau, far: far_at(tau), frr: frr_at(tau) };
    if result.eer() > max_eer {
        return Err(BiometricError::CalibrationFailed {
            achieved: result.eer(),
            maximum: max_eer,
        });
    }
    Ok(result)
}

fn binomial(n: u64, k: u64) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut out = 1.0;
    for i in 0..k {
        out *= (n - i) as f64 / (i + 1) as f64;
    }
    out
}

/// Probability that at least k of n modalities falsely accept an impostor
/// pair when each accepts independently with probability `far`.
pub fn fused_false_flag_rate(far: f64, n: usize, k: usize) -> f64 {
    binomial_tail(far, n, k)
}

/// Probability that fewer than k of n modalities match for a genuine pair
/// when each matches independently with probability `1 - frr`.
pub fn fused_miss_rate(frr: f64, n: usize, k: usize) -> f64 {
    1.0 - binomial_tail(1.0 - frr, n, k)
}

fn binomial_tail(p: f64, n: usize, k: usize) -> f64 {
    (k..=n)
        .map(|j| binomial(n as u64, j as u64) * p.powi(j as i32) * (1.0 - p).powi((n - j) as i32))
        .sum()
}

/// Linear-scan uniqueness index over the verified population's templates.
#[derive(Clone, Debug, Default)]
pub struct DedupIndex {
    entries: Vec<(Digest, BiometricTemplate)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DedupFlag {
    pub existing_digest: Digest,
    pub flagged: bool,
}

impl DedupIndex {
    pub fn new() -> Self {
        DedupIndex::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insert(&mut self, template: BiometricTemplate) {
        let digest = template.digest();
        if self.entries.iter().all(|(d, _)| *d != digest) {
            self.entries.push((digest, template));
        }
    }

    pub fn remove(&mut self, digest: &Digest) {
        self.entries.retain(|(d, _)| d != digest);
    }

    pub fn get(&self, digest: &Digest) -> Option<&BiometricTemplate> {
        self.entries.iter().find(|(d, _)| d == digest).map(|(_, t)| t)
    }

    /// Compare a fresh enrollment against every indexed template and return
    /// the collisions. An empty result means the biometric is fresh.
    pub fn check(
        &self,
        template: &BiometricTemplate,
        policy: &MatchPolicy,
    ) -> Result<Vec<DedupFlag>, BiometricError> {
        let mut flags = Vec::new();
        for (digest, existing) in &self.entries {
            if match_template(template, existing, policy)? {
                flags.push(DedupFlag { existing_digest: *digest, flagged: true });
            }
        }
        Ok(flags)
    }
}
