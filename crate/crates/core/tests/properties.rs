//! Property tests: matcher symmetry and monotonicity, tally threshold
//! monotonicity, canonical serialization round-trips, and chain tamper
//! evidence.

use proptest::prelude::*;
use uniqueid_core::biometric::{
    match_modality, match_template, BiometricTemplate, MatchPolicy, ModalitySample,
};
use uniqueid_core::governance::{tally, LayerTally};
use uniqueid_core::hashing::canonical_json;
use uniqueid_core::ledger::{verify_chain, EventBody, Ledger};
use uniqueid_core::registry::PersonId;

fn sample_strategy(modality_id: usize, dim: usize) -> impl Strategy<Value = ModalitySample> {
    prop::collection::vec(-1.5f64..1.5, dim)
        .prop_map(move |vector| ModalitySample { modality_id, vector })
}

fn template_strategy(n: usize, dim: usize) -> impl Strategy<Value = BiometricTemplate> {
    (0..n)
        .map(|m| sample_strategy(m, dim))
        .collect::<Vec<_>>()
        .prop_map(|samples| BiometricTemplate { samples })
}

proptest! {
    #[test]
    fn match_template_is_symmetric_and_reflexive(
        a in template_strategy(4, 8),
        b in template_strategy(4, 8),
        tau in 0.05f64..3.0,
        k in 1usize..=4,
    ) {
        let policy = MatchPolicy { tau, n_modalities: 4, k_required: k, genuine_noise_sigma: 0.1 };
        prop_assert_eq!(
            match_template(&a, &b, &policy).unwrap(),
            match_template(&b, &a, &policy).unwrap()
        );
        prop_assert!(match_template(&a, &a, &policy).unwrap());
    }

    #[test]
    fn raising_tau_never_unmatches(
        a in sample_strategy(0, 8),
        b in sample_strategy(0, 8),
        tau in 0.05f64..2.0,
        bump in 0.0f64..2.0,
    ) {
        let lo = MatchPolicy { tau, n_modalities: 1, k_required: 1, genuine_noise_sigma: 0.1 };
        let hi = MatchPolicy { tau: tau + bump, ..lo };
        if match_modality(&a, &b, &lo).unwrap() {
            prop_assert!(match_modality(&a, &b, &hi).unwrap());
        }
    }

    #[test]
    fn lowering_k_never_unflags(
        a in template_strategy(4, 8),
        b in template_strategy(4, 8),
        tau in 0.05f64..3.0,
        k in 2usize..=4,
    ) {
        let strict = MatchPolicy { tau, n_modalities: 4, k_required: k, genuine_noise_sigma: 0.1 };
        let loose = MatchPolicy { k_required: k - 1, ..strict };
        if match_template(&a, &b, &strict).unwrap() {
            prop_assert!(match_template(&a, &b, &loose).unwrap());
        }
    }

    #[test]
    fn tally_is_monotone_in_thresholds(
        counts in prop::collection::vec((0u64..50, 0u64..50, 0u64..50), 3),
        t in (0.0f64..=1.0, 0.0f64..=1.0, 0.0f64..=1.0),
        slack in (0.0f64..=1.0, 0.0f64..=1.0, 0.0f64..=1.0),
    ) {
        let layers: Vec<LayerTally> = counts
            .iter()
            .map(|(a, r, ab)| LayerTally { approve: a + 1, reject: *r, abstain: *ab })
            .collect();
        let mut hi = [t.0.max(t.1).max(t.2); 3];
        hi[0] = t.0.min(t.1).min(t.2);
        hi[1] = t.0 + t.1 + t.2 - hi[0] - t.0.max(t.1).max(t.2);
        hi[2] = t.0.max(t.1).max(t.2);
        let lo = [
            hi[0] * (1.0 - slack.0),
            (hi[1] * (1.0 - slack.1)).min(hi[1]),
            hi[2] * (1.0 - slack.2),
        ];
        let lo = [lo[0].min(lo[1]).min(lo[2]), lo[1].min(lo[2]), lo[2]];
        if tally(&layers, hi).unwrap() {
            prop_assert!(tally(&layers, lo).unwrap(), "lowering thresholds broke a pass");
        }
    }

    #[test]
    fn canonical_event_round_trip_is_byte_identical(
        from in any::<[u8; 32]>(),
        to in any::<[u8; 32]>(),
        epoch in 0u64..1_000_000,
        until in 0u64..1_000_000,
    ) {
        let mut ledger = Ledger::new();
        ledger.append(epoch, EventBody::TrustDelegated {
            from: PersonId(from),
            to: PersonId(to),
        });
        ledger.append(epoch, EventBody::TrustSuspended {
            pk: PersonId(from),
            until_epoch: until,
        });
        let text = ledger.to_jsonl();
        let parsed = Ledger::read_jsonl(text.as_bytes()).unwrap();
        prop_assert_eq!(&parsed, &ledger.events());
        prop_assert_eq!(Ledger::from_events(parsed).to_jsonl(), text);
        prop_assert_eq!(verify_chain(ledger.events()), Ok(()));
    }

    #[test]
    fn template_fixture_round_trip(t in template_strategy(4, 16)) {
        // Template fixture files are (modality_id, vector) arrays; parsing
        // them back must preserve bytes and digest.
        let text = canonical_json(&t.samples);
        let samples: Vec<ModalitySample> = serde_json::from_str(&text).unwrap();
        let back = BiometricTemplate { samples };
        prop_assert_eq!(canonical_json(&back.samples), text);
        prop_assert_eq!(back.digest(), t.digest());
    }

    #[test]
    fn single_byte_tamper_is_caught_at_or_before_the_height(
        seed_epochs in prop::collection::vec(0u64..5, 3..20),
        victim in 0usize..100,
        flip in 1u8..255,
    ) {
        let mut ledger = Ledger::new();
        let mut epoch = 0u64;
        for step in &seed_epochs {
            epoch += step;
            ledger.append(epoch, EventBody::EpochStarted { epoch });
        }
        let mut lines: Vec<String> = ledger.to_jsonl().lines().map(String::from).collect();
        let li = victim % lines.len();
        // Flip one byte, keeping the line valid UTF-8 by targeting a digit
        // of the height field.
        let pos = lines[li].find("\"height\":").unwrap() + 9;
        let mut bytes = lines[li].clone().into_bytes();
        bytes[pos] = b'0' + ((bytes[pos] - b'0' + (flip % 9) + 1) % 10);
        lines[li] = String::from_utf8(bytes).unwrap();
        let tampered = lines.join("\n");
        match Ledger::read_jsonl(tampered.as_bytes()) {
            Ok(events) => {
                let verdict = verify_chain(&events);
                prop_assert!(verdict.is_err());
                prop_assert!(verdict.unwrap_err() <= (li as u64) + 1);
            }
            Err(_) => {} // unparseable is also tamper-evident
        }
    }
}
