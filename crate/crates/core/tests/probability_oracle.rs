//! The probability table against a brute-force oracle, plus clamp, sign
//! and monotonicity properties of the raw increment.

use attachfuzz::mutation::FieldKey;
use attachfuzz::probability::{increment, updated_probability, IterationLedger, ProbabilityTable, P_MAX, P_MIN};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MAX_I: u64 = 2000;

/// Written from the update rule alone: a signed, iteration-scheduled step
/// shared among the iteration's mutations and damped by the bit width.
fn oracle(p: f64, beta: f64, i: u64, max_i: u64, c: u64, n: u64, bits: u32) -> f64 {
    let found = c > 0;
    let progress = beta * (i as f64) / (max_i as f64);
    let weight = if found { progress } else { max_i as f64 / (beta * i as f64) };
    let sign = if found { 1.0 } else { -1.0 };
    let space = (0..bits).fold(1.0f64, |acc, _| acc * 2.0);
    let damping = (space + 1.0).ln() / std::f64::consts::LN_2;
    (p + sign * weight / n as f64 / damping).clamp(0.005, 0.90)
}

fn mask_with_bits(bits: u32) -> u64 {
    if bits == 64 { u64::MAX } else { (1u64 << bits) - 1 }
}

fn table_update(p: f64, beta: f64, i: u64, c: u64, n: u64, bits: u32) -> f64 {
    let mut table = ProbabilityTable::new(3.0, beta, MAX_I).unwrap();
    let key = FieldKey::new("AttachAccept", "emm_cause", 0);
    table.force(key.clone(), p);
    let mut ledger = IterationLedger::new(i);
    ledger.record(key.clone(), mask_with_bits(bits));
    // The remaining events land on other keys so that n counts every event.
    for extra in 1..n {
        ledger.record(FieldKey::new("AttachAccept", "filler", extra as u32), 0xFF);
    }
    ledger.new_units = c;
    table.update(&ledger).unwrap();
    table.get(&key).unwrap()
}

#[test]
fn table_matches_oracle_on_ten_thousand_tuples() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x00ac_ce55);
    for _ in 0..10_000 {
        let p = rng.random_range(P_MIN..=P_MAX);
        let beta = rng.random_range(1.0..=9.0);
        let i = rng.random_range(1..=MAX_I);
        let c = [0, 1, 3, 17][rng.random_range(0..4)];
        let n = rng.random_range(1..=64);
        let bits = rng.random_range(1..=32);
        let got = table_update(p, beta, i, c, n, bits);
        let want = oracle(p, beta, i, MAX_I, c, n, bits);
        assert!((got - want).abs() <= 1e-12, "p={p} beta={beta} i={i} c={c} n={n} bits={bits}: {got} vs {want}");
    }
}

#[test]
fn worked_examples() {
    let up = table_update(0.30, 4.0, 1000, 3, 2, 8);
    assert!((up - 0.42491).abs() < 1e-4, "{up}");
    let down = table_update(0.30, 4.0, 1000, 0, 2, 8);
    assert!((down - 0.26877).abs() < 1e-4, "{down}");
    assert_eq!(oracle(0.30, 4.0, 1000, MAX_I, 3, 2, 8), up);
}

#[test]
fn repeated_key_events_update_once_but_count_twice() {
    let mut table = ProbabilityTable::new(3.0, 4.0, MAX_I).unwrap();
    let key = FieldKey::new("ConnSetup", "p_max", 0);
    table.force(key.clone(), 0.3);
    let mut ledger = IterationLedger::new(1000);
    ledger.record(key.clone(), 0xFF);
    ledger.record(key.clone(), 0xFF);
    ledger.new_units = 3;
    table.update(&ledger).unwrap();
    assert!((table.get(&key).unwrap() - oracle(0.3, 4.0, 1000, MAX_I, 3, 2, 8)).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100_000))]

    #[test]
    fn increments_respect_clamp_sign_and_monotonicity(
        p in P_MIN..=P_MAX,
        beta in 1.0f64..=9.0,
        i in 1u64..MAX_I,
        c in prop::sample::select(vec![0u64, 1, 3, 17]),
        n in 1u64..=64,
        bits in 1u32..32,
    ) {
        let space = |b: u32| 2f64.powi(b as i32);
        let updated = updated_probability(p, c, i, MAX_I, beta, n, space(bits)).unwrap();
        prop_assert!((P_MIN..=P_MAX).contains(&updated));

        let delta = increment(c, i, MAX_I, beta, n, space(bits)).unwrap();
        prop_assert_eq!(delta > 0.0, c > 0);
        prop_assert!(delta != 0.0);

        let wider = increment(c, i, MAX_I, beta, n, space(bits + 1)).unwrap();
        prop_assert!(wider.abs() < delta.abs());
        if c > 0 {
            let later = increment(c, i + 1, MAX_I, beta, n, space(bits)).unwrap();
            prop_assert!(later > delta);
        }
    }
}
