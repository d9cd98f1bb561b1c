//! Seeded random automata for tests and fuzzing.

use std::collections::BTreeSet;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Pfsa;
use crate::numerics::Rational;

/// Generates a valid, trim automaton with at most `max_states` states and
/// `max_symbols` symbols, deterministically from the seed.
///
/// Construction guarantees rather than checks the invariants: state 0 holds
/// all initial weight, a chain of forced edges makes every state accessible,
/// every state keeps a positive final weight (so everything is
/// co-accessible), and each state's outgoing and final weights are integer
/// shares of a common denominator, so they sum to exactly 1.
pub fn random_trim(seed: u64, max_states: usize, max_symbols: usize) -> Pfsa {
    assert!(max_states >= 1 && max_symbols >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_states = rng.random_range(1..=max_states);
    let n_symbols = rng.random_range(1..=max_symbols);

    let alphabet: Vec<String> = (0..n_symbols)
        .map(|i| char::from(b'a' + i as u8).to_string())
        .collect();
    let states: Vec<String> = (0..n_states).map(|i| format!("q{i}")).collect();

    let mut builder = Pfsa::builder(&alphabet, &states).initial("q0", "1");

    for q in 0..n_states {
        let mut targets: BTreeSet<(usize, usize)> = BTreeSet::new();
        if q + 1 < n_states {
            // Accessibility spine.
            targets.insert((rng.random_range(0..n_symbols), q + 1));
        }
        let extras = rng.random_range(0..=n_states.min(3));
        for _ in 0..extras {
            targets.insert((
                rng.random_range(0..n_symbols),
                rng.random_range(0..n_states),
            ));
        }
        // Integer shares: final weight first, then one share per edge.
        let mut shares: Vec<u64> = vec![rng.random_range(1..=9)];
        for _ in 0..targets.len() {
            shares.push(rng.random_range(1..=9));
        }
        let denom = shares.iter().sum::<u64>() as i64;
        builder = builder.final_weight(
            &states[q],
            &Rational::ratio(shares[0] as i64, denom).to_string(),
        );
        for ((y, q2), share) in targets.iter().zip(&shares[1..]) {
            builder = builder.transition(
                &states[q],
                &alphabet[*y],
                &states[*q2],
                &Rational::ratio(*share as i64, denom).to_string(),
            );
        }
    }

    builder.build().expect("generated automaton is well-formed")
}
