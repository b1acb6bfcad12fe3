//! Inputs shared by the benchmarks.

use discrepancy::canonical::MatchRelation;
use discrepancy::eval::{prepare_inputs, Inputs, Prepared, RunOptions};
use discrepancy::matching::TupleMatch;
use discrepancy::probability::Instance;
use discrepancy::synthgen::{generate, SynthConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Canonicalized synthetic instance with `n` tuples per side.
pub fn synthetic(n: usize, seed: u64) -> Prepared {
    let b = generate(&SynthConfig::new(n, 0.2, 1000, seed)).expect("generate");
    prepare_inputs(&Inputs::from_synthetic(&b), &RunOptions::default()).expect("prepare")
}

/// Random sparse instance; `degree` is the expected matches per left tuple.
pub fn random(side: usize, degree: f64, seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let left = (0..side).map(|_| rng.gen_range(0..=5) as f64).collect();
    let right = (0..side).map(|_| rng.gen_range(0..=5) as f64).collect();
    let edges = (side as f64 * degree) as usize;
    let matches = (0..edges)
        .map(|_| TupleMatch {
            left: rng.gen_range(0..side),
            right: rng.gen_range(0..side),
            p: rng.gen_range(1..=20) as f64 / 20.0,
        })
        .collect::<Vec<_>>();
    let mut matches = matches;
    matches.sort_by_key(|m| (m.left, m.right));
    matches.dedup_by_key(|m| (m.left, m.right));
    Instance::new(left, right, matches, MatchRelation::Equiv)
}
