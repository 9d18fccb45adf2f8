//! Pareto frontier against a quadratic brute-force oracle, and perplexity
//! invariants.

use kquant_core::metrics::{pareto_frontier, perplexity};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Indices no other point beats: more-or-equal reduction with less-or-equal
/// loss, strictly better in at least one.
fn brute_frontier(points: &[(f64, f64)]) -> Vec<usize> {
    (0..points.len())
        .filter(|&i| {
            let p = points[i];
            !p.0.is_nan()
                && !p.1.is_nan()
                && !points.iter().any(|&q| q.0 >= p.0 && q.1 <= p.1 && (q.0 > p.0 || q.1 < p.1))
        })
        .collect()
}

#[test]
fn frontier_matches_brute_force_on_random_sets() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for case in 0..1000 {
        let n = rng.gen_range(0..=64);
        // coarse grids on some cases so ties and duplicates are common
        let grid: f64 = [0.0, 0.5, 0.1, 1.0][case % 4];
        let points: Vec<(f64, f64)> = (0..n)
            .map(|_| {
                let (r, l) = (rng.gen_range(0.0..100.0), rng.gen_range(-5.0..10.0));
                if grid > 0.0 {
                    ((r / 10.0 / grid).round() * grid, (l / grid).round() * grid)
                } else {
                    (r, l)
                }
            })
            .collect();
        assert_eq!(pareto_frontier(&points), brute_frontier(&points), "case {case}: {points:?}");
    }
}

#[test]
fn uniform_stream_has_vocabulary_perplexity() {
    let lp = vec![-(256f64.ln()); 10_000];
    assert_eq!(perplexity(&lp).unwrap(), 256.0);
    let lp = vec![-(2f64.ln()); 3];
    assert_eq!(perplexity(&lp).unwrap(), 2.0);
}

#[test]
fn perplexity_rejects_bad_streams() {
    assert!(perplexity(&[]).is_err());
    assert!(perplexity(&[-1.0, 0.5]).is_err());
    assert!(perplexity(&[-1.0, f64::NAN]).is_err());
}

proptest! {
    #[test]
    fn frontier_oracle(points in prop::collection::vec((0u8..20, 0u8..20), 0..64)) {
        let pts: Vec<(f64, f64)> = points.iter().map(|&(a, b)| (a as f64, b as f64)).collect();
        prop_assert_eq!(pareto_frontier(&pts), brute_frontier(&pts));
    }

    #[test]
    fn frontier_points_are_mutually_nondominated(points in prop::collection::vec((0.0f64..100.0, -5.0f64..10.0), 1..64)) {
        let f = pareto_frontier(&points);
        prop_assert!(!f.is_empty());
        for &i in &f {
            for &j in &f {
                let (p, q) = (points[i], points[j]);
                prop_assert!(!(q.0 >= p.0 && q.1 <= p.1 && (q.0 > p.0 || q.1 < p.1)));
            }
        }
    }

    #[test]
    fn perplexity_is_permutation_invariant(lp in prop::collection::vec(-20.0f64..-1e-6, 1..300), seed in any::<u64>()) {
        let mut shuffled = lp.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(perplexity(&lp).unwrap().to_bits(), perplexity(&shuffled).unwrap().to_bits());
    }

    #[test]
    fn perplexity_is_at_least_one(lp in prop::collection::vec(-20.0f64..=0.0, 1..100)) {
        prop_assert!(perplexity(&lp).unwrap() >= 1.0);
    }
}
