use dtrack_core::sample::{greedy_pick, gumbel_pick, top_k_pick};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

const DRAWS: usize = 100_000;

/// Pearson chi-square p-value of observed counts against probabilities.
fn chi_square_p(counts: &[usize], probs: &[f64]) -> f64 {
    let n: usize = counts.iter().sum();
    let stat: f64 = counts
        .iter()
        .zip(probs)
        .map(|(&c, &p)| {
            let e = p * n as f64;
            (c as f64 - e).powi(2) / e
        })
        .sum();
    1.0 - ChiSquared::new((counts.len() - 1) as f64).unwrap().cdf(stat)
}

fn softmax(v: &[f64]) -> Vec<f64> {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = v.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|x| x / s).collect()
}

fn counts(dim: usize, mut pick: impl FnMut() -> usize) -> Vec<usize> {
    let mut c = vec![0; dim];
    for _ in 0..DRAWS {
        c[pick()] += 1;
    }
    c
}

#[test]
fn gumbel_frequencies_follow_stated_distribution() {
    let logits = [0.7f64.ln(), 0.2f64.ln(), 0.1f64.ln()];
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let c = counts(3, || gumbel_pick(&logits, 1.0, &mut rng).unwrap());
    assert!(chi_square_p(&c, &[0.7, 0.2, 0.1]) > 0.001, "{c:?}");
}

#[test]
fn gumbel_large_scale_tends_to_uniform() {
    let logits = [1.0, 0.0, -1.0, 0.5];
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let c = counts(4, || gumbel_pick(&logits, 100.0, &mut rng).unwrap());
    assert!(chi_square_p(&c, &[0.25; 4]) > 0.001, "{c:?}");
}

#[test]
fn top_k_full_width_on_equal_logits_is_uniform() {
    let logits = [0.3; 6];
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let c = counts(6, || top_k_pick(&logits, 6, &mut rng).unwrap());
    assert!(chi_square_p(&c, &[1.0 / 6.0; 6]) > 0.001, "{c:?}");
}

#[test]
fn top_k_samples_renormalised_softmax() {
    let logits = [1.0, 2.0, -5.0, 0.5, 1.5];
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let c = counts(5, || top_k_pick(&logits, 3, &mut rng).unwrap());
    assert_eq!((c[2], c[3]), (0, 0));
    let p = softmax(&[1.0, 2.0, 1.5]);
    assert!(chi_square_p(&[c[0], c[1], c[4]], &p) > 0.001, "{c:?}");
}

#[test]
fn shifting_logits_keeps_distributions() {
    let logits = [0.4, -0.3, 1.1];
    let shifted: Vec<f64> = logits.iter().map(|x| x + 17.0).collect();
    let p = softmax(&logits);
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let c = counts(3, || gumbel_pick(&shifted, 1.0, &mut rng).unwrap());
    assert!(chi_square_p(&c, &p) > 0.001);
    let c = counts(3, || top_k_pick(&shifted, 3, &mut rng).unwrap());
    assert!(chi_square_p(&c, &p) > 0.001);
    assert_eq!(greedy_pick(&shifted).unwrap(), greedy_pick(&logits).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn top_k_stays_inside_top_set(logits in proptest::collection::vec(-10.0f64..10.0, 1..12), k in 1usize..12, seed in any::<u64>()) {
        prop_assume!(k <= logits.len());
        let mut sorted = logits.clone();
        sorted.sort_by(|a, b| b.total_cmp(a));
        let kth = sorted[k - 1];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..50 {
            let i = top_k_pick(&logits, k, &mut rng).unwrap();
            prop_assert!(logits[i] >= kth);
        }
    }

    #[test]
    fn zero_scale_gumbel_is_greedy(logits in proptest::collection::vec(-10.0f64..10.0, 1..12), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        prop_assert_eq!(gumbel_pick(&logits, 0.0, &mut rng).unwrap(), greedy_pick(&logits).unwrap());
    }
}
