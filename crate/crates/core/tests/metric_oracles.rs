use dtrack_core::metrics::{evaluate, qn, upc};
use dtrack_core::repr::{from_pianoroll, Frame, GridConfig, Pianoroll};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_roll(rng: &mut ChaCha8Rng) -> Pianoroll {
    let grid = GridConfig::default();
    let len = rng.gen_range(72..300);
    let density = rng.gen_range(0.0..0.1);
    let rows = (0..len)
        .map(|_| {
            let mut f = Frame::EMPTY;
            for p in 0..128u8 {
                if rng.gen::<f64>() < density {
                    f.set(p, true);
                }
            }
            f
        })
        .collect();
    Pianoroll::new(rows, grid)
}

fn brute_upc(roll: &Pianoroll) -> Vec<u8> {
    let bar = 72;
    (0..roll.len() / bar)
        .map(|b| {
            let mut seen = [false; 12];
            for t in b * bar..(b + 1) * bar {
                for p in 0..128u8 {
                    if roll.get(t, p) {
                        seen[(p % 12) as usize] = true;
                    }
                }
            }
            seen.iter().filter(|&&s| s).count() as u8
        })
        .collect()
}

/// (qualified, total) by scanning each pitch row for runs of ones.
fn brute_qn(roll: &Pianoroll) -> (usize, usize) {
    let (mut q, mut n) = (0, 0);
    for p in 0..128u8 {
        let mut run = 0;
        for t in 0..=roll.len() {
            if t < roll.len() && roll.get(t, p) {
                run += 1;
            } else if run > 0 {
                n += 1;
                q += usize::from(run >= 3);
                run = 0;
            }
        }
    }
    (q, n)
}

#[test]
fn thousand_random_rolls_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..1000 {
        let roll = random_roll(&mut rng);
        let (per_bar, mean) = upc(&roll).unwrap();
        let expect = brute_upc(&roll);
        assert_eq!(per_bar, expect);
        assert!(per_bar.iter().all(|&c| c <= 12));
        assert_eq!(mean, expect.iter().map(|&c| c as f64).sum::<f64>() / expect.len() as f64);

        let (q, n) = brute_qn(&roll);
        let notes = from_pianoroll(&roll);
        assert_eq!(notes.len(), n);
        if n > 0 {
            let ratio = qn(&notes).unwrap();
            assert_eq!(ratio, q as f64 / n as f64);
            assert!((0.0..=1.0).contains(&ratio));
        }
    }
}

fn shifted(roll: &Pianoroll, by: i16) -> Pianoroll {
    let rows = roll
        .rows()
        .iter()
        .map(|f| Frame::from_pitches(f.pitches().map(|p| (p as i16 + by) as u8)))
        .collect();
    Pianoroll::new(rows, roll.grid)
}

fn roll_from(frames: Vec<u128>) -> Pianoroll {
    Pianoroll::new(frames.into_iter().map(Frame).collect(), GridConfig { steps_per_beat: 2, beats_per_bar: 2 })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn upc_survives_octave_shift(frames in proptest::collection::vec(any::<u128>(), 4..20), up in any::<bool>()) {
        // Keep pitches inside 12..116 so both shifts stay in range.
        let mask = ((1u128 << 104) - 1) << 12;
        let roll = roll_from(frames.into_iter().map(|f| f & mask).collect());
        let by = if up { 12 } else { -12 };
        prop_assert_eq!(upc(&roll).unwrap(), upc(&shifted(&roll, by)).unwrap());
    }

    #[test]
    fn qn_ignores_pitch_permutation(frames in proptest::collection::vec(any::<u128>(), 1..20), seed in any::<u64>()) {
        let roll = roll_from(frames);
        let mut perm: Vec<u8> = (0..128).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in (1..128).rev() {
            perm.swap(i, rng.gen_range(0..=i));
        }
        let permuted = Pianoroll::new(
            roll.rows().iter().map(|f| Frame::from_pitches(f.pitches().map(|p| perm[p as usize]))).collect(),
            roll.grid,
        );
        let a = from_pianoroll(&roll);
        let b = from_pianoroll(&permuted);
        prop_assert_eq!(a.len(), b.len());
        if !a.is_empty() {
            prop_assert_eq!(qn(&a).unwrap(), qn(&b).unwrap());
        }
    }

    #[test]
    fn evaluate_combines_by_weight(
        xs in proptest::collection::vec(proptest::collection::vec(any::<u128>(), 4..12), 1..4),
        ys in proptest::collection::vec(proptest::collection::vec(any::<u128>(), 4..12), 1..4),
    ) {
        let xs: Vec<_> = xs.into_iter().map(roll_from).collect();
        let ys: Vec<_> = ys.into_iter().map(roll_from).collect();
        let (a, b) = (evaluate(&xs).unwrap(), evaluate(&ys).unwrap());
        let all: Vec<_> = xs.iter().chain(&ys).cloned().collect();
        let c = evaluate(&all).unwrap();
        prop_assert_eq!(c.n_bars, a.n_bars + b.n_bars);
        prop_assert_eq!(c.n_notes, a.n_notes + b.n_notes);
        let upc = (a.upc_mean * a.n_bars as f64 + b.upc_mean * b.n_bars as f64) / c.n_bars as f64;
        let qn = (a.qn_ratio * a.n_notes as f64 + b.qn_ratio * b.n_notes as f64) / c.n_notes as f64;
        prop_assert!((c.upc_mean - upc).abs() < 1e-12);
        prop_assert!((c.qn_ratio - qn).abs() < 1e-12);
        prop_assert_eq!(evaluate(&xs[..1]).unwrap(), evaluate(&[xs[0].clone()]).unwrap());
    }
}
