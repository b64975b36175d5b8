use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use slim_core::nn::{Matrix, ParamStore, Tape};
use slim_core::trainer::{clipped_surrogate, ppo_policy_loss, surrogate};

/// Case analysis of `min(ρA, clip(ρ)A)` written without `min`/`clamp`.
fn by_cases(ratio: f64, adv: f64, eps: f64) -> f64 {
    if adv >= 0.0 {
        if ratio > 1.0 + eps {
            (1.0 + eps) * adv
        } else {
            ratio * adv
        }
    } else if ratio < 1.0 - eps {
        (1.0 - eps) * adv
    } else {
        ratio * adv
    }
}

fn grid(seed: u64) -> Vec<(f64, f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for eps in [0.05, 0.1, 0.2, 0.3] {
        let mut ratios = vec![1.0 - eps, 1.0, 1.0 + eps, 0.0, 3.0];
        ratios.extend((0..20).map(|_| rng.random_range(0.0..2.5)));
        for &ratio in &ratios {
            for adv in [-2.0, -0.5, 0.0, 0.5, 2.0, rng.random_range(-3.0..3.0)] {
                out.push((ratio, adv, eps));
            }
        }
    }
    out
}

#[test]
fn scalar_surrogate_matches_case_analysis() {
    for (ratio, adv, eps) in grid(1) {
        let got = clipped_surrogate(ratio, adv, eps);
        assert!((got - by_cases(ratio, adv, eps)).abs() <= 1e-12, "ρ={ratio} A={adv} ε={eps}");
    }
}

#[test]
fn tape_surrogate_matches_case_analysis() {
    let store = ParamStore::new();
    for eps in [0.05, 0.1, 0.2, 0.3] {
        let cells: Vec<_> = grid(2).into_iter().filter(|c| c.2 == eps).collect();
        let mut tape = Tape::new(&store);
        let r = tape.constant(Matrix::from_vec(cells.len(), 1, cells.iter().map(|c| c.0).collect()).unwrap());
        let a = tape.constant(Matrix::from_vec(cells.len(), 1, cells.iter().map(|c| c.1).collect()).unwrap());
        let s = surrogate(&mut tape, r, a, eps).unwrap();
        for (k, &(ratio, adv, _)) in cells.iter().enumerate() {
            let got = tape.value(s).get(k, 0);
            assert!((got - by_cases(ratio, adv, eps)).abs() <= 1e-12, "ρ={ratio} A={adv} ε={eps}");
        }
    }
}

#[test]
fn documented_examples() {
    let l = ppo_policy_loss(&[1.0; 4], &[1.0, -2.0, 0.5, 3.0], &[0.0; 4], 0.2, 0.0).unwrap();
    assert!((l + 0.625).abs() < 1e-15);
    assert!((ppo_policy_loss(&[1.5], &[1.0], &[0.0], 0.2, 0.0).unwrap() + 1.2).abs() < 1e-15);
    assert!((ppo_policy_loss(&[0.5], &[-1.0], &[0.0], 0.2, 0.0).unwrap() - 0.8).abs() < 1e-15);
    // entropy enters as a bonus
    let with = ppo_policy_loss(&[1.0], &[0.0], &[1.2], 0.2, 0.5).unwrap();
    assert!((with + 0.6).abs() < 1e-15);
}
