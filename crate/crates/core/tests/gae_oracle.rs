use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use slim_core::trainer::compute_gae;

/// `A_t = Σ_l (γλ)^(l-t) Π_{m<l} live_m δ_l`, summed forwards.
fn nested_sum(r: &[f64], v: &[f64], done: &[bool], boot: f64, gamma: f64, lambda: f64) -> Vec<f64> {
    let n = r.len();
    let next_v = |l: usize| if l + 1 < n { v[l + 1] } else { boot };
    let live = |l: usize| if done[l] { 0.0 } else { 1.0 };
    (0..n)
        .map(|t| {
            let mut total = 0.0;
            for l in t..n {
                let mut w = 1.0;
                for m in t..l {
                    w *= gamma * lambda * live(m);
                }
                let delta = r[l] + gamma * live(l) * next_v(l) - v[l];
                total += w * delta;
            }
            total
        })
        .collect()
}

/// λ = 1: discounted return to the first terminal (or bootstrap) minus V.
fn monte_carlo(r: &[f64], v: &[f64], done: &[bool], boot: f64, gamma: f64) -> Vec<f64> {
    let n = r.len();
    (0..n)
        .map(|t| {
            let mut g = 0.0;
            let mut disc = 1.0;
            let mut cut = false;
            for l in t..n {
                g += disc * r[l];
                disc *= gamma;
                if done[l] {
                    cut = true;
                    break;
                }
            }
            if !cut {
                g += disc * boot;
            }
            g - v[t]
        })
        .collect()
}

fn trajectory(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>, Vec<bool>, f64) {
    let n = rng.random_range(1..=16);
    let r = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    let v = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
    let d = (0..n).map(|_| rng.random_bool(0.2)).collect();
    (r, v, d, rng.random_range(-3.0..3.0))
}

fn close(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-10)
}

#[test]
fn matches_nested_sum_on_random_trajectories() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for k in 0..100 {
        let (r, v, d, boot) = trajectory(&mut rng);
        let gamma = rng.random_range(0.5..1.0);
        let lambda = match k % 4 {
            0 => 0.0,
            1 => 1.0,
            _ => rng.random_range(0.0..1.0),
        };
        let (adv, ret) = compute_gae(&r, &v, &d, boot, gamma, lambda).unwrap();
        assert!(close(&adv, &nested_sum(&r, &v, &d, boot, gamma, lambda)), "trajectory {k}");
        let sums: Vec<f64> = adv.iter().zip(&v).map(|(a, v)| a + v).collect();
        assert!(close(&ret, &sums));
    }
}

#[test]
fn edge_lambdas_have_closed_forms() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..100 {
        let (r, v, d, boot) = trajectory(&mut rng);
        let gamma = rng.random_range(0.5..1.0);
        let n = r.len();
        let td: Vec<f64> = (0..n)
            .map(|t| {
                let next = if d[t] { 0.0 } else if t + 1 < n { v[t + 1] } else { boot };
                r[t] + gamma * next - v[t]
            })
            .collect();
        assert!(close(&compute_gae(&r, &v, &d, boot, gamma, 0.0).unwrap().0, &td));
        assert!(close(&compute_gae(&r, &v, &d, boot, gamma, 1.0).unwrap().0, &monte_carlo(&r, &v, &d, boot, gamma)));
    }
}

proptest! {
    #[test]
    fn terminal_step_ignores_everything_after(
        r in prop::collection::vec(-5.0f64..5.0, 1..12),
        boot in -5.0f64..5.0,
        gamma in 0.0f64..1.0,
        lambda in 0.0f64..1.0,
    ) {
        let n = r.len();
        let v = vec![0.0; n];
        let mut d = vec![false; n];
        d[n - 1] = true;
        let (a, _) = compute_gae(&r, &v, &d, boot, gamma, lambda).unwrap();
        let (b, _) = compute_gae(&r, &v, &d, boot + 100.0, gamma, lambda).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn zero_values_and_unit_lambda_give_discounted_returns(
        r in prop::collection::vec(-5.0f64..5.0, 1..12),
        gamma in 0.0f64..1.0,
    ) {
        let n = r.len();
        let (a, ret) = compute_gae(&r, &vec![0.0; n], &vec![false; n], 0.0, gamma, 1.0).unwrap();
        let mut g = 0.0;
        for t in (0..n).rev() {
            g = r[t] + gamma * g;
            prop_assert!((a[t] - g).abs() < 1e-9);
            prop_assert!((ret[t] - g).abs() < 1e-9);
        }
    }
}
