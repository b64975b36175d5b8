#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use slim_core::env::{Difficulty, EnvConfig, EnvName};
use slim_core::nn::{Grads, Matrix, ParamStore, Tape, Var};
use slim_core::slim::{ModelConfig, ModelDims, SlimModel};
use slim_core::trainer::{episode_rng, run_episode, ActionMode, Episode};
use slim_core::Result;

pub const FD_STEP: f64 = 1e-5;

/// Entries whose gradients are both below this are compared absolutely.
pub const GRAD_FLOOR: f64 = 1e-6;

/// Largest relative error between reverse-mode and central-difference
/// gradients over (up to) `per_param` entries of every parameter.
pub fn grad_check(
    store: &mut ParamStore,
    per_param: usize,
    rng: &mut ChaCha8Rng,
    f: &dyn Fn(&mut Tape<'_>) -> Result<Var>,
) -> f64 {
    let mut grads = Grads::zeros_like(store);
    {
        let mut tape = Tape::new(store);
        let loss = f(&mut tape).unwrap();
        tape.backward_into(loss, &mut grads).unwrap();
    }
    let eval = |store: &ParamStore| {
        let mut tape = Tape::new(store);
        let loss = f(&mut tape).unwrap();
        tape.scalar(loss)
    };
    let ids: Vec<_> = store.iter().map(|(id, _)| id).collect();
    let mut worst: f64 = 0.0;
    for id in ids {
        let n = store.value(id).len();
        let picks: Vec<usize> = if n <= per_param {
            (0..n).collect()
        } else {
            (0..per_param).map(|_| rng.random_range(0..n)).collect()
        };
        for k in picks {
            let orig = store.value(id).data()[k];
            store.value_mut(id).data_mut()[k] = orig + FD_STEP;
            let up = eval(store);
            store.value_mut(id).data_mut()[k] = orig - FD_STEP;
            let down = eval(store);
            store.value_mut(id).data_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * FD_STEP);
            let analytic = grads.get(id).data()[k];
            let scale = analytic.abs().max(numeric.abs()).max(GRAD_FLOOR);
            worst = worst.max((analytic - numeric).abs() / scale);
        }
    }
    worst
}

pub fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

pub fn pp_easy() -> EnvConfig {
    EnvConfig::new(EnvName::PredatorPrey, Difficulty::Easy)
}

pub fn small_model(hidden: usize) -> ModelConfig {
    ModelConfig {
        hidden_size: hidden,
        heads: 2,
        ..ModelConfig::default()
    }
}

pub fn build_model(env: &EnvConfig, cfg: &ModelConfig, seed: u64) -> (SlimModel, ParamStore) {
    let spec = env.spec().unwrap();
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = SlimModel::new(&mut store, cfg, ModelDims::from(&spec), &mut rng).unwrap();
    (model, store)
}

/// One sampled episode with advantages and returns filled in.
pub fn sampled_episode(model: &SlimModel, store: &ParamStore, env: &EnvConfig, seed: u64) -> Episode {
    let mut e = env.build().unwrap();
    let mut rng = episode_rng(seed, 0);
    let mut ep = run_episode(model, store, e.as_mut(), &mut rng, ActionMode::Sample).unwrap();
    ep.compute_advantages(0.99, 0.95).unwrap();
    ep
}

/// First `len` steps of an episode.
pub fn truncate(ep: &Episode, len: usize) -> Episode {
    let n = ep.n_agents;
    let pick = |i: usize, t: usize| i * ep.len + t;
    let rows: Vec<usize> = (0..n).flat_map(|i| (0..len).map(move |t| pick(i, t))).collect();
    let mut obs = Matrix::zeros(n * len, ep.observations.cols());
    for (k, &r) in rows.iter().enumerate() {
        obs.row_mut(k).copy_from_slice(ep.observations.row(r));
    }
    let take_f = |v: &[f64]| rows.iter().map(|&r| v[r]).collect::<Vec<f64>>();
    let take_b = |v: &[bool]| rows.iter().map(|&r| v[r]).collect::<Vec<bool>>();
    Episode {
        n_agents: n,
        len,
        observations: obs,
        actions: rows.iter().map(|&r| ep.actions[r]).collect(),
        behaviour_log_probs: take_f(&ep.behaviour_log_probs),
        rewards: take_f(&ep.rewards),
        dones: take_b(&ep.dones),
        active: take_b(&ep.active),
        values: take_f(&ep.values),
        bootstrap: ep.bootstrap.clone(),
        advantages: take_f(&ep.advantages),
        returns: take_f(&ep.returns),
        success: ep.success,
        scalars_sent: ep.scalars_sent,
        violations: ep.violations,
    }
}
