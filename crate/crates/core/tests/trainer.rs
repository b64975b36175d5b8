mod common;

use common::pp_easy;
use slim_core::baselines::AggregatorKind;
use slim_core::env::{Difficulty, EnvConfig, EnvName};
use slim_core::nn::Tape;
use slim_core::slim::ModelConfig;
use slim_core::trainer::{episode_loss, ActionMode, LossSpec, TrainConfig, Trainer};

fn tiny_model() -> ModelConfig {
    ModelConfig {
        hidden_size: 16,
        heads: 2,
        beta: 4.0,
        ..ModelConfig::default()
    }
}

fn tiny_train() -> TrainConfig {
    TrainConfig {
        episodes_per_epoch: 6,
        ppo_epochs: 2,
        epochs: 3,
        ..TrainConfig::default()
    }
}

#[test]
fn same_seed_same_run_regardless_of_threads() {
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let mut t = Trainer::new(&pp_easy(), &tiny_model(), &tiny_train()).unwrap();
            let metrics: Vec<_> = (0..3).map(|_| t.train_epoch().unwrap()).collect();
            let params: Vec<Vec<f64>> = t.store().iter().map(|(_, p)| p.value().data().to_vec()).collect();
            (metrics, params)
        })
    };
    let (m1, p1) = run(1);
    let (m2, p2) = run(3);
    assert_eq!(m1, m2);
    assert_eq!(p1, p2);

    let mut other = tiny_train();
    other.seed = 2;
    let mut t = Trainer::new(&pp_easy(), &tiny_model(), &other).unwrap();
    assert_ne!(t.train_epoch().unwrap(), m1[0]);
}

/// One optimiser step on a batch lowers that batch's objective and moves
/// probability toward positively advantaged actions.
#[test]
fn first_update_improves_the_surrogate() {
    for kind in AggregatorKind::ALL {
        let model = ModelConfig {
            aggregator: kind,
            ..tiny_model()
        };
        let train = TrainConfig {
            ppo_epochs: 1,
            normalize_advantages: false,
            entropy_coef: 0.0,
            learning_rate: 1e-3,
            ..tiny_train()
        };
        let mut t = Trainer::new(&pp_easy(), &model, &train).unwrap();
        let mut batch = t.collect(0).unwrap();
        for ep in &mut batch {
            ep.compute_advantages(train.gamma, train.gae_lambda).unwrap();
        }
        let refs: Vec<_> = batch.iter().collect();
        let spec = LossSpec::for_batch(&refs, train.clip_epsilon, 0.0).unwrap();
        let score = |t: &Trainer| {
            let mut policy = 0.0;
            let mut logp_gain = 0.0;
            for ep in &batch {
                let mut tape = Tape::new(t.store());
                let (_, parts) = episode_loss(&mut tape, t.model(), ep, &ep.advantages, &spec).unwrap();
                policy += parts.policy;
                let vars = t.model().forward_episode(&mut tape, &ep.observations, ep.len).unwrap();
                let lp = tape.value(vars.log_probs);
                for k in 0..ep.n_agents * ep.len {
                    if ep.active[k] {
                        logp_gain += ep.advantages[k] * lp.get(k, ep.actions[k]);
                    }
                }
            }
            (policy, logp_gain)
        };
        let (before, gain_before) = score(&t);
        let (_, grads) = t.loss_and_grads(&refs).unwrap();
        let store = t.store_mut();
        store.zero_grads();
        store.accumulate(&grads).unwrap();
        let mut adam = slim_core::nn::AdamState::for_store(
            slim_core::nn::AdamConfig {
                lr: 1e-3,
                ..Default::default()
            },
            store,
        );
        adam.step(store).unwrap();
        let (after, gain_after) = score(&t);
        assert!(after < before, "{kind}: policy loss {before} -> {after}");
        assert!(gain_after > gain_before, "{kind}: advantage-weighted log-prob {gain_before} -> {gain_after}");
    }
}

#[test]
fn replay_buffer_runs_and_is_deterministic() {
    let train = TrainConfig {
        replay_episodes: 15,
        ..tiny_train()
    };
    let run = || {
        let mut t = Trainer::new(&pp_easy(), &tiny_model(), &train).unwrap();
        (0..3).map(|_| t.train_epoch().unwrap()).collect::<Vec<_>>()
    };
    assert_eq!(run(), run());
}

#[test]
fn zero_violations_while_training_every_environment() {
    for name in [EnvName::PredatorPrey, EnvName::TrafficJunction, EnvName::Navigation, EnvName::Shapes] {
        let env = EnvConfig::new(name, Difficulty::Easy);
        let mut t = Trainer::new(&env, &tiny_model(), &tiny_train()).unwrap();
        let m = t.train_epoch().unwrap();
        assert_eq!(m.budget_violations, 0.0, "{name:?}");
        assert!(m.scalars_sent > 0.0);
        assert!(m.total_loss.is_finite());
    }
}

#[test]
fn evaluation_is_reproducible_and_independent_of_training_streams() {
    let t = Trainer::new(&pp_easy(), &tiny_model(), &tiny_train()).unwrap();
    let a = t.evaluate(10, 4, ActionMode::Sample).unwrap();
    assert_eq!(a, t.evaluate(10, 4, ActionMode::Sample).unwrap());
    assert_eq!(a.episodes, 10);
    assert!((0.0..=1.0).contains(&a.success_rate));
    assert!(t.evaluate(0, 4, ActionMode::Greedy).is_err());
}
