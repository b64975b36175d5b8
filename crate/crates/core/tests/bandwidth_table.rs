use proptest::prelude::*;
use slim_core::bandwidth::{max_message_dim, BandwidthBudget, TransmissionLedger};
use slim_core::harness::RunConfig;
use slim_core::slim::ModelConfig;

const BETAS: [f64; 7] = [1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0];

/// (strategy, sigma, rounds, d per beta; None marks an inaccessible cell).
fn table() -> Vec<(&'static str, f64, u32, [Option<usize>; 7])> {
    let one_pass = [1, 2, 4, 8, 16, 32, 64].map(Some);
    vec![
        ("commformer", 1.0, 2, [None, Some(1), Some(2), Some(4), Some(8), Some(16), Some(32)]),
        ("commformer_sparse", 0.5, 2, one_pass),
        ("commnet", 1.0, 1, one_pass),
        ("ic3net", 1.0, 1, one_pass),
        ("tarmac", 1.0, 1, one_pass),
        ("slim", 1.0, 1, one_pass),
    ]
}

#[test]
fn every_cell_of_the_parameter_table() {
    for (name, sigma, rounds, dims) in table() {
        for (beta, expect) in BETAS.into_iter().zip(dims) {
            let got = max_message_dim(beta, sigma, rounds).unwrap();
            assert_eq!(got, expect, "{name} at beta {beta}");
            if let Some(d) = expect {
                assert!(BandwidthBudget::new(sigma, rounds, d, beta).validate().unwrap());
                assert!(!BandwidthBudget::new(sigma, rounds, d + 1, beta).validate().unwrap());
            } else {
                assert!(!BandwidthBudget::new(sigma, rounds, 1, beta).validate().unwrap());
            }
        }
    }
}

#[test]
fn dense_two_round_strategy_is_refused_at_unit_budget() {
    let cfg = ModelConfig {
        beta: 1.0,
        rounds: 2,
        ..ModelConfig::default()
    };
    let msg = cfg.validate().unwrap_err().to_string();
    assert!(msg.contains("bandwidth constraint violated"), "{msg}");
}

#[test]
fn second_round_at_same_dim_is_refused_before_training() {
    let text = "[environment]\nname = \"predator_prey\"\n[model]\nbeta = 4.0\nmessage_dim = 4\nrounds = 2\n";
    let cfg = RunConfig::from_toml(text).unwrap();
    let msg = cfg.validate().unwrap_err().to_string();
    assert!(msg.contains("bandwidth constraint violated"), "{msg}");
    assert!(msg.contains("2 x 4 = 8 > beta = 4"), "{msg}");
}

proptest! {
    #[test]
    fn max_dim_is_the_largest_feasible(beta in 0.1f64..200.0, half in any::<bool>(), rounds in 1u32..4) {
        let sigma = if half { 0.5 } else { 1.0 };
        match max_message_dim(beta, sigma, rounds).unwrap() {
            Some(d) => {
                prop_assert!(sigma * rounds as f64 * d as f64 <= beta);
                prop_assert!(sigma * rounds as f64 * (d + 1) as f64 > beta);
            }
            None => prop_assert!(sigma * rounds as f64 > beta),
        }
    }

    #[test]
    fn broadcasting_at_max_dim_never_violates(n in 2usize..7, beta_pow in 0u32..7, steps in 1usize..5) {
        let beta = f64::from(1u32 << beta_pow);
        let d = max_message_dim(beta, 1.0, 1).unwrap().unwrap();
        let mut ledger = TransmissionLedger::new(n, beta);
        for _ in 0..steps {
            for s in 0..n {
                let peers: Vec<usize> = (0..n).filter(|&j| j != s).collect();
                ledger.record_transmission(s, &peers, 0, d).unwrap();
            }
            prop_assert!(ledger.end_step().is_ok());
        }
        prop_assert!(ledger.violations().is_empty());
        prop_assert_eq!(ledger.total_scalars(), (steps * n * (n - 1) * d) as u64);
    }

    #[test]
    fn one_scalar_over_is_caught(n in 2usize..7, beta_pow in 0u32..7) {
        let beta = f64::from(1u32 << beta_pow);
        let d = max_message_dim(beta, 1.0, 1).unwrap().unwrap();
        let mut ledger = TransmissionLedger::new(n, beta);
        let peers: Vec<usize> = (1..n).collect();
        ledger.record_transmission(0, &peers, 0, d + 1).unwrap();
        let v = ledger.end_step().unwrap_err();
        prop_assert_eq!(v.agent, 0);
        prop_assert!(v.to_string().contains("bandwidth budget exceeded"));
        prop_assert_eq!(ledger.violations().len(), 1);
    }
}
