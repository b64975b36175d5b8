use crate::error::{Error, Result};

/// Generalised advantage estimation over one agent's sequence.
///
/// `dones[t]` marks a terminal transition, which zeroes the bootstrap from
/// `t + 1`; `bootstrap` is `V(s_T)` after the last step. Returns the
/// advantages and the return targets `A + V`.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap: f64,
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = rewards.len();
    if values.len() != n || dones.len() != n {
        return Err(Error::contract(format!(
            "gae inputs differ in length: {} rewards, {} values, {} dones",
            n,
            values.len(),
            dones.len()
        )));
    }
    let mut adv = vec![0.0; n];
    let mut next_value = bootstrap;
    let mut next_adv = 0.0;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        next_adv = delta + gamma * lambda * live * next_adv;
        adv[t] = next_adv;
        next_value = values[t];
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, returns))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_terminal_step() {
        let (a, r) = compute_gae(&[1.0], &[0.0], &[true], 5.0, 0.99, 0.95).unwrap();
        assert_eq!((a[0], r[0]), (1.0, 1.0));
    }

    #[test]
    fn lambda_zero_is_td_error() {
        let rewards = [0.5, -1.0, 2.0];
        let values = [0.1, 0.2, 0.3];
        let (a, _) = compute_gae(&rewards, &values, &[false; 3], 0.4, 0.9, 0.0).unwrap();
        let expect = [0.5 + 0.9 * 0.2 - 0.1, -1.0 + 0.9 * 0.3 - 0.2, 2.0 + 0.9 * 0.4 - 0.3];
        for (x, y) in a.iter().zip(expect) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn length_mismatch_is_contract_error() {
        assert!(matches!(
            compute_gae(&[1.0, 2.0], &[0.0], &[false, false], 0.0, 0.9, 0.9),
            Err(Error::Contract(_))
        ));
    }
}
