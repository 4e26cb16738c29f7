/// Generalized advantage estimation over one episode.
///
/// `A_t = δ_t + γλ·A_{t+1}` with `δ_t = r_t + γ·V_{t+1} − V_t`; the value after
/// the last step is `bootstrap` (0 for a terminal episode). Returns
/// `(advantages, returns)` with `returns = advantages + values`.
pub fn gae_advantages(rewards: &[f64], values: &[f64], gamma: f64, lambda: f64, bootstrap: f64) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(rewards.len(), values.len(), "one value per reward");
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    let mut next_value = bootstrap;
    for t in (0..n).rev() {
        let delta = rewards[t] + gamma * next_value - values[t];
        next_adv = delta + gamma * lambda * next_adv;
        adv[t] = next_adv;
        next_value = values[t];
    }
    let ret = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, ret)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_terminal_step() {
        let (a, r) = gae_advantages(&[0.7], &[0.2], 0.99, 0.95, 0.0);
        assert!((a[0] - 0.5).abs() < 1e-15);
        assert!((r[0] - 0.7).abs() < 1e-15);
    }

    #[test]
    fn undiscounted_zero_values_give_suffix_sums() {
        let (a, _) = gae_advantages(&[1.0, 2.0, 3.0], &[0.0; 3], 1.0, 1.0, 0.0);
        assert_eq!(a, vec![6.0, 5.0, 3.0]);
    }

    #[test]
    fn three_step_hand_unrolled() {
        let (r, v, g, l) = ([0.5, -0.25, 1.0], [0.1, 0.4, -0.3], 0.9, 0.8);
        let d2 = 1.0 - (-0.3);
        let d1 = -0.25 + g * -0.3 - 0.4;
        let d0 = 0.5 + g * 0.4 - 0.1;
        let a2 = d2;
        let a1 = d1 + g * l * a2;
        let a0 = d0 + g * l * a1;
        let (a, ret) = gae_advantages(&r, &v, g, l, 0.0);
        for (x, y) in a.iter().zip([a0, a1, a2]) {
            assert!((x - y).abs() < 1e-14);
        }
        assert!((ret[0] - (a0 + 0.1)).abs() < 1e-14);
    }

    proptest! {
        #[test]
        fn lambda_zero_is_one_step_td(
            r in proptest::collection::vec(-1.0f64..1.0, 1..8),
            seed in proptest::collection::vec(-1.0f64..1.0, 8),
            gamma in 0.0f64..1.0,
        ) {
            let v = &seed[..r.len()];
            let (a, _) = gae_advantages(&r, v, gamma, 0.0, 0.0);
            for t in 0..r.len() {
                let next = if t + 1 < r.len() { v[t + 1] } else { 0.0 };
                prop_assert_eq!(a[t], r[t] + gamma * next - v[t]);
            }
        }
    }
}
