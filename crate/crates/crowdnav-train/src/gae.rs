//! Generalized advantage estimation over one rollout segment.

/// Advantages and returns for a segment of consecutive transitions from one
/// environment.
///
/// `rewards[t]`, `values[t]`, and `dones[t]` describe transition `t`;
/// `bootstrap_value` is the value estimate of the state after the final
/// transition and only matters when the segment ends mid-episode. A `true`
/// done flag cuts both the temporal-difference target and the recursion, so
/// credit never leaks across episode boundaries.
pub fn gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap_value: f64,
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(rewards.len(), values.len());
    assert_eq!(rewards.len(), dones.len());
    let n = rewards.len();
    let mut advantages = vec![0.0; n];
    let mut carry = 0.0;
    for t in (0..n).rev() {
        let next_value = if t + 1 < n {
            values[t + 1]
        } else {
            bootstrap_value
        };
        let nonterminal = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * nonterminal - values[t];
        carry = delta + gamma * lambda * nonterminal * carry;
        advantages[t] = carry;
    }
    let returns = advantages
        .iter()
        .zip(values)
        .map(|(a, v)| a + v)
        .collect();
    (advantages, returns)
}
