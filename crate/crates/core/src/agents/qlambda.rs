//! Peng-style Q(lambda) return targets.

/// Backward-recursive lambda-return targets over one sequence.
///
/// `next_values[t]` is the target-network estimate of the state reached after
/// step `t` (i.e. conditioned on observations up to `t + 1`), evaluated at
/// the target policy's action. The recursion is
///
/// ```text
/// G[t] = r[t]                                                  if done[t]
/// G[t] = r[t] + gamma * ((1 - lambda) * next_values[t] + lambda * G[t+1])
/// ```
///
/// seeded past the window end with `G[T] = next_values[T-1]`, so the final
/// step of an unfinished window collapses to the one-step bootstrap
/// `r + gamma * Q`. With `lambda = 0` every step collapses to that one-step
/// target; with `lambda = 1` and a terminal tail the targets become
/// undiscounted Monte-Carlo returns-to-go.
pub fn peng_lambda_targets(
    rewards: &[f64],
    dones: &[bool],
    next_values: &[f64],
    gamma: f64,
    lambda: f64,
) -> Vec<f64> {
    let t_len = rewards.len();
    assert!(t_len > 0, "empty sequence");
    assert_eq!(dones.len(), t_len, "dones length mismatch");
    assert_eq!(next_values.len(), t_len, "next_values length mismatch");
    assert!((0.0..=1.0).contains(&lambda), "lambda out of [0,1]: {lambda}");
    assert!(gamma > 0.0 && gamma <= 1.0, "gamma out of (0,1]: {gamma}");

    let mut targets = vec![0.0; t_len];
    let mut ahead = next_values[t_len - 1];
    for t in (0..t_len).rev() {
        let g = if dones[t] {
            rewards[t]
        } else {
            rewards[t] + gamma * ((1.0 - lambda) * next_values[t] + lambda * ahead)
        };
        targets[t] = g;
        ahead = g;
    }
    targets
}
