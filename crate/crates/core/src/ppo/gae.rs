/// GAE over one environment's sequence. `dones[t]` marks that the episode
/// ended after step `t`; `last_value` bootstraps the final step.
pub fn compute_gae(rewards: &[f64], values: &[f64], dones: &[bool], last_value: f64, gamma: f64, lam: f64) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    assert!(values.len() == n && dones.len() == n);
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    let mut next_value = last_value;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        next_adv = delta + gamma * lam * live * next_adv;
        adv[t] = next_adv;
        next_value = values[t];
    }
    let ret = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, ret)
}

/// GAE for a step-major batch (`index = step · num_envs + env`).
pub fn compute_gae_batch(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    last_values: &[f64],
    gamma: f64,
    lam: f64,
) -> (Vec<f64>, Vec<f64>) {
    let num_envs = last_values.len();
    let steps = rewards.len() / num_envs;
    let mut adv = vec![0.0; rewards.len()];
    let mut ret = vec![0.0; rewards.len()];
    let mut r = vec![0.0; steps];
    let mut v = vec![0.0; steps];
    let mut d = vec![false; steps];
    for e in 0..num_envs {
        for t in 0..steps {
            r[t] = rewards[t * num_envs + e];
            v[t] = values[t * num_envs + e];
            d[t] = dones[t * num_envs + e];
        }
        let (a, rt) = compute_gae(&r, &v, &d, last_values[e], gamma, lam);
        for t in 0..steps {
            adv[t * num_envs + e] = a[t];
            ret[t * num_envs + e] = rt[t];
        }
    }
    (adv, ret)
}
