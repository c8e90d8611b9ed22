//! Discounted returns, TD residuals, GAE advantages, λ-returns, and batch
//! advantage normalization.
//!
//! All recursions run backward over one episode. Truncated episodes of
//! continuing tasks bootstrap the tail with `v̂(S_T)`; terminal episodes
//! (bandits) pass `bootstrap = 0`.

/// G_t = r_t + γ·G_{t+1}, with G_T = `bootstrap`.
pub fn discounted_returns(rewards: &[f64], gamma: f64, bootstrap: f64) -> Vec<f64> {
    let mut g = vec![0.0; rewards.len()];
    let mut tail = bootstrap;
    for t in (0..rewards.len()).rev() {
        tail = rewards[t] + gamma * tail;
        g[t] = tail;
    }
    g
}

/// δ_t = r_t + γ·v̂(S_{t+1}) − v̂(S_t), where `values[t] = v̂(S_t)` for
/// t < T and `bootstrap = v̂(S_T)` (0 for terminal episodes).
pub fn td_residuals(rewards: &[f64], values: &[f64], gamma: f64, bootstrap: f64) -> Vec<f64> {
    assert_eq!(
        rewards.len(),
        values.len(),
        "one value per visited state, bootstrap carried separately"
    );
    let t_len = rewards.len();
    (0..t_len)
        .map(|t| {
            let next_v = if t + 1 < t_len { values[t + 1] } else { bootstrap };
            rewards[t] + gamma * next_v - values[t]
        })
        .collect()
}

/// H_t = δ_t + γλ·H_{t+1}, H_T = 0 (equivalently H_t = Σ_k (γλ)ᵏ δ_{t+k}).
pub fn gae_advantages(deltas: &[f64], gamma: f64, lambda: f64) -> Vec<f64> {
    let mut h = vec![0.0; deltas.len()];
    let mut tail = 0.0;
    for t in (0..deltas.len()).rev() {
        tail = deltas[t] + gamma * lambda * tail;
        h[t] = tail;
    }
    h
}

/// G^λ_t = H_t + v̂(S_t); exact by construction, kept as its own step so the
/// identity is visible at call sites.
pub fn lambda_returns(advantages: &[f64], values: &[f64]) -> Vec<f64> {
    assert_eq!(advantages.len(), values.len());
    advantages.iter().zip(values).map(|(h, v)| h + v).collect()
}

/// Standardize a whole iteration batch of advantages to zero mean / unit
/// population std, flooring the std at 1e-8 (an all-equal batch maps to
/// zeros rather than dividing by ~0).
pub fn normalize_advantages(advantages: &[f64]) -> Vec<f64> {
    assert!(advantages.len() >= 2, "need a batch to standardize");
    let mean = crate::stats::mean(advantages);
    let std = crate::stats::population_std(advantages).max(1e-8);
    advantages.iter().map(|h| (h - mean) / std).collect()
}
