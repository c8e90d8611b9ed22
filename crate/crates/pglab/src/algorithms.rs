//! Practical training loops: proximal policy optimization (`ppo`) and the
//! reward-policy-gradient variant (`rpg`), sharing batch collection, advantage
//! estimation, ratio clipping, KL-based early stopping, and gradient clipping.
//!
//! Both algorithms maximize a per-sample surrogate whose ratio coefficient
//! ρ̂ is treated as a frozen scalar (its own θ-dependence is detached):
//!
//! * PPO:  surrogate = ρ̂·Ĥ·log π_θ(A|S) up to a constant — gradient
//!   ρ̂·Ĥ·∇log π, with ρ̂ from [`modified_ratio`] (zero outside the trust
//!   region, where standard clipping has zero gradient too).
//! * RPG:  surrogate = ρ̂·[ r̂(S, f_θ(ε;S)) + (γG^λ_{t+1} − v̂_φ(S))·log π_θ(A|S) ] —
//!   the immediate reward is differentiated *through the action* via the
//!   reparameterization f_θ, and only the future-return coefficient
//!   multiplies the score.
//!
//! The normalized advantage Ĥ feeds ρ̂'s sign test (and PPO's objective);
//! RPG's score coefficient uses the unnormalized γG^λ_{t+1} − v̂. λ-returns
//! are computed once at collection and frozen for the whole iteration; the
//! value (and reward) networks regress every minibatch of every epoch, even
//! after KL early stopping halts further policy updates. Unlike the
//! single-batch estimators, these loops use no γᵗ state weighting (standard
//! practice for this family of algorithms).

use crate::envs::{rollout, Environment};
use crate::error::{ensure_finite, Error, Result};
use crate::nn::{Adam, Approximator, Architecture};
use crate::policy::GaussianPolicy;
use crate::returns::{discounted_returns, gae_advantages, lambda_returns, normalize_advantages, td_residuals};
use crate::rng::Seed;
use crate::stats::{axpy, mean, norm};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algo {
    Ppo,
    Rpg,
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algo::Ppo => "ppo",
            Algo::Rpg => "rpg",
        })
    }
}

impl FromStr for Algo {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ppo" => Ok(Algo::Ppo),
            "rpg" => Ok(Algo::Rpg),
            other => Err(Error::InvalidArg(format!(
                "unknown algorithm '{other}' (expected ppo or rpg)"
            ))),
        }
    }
}

/// Where RPG's reward model comes from: the analytic environment reward or a
/// regressed network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardMode {
    True,
    Learned,
}

impl fmt::Display for RewardMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RewardMode::True => "true",
            RewardMode::Learned => "learned",
        })
    }
}

impl FromStr for RewardMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "true" => Ok(RewardMode::True),
            "learned" => Ok(RewardMode::Learned),
            other => Err(Error::InvalidArg(format!(
                "unknown reward mode '{other}' (expected true or learned)"
            ))),
        }
    }
}

/// Full training configuration. `preset(env)` gives the per-task defaults;
/// any field can be overridden from a TOML file or the command line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub env: String,
    /// Bandit reward width b² (peaks/holes only).
    pub b_sq: Option<f64>,
    pub algo: Algo,
    pub reward_mode: RewardMode,
    pub policy_lr: f64,
    pub value_lr: f64,
    pub reward_lr: f64,
    pub hidden: Vec<usize>,
    pub steps_per_iter: usize,
    pub total_steps: usize,
    pub epochs: usize,
    pub minibatch: usize,
    pub gamma: f64,
    pub lambda: f64,
    pub clip_eps: f64,
    pub target_kl: f64,
    pub obs_clip: f64,
    pub grad_clip: f64,
    pub log_std_init: f64,
    pub learn_std: bool,
    /// Zero the ratio below 1+ε (instead of 1−ε) in the negative-advantage
    /// branch, reproducing the printed form of the modified ratio for audits.
    pub paper_literal_clip: bool,
    /// Record wall-clock seconds per iteration. Off by default so output
    /// files are byte-reproducible.
    pub timing: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            env: "peaks".into(),
            b_sq: None,
            algo: Algo::Ppo,
            reward_mode: RewardMode::True,
            policy_lr: 3e-4,
            value_lr: 1e-3,
            reward_lr: 1e-3,
            hidden: vec![64, 64],
            steps_per_iter: 2048,
            total_steps: 102_400,
            epochs: 10,
            minibatch: 64,
            gamma: 0.99,
            lambda: 0.95,
            clip_eps: 0.2,
            target_kl: 0.01,
            obs_clip: 10.0,
            grad_clip: 2.0,
            log_std_init: 0.0,
            learn_std: true,
            paper_literal_clip: false,
            timing: false,
        }
    }
}

impl TrainConfig {
    /// Per-task defaults. The shared base is the standard configuration
    /// (learning rates 3e-4/1e-3/1e-3, two 64-unit hidden layers, 2048-step
    /// iterations, 10 epochs, minibatch 64, γ 0.99, λ 0.95, ε 0.2, target KL
    /// 0.01, observation clip 10, gradient clip 2); bandits shrink the batch
    /// to one 16-pull iteration with gradient clip 1, the climbing task uses
    /// single-epoch full-batch updates of 40 steps with gradient clip 0.5.
    pub fn preset(env: &str) -> Result<TrainConfig> {
        let mut cfg = TrainConfig { env: env.to_string(), ..TrainConfig::default() };
        match env {
            "lqg" => {
                cfg.log_std_init = 0.1f64.ln();
                cfg.learn_std = false;
            }
            "peaks" | "holes" => {
                cfg.steps_per_iter = 16;
                cfg.minibatch = 16;
                cfg.grad_clip = 1.0;
                cfg.log_std_init = 0.69f64.ln();
                cfg.total_steps = 8192;
            }
            "mountain" => {
                cfg.epochs = 1;
                cfg.steps_per_iter = 40;
                cfg.minibatch = 40;
                cfg.grad_clip = 0.5;
                cfg.log_std_init = -0.5;
                cfg.total_steps = 80_000;
            }
            other => {
                return Err(Error::InvalidArg(format!(
                    "no preset for environment '{other}'"
                )))
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let positive: [(&str, f64); 8] = [
            ("policy_lr", self.policy_lr),
            ("value_lr", self.value_lr),
            ("reward_lr", self.reward_lr),
            ("gamma", self.gamma),
            ("lambda", self.lambda),
            ("target_kl", self.target_kl),
            ("obs_clip", self.obs_clip),
            ("grad_clip", self.grad_clip),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if self.gamma > 1.0 || self.lambda > 1.0 {
            return Err(Error::Config("gamma and lambda must lie in (0, 1]".into()));
        }
        if !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            return Err(Error::Config(format!(
                "clip_eps must lie in (0, 1), got {}",
                self.clip_eps
            )));
        }
        if self.steps_per_iter < 2 {
            return Err(Error::Config("steps_per_iter must be at least 2".into()));
        }
        if self.minibatch == 0 || self.epochs == 0 {
            return Err(Error::Config("epochs and minibatch must be positive".into()));
        }
        if self.total_steps == 0 {
            // Zero total steps is allowed: training is a no-op that emits an
            // empty metrics table.
        }
        if !self.log_std_init.is_finite() {
            return Err(Error::Config("log_std_init must be finite".into()));
        }
        Ok(())
    }
}

/// ρ̂ = 0 when the update would leave the trust region in the favoured
/// direction — H > 0 with ρ above 1+ε, or H < 0 with ρ below 1−ε — and ρ
/// otherwise, so ρ̂·∇X reproduces the clipped-surrogate gradient. With
/// `literal` the negative-advantage branch zeroes below 1+ε instead (the
/// printed form of the rule, kept for auditing).
pub fn modified_ratio(h: f64, rho: f64, eps: f64, literal: bool) -> f64 {
    let lower = if literal { 1.0 + eps } else { 1.0 - eps };
    if (h > 0.0 && rho > 1.0 + eps) || (h < 0.0 && rho < lower) {
        0.0
    } else {
        rho
    }
}

/// Global-norm clipping in place: g ← g·min(1, max_norm/‖g‖₂). Returns the
/// pre-clip norm.
pub fn clip_gradient(grad: &mut [f64], max_norm: f64) -> f64 {
    assert!(max_norm > 0.0, "clip threshold must be positive");
    let n = norm(grad);
    if n > max_norm {
        let scale = max_norm / n;
        for g in grad.iter_mut() {
            *g *= scale;
        }
    }
    n
}

// ---------------------------------------------------------------------------
// Collected iteration batch
// ---------------------------------------------------------------------------

/// One iteration's experience, flattened across whole episodes, with
/// everything that stays frozen during the epochs: old log-probabilities,
/// returns, normalized advantages, and the λ-return shifted one step
/// (γ·G^λ_{t+1}, bootstrapped with v̂(S_T) at truncation, 0 at termination).
#[derive(Debug, Clone)]
pub struct FlatBatch {
    pub state_dim: usize,
    pub action_dim: usize,
    pub n: usize,
    pub states: Vec<f64>,
    pub actions: Vec<f64>,
    pub noises: Vec<f64>,
    pub rewards: Vec<f64>,
    pub old_logp: Vec<f64>,
    pub returns: Vec<f64>,
    pub adv: Vec<f64>,
    pub glam_next: Vec<f64>,
    pub episode_returns: Vec<f64>,
    pub env_steps: usize,
}

impl FlatBatch {
    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.state_dim..(i + 1) * self.state_dim]
    }
    pub fn action(&self, i: usize) -> &[f64] {
        &self.actions[i * self.action_dim..(i + 1) * self.action_dim]
    }
    pub fn noise(&self, i: usize) -> &[f64] {
        &self.noises[i * self.action_dim..(i + 1) * self.action_dim]
    }
}

/// Roll out enough whole episodes to cover `steps_per_iter` environment
/// steps (rounding the episode count up) and precompute the frozen
/// per-sample quantities. The value network used for residuals/λ-returns is
/// the one passed here — the state of φ at collection time.
pub fn collect_batch(
    env: &dyn Environment,
    policy: &GaussianPolicy,
    value: Option<&Approximator>,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<FlatBatch> {
    let spec = env.spec();
    let n_episodes = cfg.steps_per_iter.div_ceil(spec.horizon).max(1);
    let trajs = rollout(env, policy, n_episodes, rng, Some(cfg.obs_clip))?;
    let (sd, ad) = (spec.state_dim, spec.action_dim);
    let mut batch = FlatBatch {
        state_dim: sd,
        action_dim: ad,
        n: 0,
        states: Vec::new(),
        actions: Vec::new(),
        noises: Vec::new(),
        rewards: Vec::new(),
        old_logp: Vec::new(),
        returns: Vec::new(),
        adv: Vec::new(),
        glam_next: Vec::new(),
        episode_returns: Vec::new(),
        env_steps: 0,
    };
    let mut raw_adv = Vec::new();
    for traj in &trajs {
        let t_len = traj.len();
        let values: Vec<f64> = match value {
            Some(net) => (0..=t_len)
                .map(|t| Ok(net.forward(traj.state(t))?[0]))
                .collect::<Result<_>>()?,
            None => vec![0.0; t_len + 1],
        };
        let bootstrap = if traj.terminal { 0.0 } else { values[t_len] };
        let deltas = td_residuals(&traj.rewards, &values[..t_len], cfg.gamma, bootstrap);
        let h = gae_advantages(&deltas, cfg.gamma, cfg.lambda);
        let g = discounted_returns(&traj.rewards, cfg.gamma, bootstrap);
        let glam = lambda_returns(&h, &values[..t_len]);
        for t in 0..t_len {
            batch.states.extend_from_slice(traj.state(t));
            batch.actions.extend_from_slice(traj.action(t));
            batch.noises.extend_from_slice(traj.noise(t));
            batch.rewards.push(traj.rewards[t]);
            batch.old_logp.push(policy.log_prob(traj.state(t), traj.action(t))?);
            batch.returns.push(g[t]);
            let next = if t + 1 < t_len { glam[t + 1] } else { bootstrap };
            batch.glam_next.push(cfg.gamma * next);
        }
        raw_adv.extend_from_slice(&h);
        batch.episode_returns.push(traj.total_reward());
        batch.env_steps += t_len;
    }
    batch.n = batch.rewards.len();
    batch.adv = normalize_advantages(&raw_adv);
    ensure_finite("collected advantages", &batch.adv)?;
    Ok(batch)
}

// ---------------------------------------------------------------------------
// Per-minibatch terms
// ---------------------------------------------------------------------------

/// RPG's reward model: analytic environment reward or regressed network
/// (inputs are the state–action concatenation).
pub enum RewardModel<'a> {
    Exact(&'a dyn Environment),
    Net(&'a Approximator),
}

impl RewardModel<'_> {
    pub fn value(&self, s: &[f64], a: &[f64]) -> Result<f64> {
        match self {
            RewardModel::Exact(env) => Ok(env.reward(s, a)),
            RewardModel::Net(net) => {
                let input = [s, a].concat();
                Ok(net.forward(&input)?[0])
            }
        }
    }

    pub fn grad_action(&self, s: &[f64], a: &[f64]) -> Result<Vec<f64>> {
        match self {
            RewardModel::Exact(env) => Ok(env.reward_grad_action(s, a)),
            RewardModel::Net(net) => {
                let input = [s, a].concat();
                let gi = net.grad_input(&input, &[1.0])?;
                Ok(gi[s.len()..].to_vec())
            }
        }
    }
}

/// Policy-side quantities of one minibatch visit. `ascent_grad` points in
/// the direction that increases the surrogate; `approx_kl` is the sampled
/// mean of log π_old − log π_new before any update from this minibatch.
#[derive(Debug, Clone)]
pub struct PolicyTerms {
    pub ascent_grad: Vec<f64>,
    pub surrogate: f64,
    pub clip_frac: f64,
    pub approx_kl: f64,
}

pub fn ppo_policy_terms(
    policy: &GaussianPolicy,
    batch: &FlatBatch,
    idx: &[usize],
    eps: f64,
    literal: bool,
) -> Result<PolicyTerms> {
    let m = idx.len() as f64;
    let mut grad = vec![0.0; policy.param_len()];
    let (mut surrogate, mut kl, mut clipped) = (0.0, 0.0, 0usize);
    for &i in idx {
        let (s, a) = (batch.state(i), batch.action(i));
        let new_lp = policy.log_prob(s, a)?;
        kl += batch.old_logp[i] - new_lp;
        let rho = (new_lp - batch.old_logp[i]).exp();
        let rho_hat = modified_ratio(batch.adv[i], rho, eps, literal);
        if rho_hat == 0.0 {
            clipped += 1;
        } else {
            axpy(&mut grad, rho_hat * batch.adv[i] / m, &policy.score(s, a)?);
        }
        surrogate += rho_hat * batch.adv[i] / m;
    }
    ensure_finite("policy-surrogate gradient", &grad)?;
    Ok(PolicyTerms {
        ascent_grad: grad,
        surrogate,
        clip_frac: clipped as f64 / m,
        approx_kl: kl / m,
    })
}

pub fn rpg_policy_terms(
    policy: &GaussianPolicy,
    value: Option<&Approximator>,
    reward: &RewardModel,
    batch: &FlatBatch,
    idx: &[usize],
    eps: f64,
    literal: bool,
) -> Result<PolicyTerms> {
    let m = idx.len() as f64;
    let mut grad = vec![0.0; policy.param_len()];
    let (mut surrogate, mut kl, mut clipped) = (0.0, 0.0, 0usize);
    for &i in idx {
        let (s, a, eps_t) = (batch.state(i), batch.action(i), batch.noise(i));
        let new_lp = policy.log_prob(s, a)?;
        kl += batch.old_logp[i] - new_lp;
        let rho = (new_lp - batch.old_logp[i]).exp();
        let rho_hat = modified_ratio(batch.adv[i], rho, eps, literal);
        if rho_hat == 0.0 {
            clipped += 1;
            continue;
        }
        // Reward differentiated through the reparameterized action at the
        // current parameters; the future-return coefficient multiplies the
        // score of the *collected* action.
        let a_tilde = policy.reparam(s, eps_t)?;
        let dr = reward.grad_action(s, &a_tilde)?;
        axpy(&mut grad, rho_hat / m, &policy.reparam_param_vjp(s, eps_t, &dr)?);
        let v_here = match value {
            Some(net) => net.forward(s)?[0],
            None => 0.0,
        };
        let coeff = batch.glam_next[i] - v_here;
        if coeff != 0.0 {
            axpy(&mut grad, rho_hat * coeff / m, &policy.score(s, a)?);
        }
        surrogate += rho_hat * (reward.value(s, &a_tilde)? + coeff * new_lp) / m;
    }
    ensure_finite("policy-surrogate gradient", &grad)?;
    Ok(PolicyTerms {
        ascent_grad: grad,
        surrogate,
        clip_frac: clipped as f64 / m,
        approx_kl: kl / m,
    })
}

/// Mean squared error of `net` against per-sample targets, with its
/// parameter gradient (descent direction), over the index set.
fn mse_terms<F>(
    net: &Approximator,
    input_of: F,
    targets: &[f64],
    idx: &[usize],
) -> Result<(f64, Vec<f64>)>
where
    F: Fn(usize) -> Vec<f64>,
{
    let m = idx.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; net.params.len()];
    for &i in idx {
        let input = input_of(i);
        let pred = net.forward(&input)?[0];
        let err = pred - targets[i];
        loss += err * err / m;
        axpy(&mut grad, 2.0 * err / m, &net.grad_params(&input, &[1.0])?);
    }
    if !loss.is_finite() {
        return Err(Error::non_finite("regression loss", format!("loss = {loss}")));
    }
    ensure_finite("regression gradient", &grad)?;
    Ok((loss, grad))
}

/// E[(v̂_φ(S_t) − G_t)²] and its φ-gradient over a minibatch.
pub fn value_regression(
    net: &Approximator,
    batch: &FlatBatch,
    idx: &[usize],
) -> Result<(f64, Vec<f64>)> {
    mse_terms(net, |i| batch.state(i).to_vec(), &batch.returns, idx)
}

/// E[(r̂_w(S_t, A_t) − R_{t+1})²] on realized rewards and its w-gradient.
pub fn reward_regression(
    net: &Approximator,
    batch: &FlatBatch,
    idx: &[usize],
) -> Result<(f64, Vec<f64>)> {
    mse_terms(
        net,
        |i| [batch.state(i), batch.action(i)].concat(),
        &batch.rewards,
        idx,
    )
}

// ---------------------------------------------------------------------------
// Agent and training loop
// ---------------------------------------------------------------------------

/// Learnable state of one run: policy, optional value network (one-step
/// terminal tasks carry none — their advantage is the reward itself),
/// optional reward network (`rpg` with learned rewards), and one optimizer
/// per network.
pub struct Agent {
    pub policy: GaussianPolicy,
    pub value: Option<Approximator>,
    pub reward: Option<Approximator>,
    pub policy_opt: Adam,
    pub value_opt: Option<Adam>,
    pub reward_opt: Option<Adam>,
}

impl Agent {
    pub fn new(env: &dyn Environment, cfg: &TrainConfig, seed: Seed) -> Result<Agent> {
        let spec = env.spec();
        let policy = match env.id() {
            // Per-coordinate linear gain, zero-initialized.
            "lqg" => GaussianPolicy::new(
                Approximator::zeros(Architecture::DiagLinear { dim: spec.state_dim }),
                cfg.log_std_init,
                cfg.learn_std,
            ),
            // Zero-initialized affine mean: the bandit state is the constant
            // 0, so only the bias (= the mean action) receives gradient.
            "peaks" | "holes" => GaussianPolicy::new(
                Approximator::zeros(Architecture::Linear {
                    inputs: spec.state_dim,
                    outputs: spec.action_dim,
                }),
                cfg.log_std_init,
                cfg.learn_std,
            ),
            _ => GaussianPolicy::new(
                Approximator::init(
                    Architecture::Mlp {
                        inputs: spec.state_dim,
                        hidden: cfg.hidden.clone(),
                        outputs: spec.action_dim,
                    },
                    seed.child(0),
                ),
                cfg.log_std_init,
                cfg.learn_std,
            ),
        };
        let bandit = spec.terminal && spec.horizon == 1;
        let value = if bandit {
            None
        } else {
            Some(Approximator::init(
                Architecture::Mlp {
                    inputs: spec.state_dim,
                    hidden: cfg.hidden.clone(),
                    outputs: 1,
                },
                seed.child(1),
            ))
        };
        let reward = if cfg.algo == Algo::Rpg && cfg.reward_mode == RewardMode::Learned {
            Some(Approximator::init(
                Architecture::Mlp {
                    inputs: spec.state_dim + spec.action_dim,
                    hidden: cfg.hidden.clone(),
                    outputs: 1,
                },
                seed.child(2),
            ))
        } else {
            None
        };
        let policy_opt = Adam::new(cfg.policy_lr, policy.param_len());
        let value_opt = value.as_ref().map(|v| Adam::new(cfg.value_lr, v.params.len()));
        let reward_opt = reward.as_ref().map(|r| Adam::new(cfg.reward_lr, r.params.len()));
        Ok(Agent {
            policy,
            value,
            reward,
            policy_opt,
            value_opt,
            reward_opt,
        })
    }
}

/// One per-iteration metrics row. `kl` averages the pre-update sampled KL
/// over the minibatches where the policy side ran; `clip_frac`, `grad_norm`
/// (pre-clip policy gradient norm), and `policy_loss` (negated surrogate)
/// average over the minibatches whose policy update was applied.
#[derive(Debug, Clone, PartialEq)]
pub struct IterMetrics {
    pub iter: usize,
    pub env_steps: usize,
    pub mean_return: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub reward_loss: f64,
    pub kl: f64,
    pub clip_frac: f64,
    pub grad_norm: f64,
    pub wallclock_s: f64,
}

fn fisher_yates(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        idx.swap(i, j);
    }
    idx
}

/// Run one collect-and-update iteration. Returns the metrics row and the
/// number of applied policy updates (useful for observing KL early stops).
pub fn run_iteration(
    agent: &mut Agent,
    env: &dyn Environment,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
    iter: usize,
    env_steps_before: usize,
    started: Instant,
) -> Result<(IterMetrics, usize)> {
    let batch = collect_batch(env, &agent.policy, agent.value.as_ref(), cfg, rng)?;
    let mut policy_frozen = false;
    let mut policy_updates = 0usize;
    let (mut kl_sum, mut kl_n) = (0.0, 0usize);
    let (mut ploss_sum, mut clip_sum, mut gnorm_sum) = (0.0, 0.0, 0.0);
    let (mut vloss_sum, mut vloss_n) = (0.0, 0usize);
    let (mut rloss_sum, mut rloss_n) = (0.0, 0usize);
    for _epoch in 0..cfg.epochs {
        let order = fisher_yates(batch.n, rng);
        for mb in order.chunks(cfg.minibatch) {
            if !policy_frozen {
                let terms = match cfg.algo {
                    Algo::Ppo => {
                        ppo_policy_terms(&agent.policy, &batch, mb, cfg.clip_eps, cfg.paper_literal_clip)?
                    }
                    Algo::Rpg => {
                        let reward_model = match (cfg.reward_mode, agent.reward.as_ref()) {
                            (RewardMode::Learned, Some(net)) => RewardModel::Net(net),
                            _ => RewardModel::Exact(env),
                        };
                        rpg_policy_terms(
                            &agent.policy,
                            agent.value.as_ref(),
                            &reward_model,
                            &batch,
                            mb,
                            cfg.clip_eps,
                            cfg.paper_literal_clip,
                        )?
                    }
                };
                kl_sum += terms.approx_kl;
                kl_n += 1;
                if terms.approx_kl > cfg.target_kl {
                    // Sampled KL overshot before this update: freeze the
                    // policy for the rest of the iteration (regressions
                    // below keep running).
                    policy_frozen = true;
                } else {
                    let mut grad: Vec<f64> = terms.ascent_grad.iter().map(|g| -g).collect();
                    gnorm_sum += clip_gradient(&mut grad, cfg.grad_clip);
                    let mut params = agent.policy.params();
                    agent.policy_opt.step(&mut params, &grad)?;
                    agent.policy.set_params(&params)?;
                    ploss_sum += -terms.surrogate;
                    clip_sum += terms.clip_frac;
                    policy_updates += 1;
                }
            }
            if let (Some(net), Some(opt)) = (agent.value.as_mut(), agent.value_opt.as_mut()) {
                let (loss, mut grad) = value_regression(net, &batch, mb)?;
                clip_gradient(&mut grad, cfg.grad_clip);
                opt.step(&mut net.params, &grad)?;
                vloss_sum += loss;
                vloss_n += 1;
            }
            if let (Some(net), Some(opt)) = (agent.reward.as_mut(), agent.reward_opt.as_mut()) {
                let (loss, mut grad) = reward_regression(net, &batch, mb)?;
                clip_gradient(&mut grad, cfg.grad_clip);
                opt.step(&mut net.params, &grad)?;
                rloss_sum += loss;
                rloss_n += 1;
            }
        }
    }
    let avg = |sum: f64, n: usize| if n == 0 { 0.0 } else { sum / n as f64 };
    let row = IterMetrics {
        iter,
        env_steps: env_steps_before + batch.env_steps,
        mean_return: mean(&batch.episode_returns),
        policy_loss: avg(ploss_sum, policy_updates),
        value_loss: avg(vloss_sum, vloss_n),
        reward_loss: avg(rloss_sum, rloss_n),
        kl: avg(kl_sum, kl_n),
        clip_frac: avg(clip_sum, policy_updates),
        grad_norm: avg(gnorm_sum, policy_updates),
        wallclock_s: if cfg.timing {
            started.elapsed().as_secs_f64()
        } else {
            0.0
        },
    };
    Ok((row, policy_updates))
}

pub struct TrainRun {
    pub metrics: Vec<IterMetrics>,
    pub agent: Agent,
}

/// Train one agent until `total_steps` environment steps have been
/// collected. Deterministic for a given seed: the run rng drives rollouts
/// and minibatch shuffles, and network initialization uses seed children.
pub fn train(env: &dyn Environment, cfg: &TrainConfig, seed: Seed) -> Result<TrainRun> {
    cfg.validate()?;
    let mut agent = Agent::new(env, cfg, seed.child(0))?;
    let mut rng = seed.child(1).rng();
    let started = Instant::now();
    let mut metrics = Vec::new();
    let mut env_steps = 0usize;
    let mut iter = 0usize;
    while env_steps < cfg.total_steps {
        let (row, _) = run_iteration(&mut agent, env, cfg, &mut rng, iter, env_steps, started)
            .map_err(|e| Error::InvalidArg(format!("iteration {iter} failed: {e}")))?;
        env_steps = row.env_steps;
        metrics.push(row);
        iter += 1;
    }
    Ok(TrainRun { metrics, agent })
}
