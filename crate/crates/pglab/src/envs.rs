//! Analytic environments.
//!
//! All four tasks expose their exact (noiseless) reward function and its
//! exact action-gradient alongside the usual sampling interface, so gradient
//! estimators can be compared against closed-form oracles:
//!
//! * `lqg` — 2-dim discrete-time linear-quadratic regulator,
//!   `s' = A·s + B·a`, `r = −sᵀQs − aᵀZa`, diagonal matrices.
//! * `peaks` — 1-dim continuous bandit, `r(a) = exp(−(a−1)²/b²)`.
//! * `holes` — 1-dim continuous bandit, `r(a) = 1 − exp(−a²/b²)`.
//! * `mountain` — 2-dim "Mountain Climbing": 10 steps toward ν = (1, −1)
//!   with clipped actions and box-clipped states.
//!
//! Bandit pulls observe the reward plus 0.01·N(0,1) noise; the oracles are
//! always noiseless. Every episode here is fixed-horizon: bandits terminate
//! (no bootstrap value), the other tasks are truncations of continuing
//! problems (final-state values are bootstrapped downstream).

use crate::error::{ensure_finite, Error, Result};
use crate::policy::GaussianPolicy;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvSpec {
    pub state_dim: usize,
    pub action_dim: usize,
    pub horizon: usize,
    pub gamma: f64,
    /// True when the episode ends by reaching a terminal state (bandits):
    /// no value bootstrap at the last step. False for fixed-horizon
    /// truncations of continuing tasks.
    pub terminal: bool,
}

pub trait Environment: Send + Sync {
    fn spec(&self) -> EnvSpec;
    fn id(&self) -> &'static str;
    fn initial_state(&self) -> Vec<f64>;
    /// Advance one step from the raw state; returns `(next_state, realized
    /// reward)`. The realized reward may be noisy; the rng drives all
    /// environment stochasticity.
    fn step(&self, s: &[f64], a: &[f64], rng: &mut ChaCha8Rng) -> (Vec<f64>, f64);
    /// Exact noiseless reward.
    fn reward(&self, s: &[f64], a: &[f64]) -> f64;
    /// Exact gradient of the noiseless reward with respect to the action
    /// (subgradient convention at clip boundaries: saturated coordinates get
    /// zero).
    fn reward_grad_action(&self, s: &[f64], a: &[f64]) -> Vec<f64>;
}

// ---------------------------------------------------------------------------
// LQG regulator
// ---------------------------------------------------------------------------

/// Parameters of the 2-dim diagonal LQG task. Defaults: A = 0.01·I,
/// B = 1e-4·I, Q = Z = I, policy noise σ = 0.1, s₀ = (0.5, 0.5), γ = 0.99,
/// horizon 100.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LqgParams {
    pub a_diag: [f64; 2],
    pub b_diag: [f64; 2],
    pub q_diag: [f64; 2],
    pub z_diag: [f64; 2],
    /// Policy noise standard deviation (a property of the Gaussian policy
    /// used on this task, carried here so oracles can account for it).
    pub sigma: f64,
    pub s0: [f64; 2],
    pub gamma: f64,
    pub horizon: usize,
}

impl Default for LqgParams {
    fn default() -> Self {
        LqgParams {
            a_diag: [0.01, 0.01],
            b_diag: [1e-4, 1e-4],
            q_diag: [1.0, 1.0],
            z_diag: [1.0, 1.0],
            sigma: 0.1,
            s0: [0.5, 0.5],
            gamma: 0.99,
            horizon: 100,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LqgEnv {
    pub params: LqgParams,
}

impl LqgEnv {
    pub fn new(params: LqgParams) -> Self {
        LqgEnv { params }
    }

    /// Construct from full 2×2 matrices; off-diagonal entries are rejected.
    pub fn from_matrices(
        a: [[f64; 2]; 2],
        b: [[f64; 2]; 2],
        q: [[f64; 2]; 2],
        z: [[f64; 2]; 2],
        rest: LqgParams,
    ) -> Result<Self> {
        for (name, m) in [("A", &a), ("B", &b), ("Q", &q), ("Z", &z)] {
            if m[0][1] != 0.0 || m[1][0] != 0.0 {
                return Err(Error::InvalidArg(format!(
                    "{name} must be diagonal, got off-diagonal entries ({}, {})",
                    m[0][1], m[1][0]
                )));
            }
        }
        Ok(LqgEnv {
            params: LqgParams {
                a_diag: [a[0][0], a[1][1]],
                b_diag: [b[0][0], b[1][1]],
                q_diag: [q[0][0], q[1][1]],
                z_diag: [z[0][0], z[1][1]],
                ..rest
            },
        })
    }
}

impl Environment for LqgEnv {
    fn spec(&self) -> EnvSpec {
        EnvSpec {
            state_dim: 2,
            action_dim: 2,
            horizon: self.params.horizon,
            gamma: self.params.gamma,
            terminal: false,
        }
    }

    fn id(&self) -> &'static str {
        "lqg"
    }

    fn initial_state(&self) -> Vec<f64> {
        self.params.s0.to_vec()
    }

    fn step(&self, s: &[f64], a: &[f64], _rng: &mut ChaCha8Rng) -> (Vec<f64>, f64) {
        let p = &self.params;
        let next = vec![
            p.a_diag[0] * s[0] + p.b_diag[0] * a[0],
            p.a_diag[1] * s[1] + p.b_diag[1] * a[1],
        ];
        (next, self.reward(s, a))
    }

    fn reward(&self, s: &[f64], a: &[f64]) -> f64 {
        let p = &self.params;
        -(p.q_diag[0] * s[0] * s[0] + p.q_diag[1] * s[1] * s[1])
            - (p.z_diag[0] * a[0] * a[0] + p.z_diag[1] * a[1] * a[1])
    }

    fn reward_grad_action(&self, _s: &[f64], a: &[f64]) -> Vec<f64> {
        let p = &self.params;
        vec![-2.0 * p.z_diag[0] * a[0], -2.0 * p.z_diag[1] * a[1]]
    }
}

// ---------------------------------------------------------------------------
// Bandits
// ---------------------------------------------------------------------------

/// Standard deviation of the additive Gaussian noise on realized bandit
/// rewards.
pub const BANDIT_REWARD_NOISE_STD: f64 = 0.01;

fn check_b_sq(b_sq: f64) -> Result<f64> {
    if b_sq <= 0.0 {
        return Err(Error::InvalidArg(format!("bandit width b² must be positive, got {b_sq}")));
    }
    Ok(b_sq)
}

fn bandit_spec() -> EnvSpec {
    EnvSpec {
        state_dim: 1,
        action_dim: 1,
        horizon: 1,
        gamma: 0.99,
        terminal: true,
    }
}

/// One-step bandit with reward `exp(−(a−1)²/b²)`: a single peak at a = 1.
#[derive(Debug, Clone, Copy)]
pub struct PeaksBandit {
    pub b_sq: f64,
}

impl PeaksBandit {
    pub fn new(b_sq: f64) -> Result<Self> {
        Ok(PeaksBandit { b_sq: check_b_sq(b_sq)? })
    }
}

impl Environment for PeaksBandit {
    fn spec(&self) -> EnvSpec {
        bandit_spec()
    }

    fn id(&self) -> &'static str {
        "peaks"
    }

    fn initial_state(&self) -> Vec<f64> {
        vec![0.0]
    }

    fn step(&self, s: &[f64], a: &[f64], rng: &mut ChaCha8Rng) -> (Vec<f64>, f64) {
        let noise: f64 = StandardNormal.sample(rng);
        (vec![0.0], self.reward(s, a) + BANDIT_REWARD_NOISE_STD * noise)
    }

    fn reward(&self, _s: &[f64], a: &[f64]) -> f64 {
        (-(a[0] - 1.0) * (a[0] - 1.0) / self.b_sq).exp()
    }

    fn reward_grad_action(&self, s: &[f64], a: &[f64]) -> Vec<f64> {
        vec![-2.0 * (a[0] - 1.0) / self.b_sq * self.reward(s, a)]
    }
}

/// One-step bandit with reward `1 − exp(−a²/b²)`: a single hole at a = 0.
#[derive(Debug, Clone, Copy)]
pub struct HolesBandit {
    pub b_sq: f64,
}

impl HolesBandit {
    pub fn new(b_sq: f64) -> Result<Self> {
        Ok(HolesBandit { b_sq: check_b_sq(b_sq)? })
    }
}

impl Environment for HolesBandit {
    fn spec(&self) -> EnvSpec {
        bandit_spec()
    }

    fn id(&self) -> &'static str {
        "holes"
    }

    fn initial_state(&self) -> Vec<f64> {
        vec![0.0]
    }

    fn step(&self, s: &[f64], a: &[f64], rng: &mut ChaCha8Rng) -> (Vec<f64>, f64) {
        let noise: f64 = StandardNormal.sample(rng);
        (vec![0.0], self.reward(s, a) + BANDIT_REWARD_NOISE_STD * noise)
    }

    fn reward(&self, _s: &[f64], a: &[f64]) -> f64 {
        1.0 - (-a[0] * a[0] / self.b_sq).exp()
    }

    fn reward_grad_action(&self, _s: &[f64], a: &[f64]) -> Vec<f64> {
        vec![2.0 * a[0] / self.b_sq * (-a[0] * a[0] / self.b_sq).exp()]
    }
}

// ---------------------------------------------------------------------------
// Mountain Climbing
// ---------------------------------------------------------------------------

const MC_TARGET: [f64; 2] = [1.0, -1.0];
const MC_ACTION_BOUND: f64 = 1.0;
const MC_STATE_BOUND: f64 = 8.0;
const MC_DYNAMICS_NOISE: f64 = 0.005;

/// Ten-step 2-dim task: walk the state toward ν = (1, −1) under clipped
/// actions, reward `exp(−‖s + clip(a) − ν‖²)`. Actions clip to [−1, 1]²
/// before both dynamics and reward; states clip to [−8, 8]²; dynamics add
/// U(−0.005, 0.005) noise per coordinate.
#[derive(Debug, Clone, Copy, Default)]
pub struct MountainClimbing;

impl MountainClimbing {
    fn clipped_action(a: &[f64]) -> [f64; 2] {
        [
            a[0].clamp(-MC_ACTION_BOUND, MC_ACTION_BOUND),
            a[1].clamp(-MC_ACTION_BOUND, MC_ACTION_BOUND),
        ]
    }
}

impl Environment for MountainClimbing {
    fn spec(&self) -> EnvSpec {
        EnvSpec {
            state_dim: 2,
            action_dim: 2,
            horizon: 10,
            gamma: 0.99,
            terminal: false,
        }
    }

    fn id(&self) -> &'static str {
        "mountain"
    }

    fn initial_state(&self) -> Vec<f64> {
        vec![0.0, 0.0]
    }

    fn step(&self, s: &[f64], a: &[f64], rng: &mut ChaCha8Rng) -> (Vec<f64>, f64) {
        let ca = Self::clipped_action(a);
        let r = self.reward(s, a);
        let mut next = vec![0.0; 2];
        for i in 0..2 {
            let u: f64 = rng.random_range(-MC_DYNAMICS_NOISE..MC_DYNAMICS_NOISE);
            next[i] = (s[i] + ca[i] + u).clamp(-MC_STATE_BOUND, MC_STATE_BOUND);
        }
        (next, r)
    }

    fn reward(&self, s: &[f64], a: &[f64]) -> f64 {
        let ca = Self::clipped_action(a);
        let d0 = s[0] + ca[0] - MC_TARGET[0];
        let d1 = s[1] + ca[1] - MC_TARGET[1];
        (-(d0 * d0 + d1 * d1)).exp()
    }

    fn reward_grad_action(&self, s: &[f64], a: &[f64]) -> Vec<f64> {
        let r = self.reward(s, a);
        let ca = Self::clipped_action(a);
        let mut g = vec![0.0; 2];
        for i in 0..2 {
            // Saturated coordinates get zero (subgradient of the clip).
            if a[i].abs() <= MC_ACTION_BOUND {
                g[i] = -2.0 * (s[i] + ca[i] - MC_TARGET[i]) * r;
            }
        }
        g
    }
}

/// Environment registry: construct by string id. Bandits take the width
/// parameter b².
pub fn make_env(id: &str, b_sq: Option<f64>) -> Result<Box<dyn Environment>> {
    match id {
        "lqg" => Ok(Box::new(LqgEnv::new(LqgParams::default()))),
        "peaks" => Ok(Box::new(PeaksBandit::new(b_sq.unwrap_or(2.0))?)),
        "holes" => Ok(Box::new(HolesBandit::new(b_sq.unwrap_or(2.0))?)),
        "mountain" => Ok(Box::new(MountainClimbing)),
        other => Err(Error::InvalidArg(format!(
            "unknown environment id {other:?} (expected lqg, peaks, holes, or mountain)"
        ))),
    }
}

// ---------------------------------------------------------------------------
// Trajectories and rollouts
// ---------------------------------------------------------------------------

/// One fixed-horizon episode, stored flat. `states` holds the T+1
/// observations as the policy saw them (clipped when an observation clip is
/// in force); `noises` holds the reparameterization noise of every action.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub state_dim: usize,
    pub action_dim: usize,
    pub states: Vec<f64>,
    pub actions: Vec<f64>,
    pub noises: Vec<f64>,
    pub rewards: Vec<f64>,
    pub terminal: bool,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn state(&self, t: usize) -> &[f64] {
        &self.states[t * self.state_dim..(t + 1) * self.state_dim]
    }

    pub fn action(&self, t: usize) -> &[f64] {
        &self.actions[t * self.action_dim..(t + 1) * self.action_dim]
    }

    pub fn noise(&self, t: usize) -> &[f64] {
        &self.noises[t * self.action_dim..(t + 1) * self.action_dim]
    }

    /// Undiscounted sum of realized rewards.
    pub fn total_reward(&self) -> f64 {
        self.rewards.iter().sum()
    }

    /// Discounted sum of realized rewards (no bootstrap).
    pub fn discounted_return(&self, gamma: f64) -> f64 {
        let mut g = 0.0;
        for &r in self.rewards.iter().rev() {
            g = r + gamma * g;
        }
        g
    }
}

/// Roll out `n_episodes` fixed-horizon episodes. When `obs_clip` is set, the
/// policy (and the stored observations) see states clamped to ±obs_clip
/// while the environment itself advances on the raw state. NaN states or
/// actions abort with diagnostics.
pub fn rollout(
    env: &dyn Environment,
    policy: &GaussianPolicy,
    n_episodes: usize,
    rng: &mut ChaCha8Rng,
    obs_clip: Option<f64>,
) -> Result<Vec<Trajectory>> {
    let spec = env.spec();
    if policy.state_dim() != spec.state_dim || policy.action_dim() != spec.action_dim {
        return Err(Error::InvalidArg(format!(
            "policy dims ({}, {}) do not match env dims ({}, {})",
            policy.state_dim(),
            policy.action_dim(),
            spec.state_dim,
            spec.action_dim
        )));
    }
    let clip_obs = |raw: &[f64]| -> Vec<f64> {
        match obs_clip {
            Some(c) => raw.iter().map(|&x| x.clamp(-c, c)).collect(),
            None => raw.to_vec(),
        }
    };
    let mut out = Vec::with_capacity(n_episodes);
    for ep in 0..n_episodes {
        let t_len = spec.horizon;
        let mut traj = Trajectory {
            state_dim: spec.state_dim,
            action_dim: spec.action_dim,
            states: Vec::with_capacity((t_len + 1) * spec.state_dim),
            actions: Vec::with_capacity(t_len * spec.action_dim),
            noises: Vec::with_capacity(t_len * spec.action_dim),
            rewards: Vec::with_capacity(t_len),
            terminal: spec.terminal,
        };
        let mut raw = env.initial_state();
        let mut obs = clip_obs(&raw);
        traj.states.extend_from_slice(&obs);
        for t in 0..t_len {
            let (a, eps) = policy.sample(&obs, rng)?;
            ensure_finite("rollout action", &a)
                .map_err(|e| Error::non_finite("rollout", format!("episode {ep} step {t}: {e}")))?;
            let (next_raw, r) = env.step(&raw, &a, rng);
            ensure_finite("rollout state", &next_raw)
                .map_err(|e| Error::non_finite("rollout", format!("episode {ep} step {t}: {e}")))?;
            traj.actions.extend_from_slice(&a);
            traj.noises.extend_from_slice(&eps);
            traj.rewards.push(r);
            raw = next_raw;
            obs = clip_obs(&raw);
            traj.states.extend_from_slice(&obs);
        }
        out.push(traj);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Approximator, Architecture};
    use crate::rng::Seed;
    use rand::Rng;

    fn dummy_rng() -> ChaCha8Rng {
        Seed::new(0).rng()
    }

    #[test]
    fn lqg_reward_examples() {
        let env = LqgEnv::new(LqgParams::default());
        assert_eq!(env.reward(&[0.5, 0.5], &[0.0, 0.0]), -0.5, "-(0.25+0.25)");
        assert_eq!(env.reward(&[0.0, 0.0], &[0.0, 0.0]), 0.0);
        let (next, _) = env.step(&[1.0, 1.0], &[1.0, 1.0], &mut dummy_rng());
        assert!((next[0] - 0.0101).abs() < 1e-15, "A·s + B·a with defaults");
        assert!((next[1] - 0.0101).abs() < 1e-15);
        let (zero_next, r) = env.step(&[0.0, 0.0], &[0.0, 0.0], &mut dummy_rng());
        assert_eq!((zero_next, r), (vec![0.0, 0.0], 0.0), "origin is a fixed point");
    }

    #[test]
    fn lqg_from_matrices_rejects_off_diagonal() {
        let diag = [[0.01, 0.0], [0.0, 0.01]];
        let bad = [[0.01, 0.5], [0.0, 0.01]];
        assert!(LqgEnv::from_matrices(bad, diag, diag, diag, LqgParams::default()).is_err());
        assert!(LqgEnv::from_matrices(diag, diag, diag, diag, LqgParams::default()).is_ok());
    }

    #[test]
    fn peaks_reward_and_gradient() {
        let env = PeaksBandit::new(2.0).unwrap();
        assert_eq!(env.reward(&[0.0], &[1.0]), 1.0, "maximum at a=1");
        assert_eq!(env.reward_grad_action(&[0.0], &[1.0]), vec![0.0]);
        let r0 = env.reward(&[0.0], &[0.0]);
        assert!((r0 - 0.6065306597126334).abs() < 1e-15, "exp(-1/2), got {r0}");
        let g0 = env.reward_grad_action(&[0.0], &[0.0])[0];
        assert!((g0 - r0).abs() < 1e-15, "-2(0-1)/2 · r = r at a=0, got {g0}");
    }

    #[test]
    fn holes_reward_and_gradient() {
        let env = HolesBandit::new(8.0).unwrap();
        assert_eq!(env.reward(&[0.0], &[0.0]), 0.0, "minimum at a=0");
        assert_eq!(env.reward_grad_action(&[0.0], &[0.0]), vec![0.0]);
        assert!(env.reward(&[0.0], &[100.0]) > 0.999, "far from the hole the reward → 1");
    }

    #[test]
    fn bandit_rejects_nonpositive_width() {
        assert!(PeaksBandit::new(0.0).is_err());
        assert!(HolesBandit::new(-2.0).is_err());
    }

    #[test]
    fn mountain_reward_examples() {
        let env = MountainClimbing;
        assert_eq!(env.reward(&[0.0, 0.0], &[1.0, -1.0]), 1.0, "s+a hits the target");
        let r = env.reward(&[0.0, 0.0], &[0.0, 0.0]);
        assert!((r - (-2.0f64).exp()).abs() < 1e-15, "‖(-1,1)‖² = 2");
        let g = env.reward_grad_action(&[0.0, 0.0], &[0.0, 0.0]);
        let e2 = (-2.0f64).exp();
        assert!((g[0] - 2.0 * e2).abs() < 1e-15 && (g[1] + 2.0 * e2).abs() < 1e-15);
    }

    #[test]
    fn mountain_saturated_actions_get_zero_gradient_and_clip_dynamics() {
        let env = MountainClimbing;
        let g = env.reward_grad_action(&[0.0, 0.0], &[2.0, 0.0]);
        assert_eq!(g[0], 0.0, "saturated coordinate");
        assert_ne!(g[1], 0.0, "unsaturated coordinate keeps its gradient");
        // Reward treats a=(2,0) as (1,0).
        assert_eq!(env.reward(&[0.0, 0.0], &[2.0, 0.0]), env.reward(&[0.0, 0.0], &[1.0, 0.0]));
        // States stay in the box under extreme pushes.
        let mut rng = dummy_rng();
        let mut s = vec![7.9, -7.9];
        for _ in 0..10 {
            let (next, _) = env.step(&s, &[5.0, -5.0], &mut rng);
            assert!(next.iter().all(|&x| x.abs() <= MC_STATE_BOUND), "state left the box: {next:?}");
            s = next;
        }
    }

    #[test]
    fn bandit_reward_noise_statistics() {
        let env = PeaksBandit::new(2.0).unwrap();
        let mut rng = Seed::new(99).rng();
        let n = 1_000_000;
        let clean = env.reward(&[0.0], &[0.3]);
        let mut acc = crate::stats::MomentAccumulator::new(1);
        for _ in 0..n {
            let (_, r) = env.step(&[0.0], &[0.3], &mut rng);
            acc.push(&[r - clean]);
        }
        let mean = acc.mean[0];
        let std = acc.variance()[0].sqrt();
        assert!(mean.abs() < 4.0 * 0.01 / 1000.0, "noise mean {mean} should vanish");
        assert!(
            (std - BANDIT_REWARD_NOISE_STD).abs() / BANDIT_REWARD_NOISE_STD < 0.01,
            "noise std {std} should be 0.01 within 1%"
        );
    }

    #[test]
    fn reward_gradients_match_finite_differences_everywhere() {
        let envs: Vec<Box<dyn Environment>> = vec![
            Box::new(LqgEnv::new(LqgParams::default())),
            Box::new(PeaksBandit::new(8.0).unwrap()),
            Box::new(HolesBandit::new(2.0).unwrap()),
            Box::new(MountainClimbing),
        ];
        let h = 1e-6;
        for env in &envs {
            let spec = env.spec();
            let mut rng = Seed::new(1234).rng();
            for case in 0..1000 {
                let s: Vec<f64> =
                    (0..spec.state_dim).map(|_| rng.random_range(-2.0..2.0)).collect();
                // Keep actions out of the ±1 clip band where the subgradient
                // convention makes two-sided differences meaningless.
                let a: Vec<f64> = (0..spec.action_dim)
                    .map(|_| loop {
                        let x: f64 = rng.random_range(-2.0..2.0);
                        if (x.abs() - 1.0).abs() > 0.01 {
                            break x;
                        }
                    })
                    .collect();
                let analytic = env.reward_grad_action(&s, &a);
                for i in 0..spec.action_dim {
                    let mut ap = a.clone();
                    ap[i] += h;
                    let fp = env.reward(&s, &ap);
                    ap[i] -= 2.0 * h;
                    let fm = env.reward(&s, &ap);
                    let fd = (fp - fm) / (2.0 * h);
                    let rel = (analytic[i] - fd).abs() / analytic[i].abs().max(1.0);
                    assert!(
                        rel < 1e-6,
                        "{} case {case} coord {i}: analytic {} vs fd {fd}",
                        env.id(),
                        analytic[i]
                    );
                }
            }
        }
    }

    fn bandit_policy() -> GaussianPolicy {
        let mean = Approximator::zeros(Architecture::Linear { inputs: 1, outputs: 1 });
        GaussianPolicy::new(mean, (0.69f64).ln(), true)
    }

    #[test]
    fn rollout_lengths_match_horizons() {
        let mut rng = Seed::new(3).rng();
        let bandit = PeaksBandit::new(2.0).unwrap();
        let trajs = rollout(&bandit, &bandit_policy(), 4, &mut rng, None).unwrap();
        assert!(trajs.iter().all(|t| t.len() == 1 && t.terminal));

        let mc = MountainClimbing;
        let mean = Approximator::init(
            Architecture::Mlp { inputs: 2, hidden: vec![8], outputs: 2 },
            Seed::new(4),
        );
        let pi = GaussianPolicy::new(mean, -0.5, true);
        let trajs = rollout(&mc, &pi, 3, &mut rng, Some(10.0)).unwrap();
        assert!(trajs.iter().all(|t| t.len() == 10 && !t.terminal));
        assert_eq!(trajs[0].states.len(), 11 * 2);
        assert_eq!(trajs[0].noises.len(), 10 * 2);
    }

    #[test]
    fn rollout_is_deterministic_given_seed() {
        let env = MountainClimbing;
        let mean = Approximator::init(
            Architecture::Mlp { inputs: 2, hidden: vec![8], outputs: 2 },
            Seed::new(6),
        );
        let pi = GaussianPolicy::new(mean, -0.5, true);
        let a = rollout(&env, &pi, 2, &mut Seed::new(10).rng(), None).unwrap();
        let b = rollout(&env, &pi, 2, &mut Seed::new(10).rng(), None).unwrap();
        for (ta, tb) in a.iter().zip(&b) {
            assert_eq!(ta.states, tb.states);
            assert_eq!(ta.actions, tb.actions);
            assert_eq!(ta.rewards, tb.rewards);
        }
    }

    #[test]
    fn rollout_rejects_mismatched_policy() {
        let env = LqgEnv::new(LqgParams::default());
        let pi = bandit_policy(); // 1-dim policy on a 2-dim env
        assert!(rollout(&env, &pi, 1, &mut dummy_rng(), None).is_err());
    }

    #[test]
    fn make_env_registry() {
        for id in ["lqg", "peaks", "holes", "mountain"] {
            assert_eq!(make_env(id, Some(8.0)).unwrap().id(), id);
        }
        assert!(make_env("cartpole", None).is_err());
    }

    #[test]
    fn discounted_return_hand_case() {
        let traj = Trajectory {
            state_dim: 1,
            action_dim: 1,
            states: vec![0.0; 4],
            actions: vec![0.0; 3],
            noises: vec![0.0; 3],
            rewards: vec![1.0, 1.0, 1.0],
            terminal: false,
        };
        assert_eq!(traj.discounted_return(0.5), 1.75);
        assert_eq!(traj.total_reward(), 3.0);
    }
}
