//! Reparameterized Gaussian policy.
//!
//! Actions are sampled as `a = f_θ(ε; s) = μ_θ(s) + σ ⊙ ε` with `ε ~ N(0, I)`
//! and a state-independent (but learnable) `log_std`. The inverse transform
//! `g_θ(a; s) = (a − μ_θ(s)) / σ` recovers the noise exactly, which is what
//! lets reward gradients be chained through the action at any later parameter
//! value.
//!
//! Policy parameters are one flat vector: mean-network parameters followed by
//! `log_std` (when learnable). Fixed-σ policies expose only the mean
//! parameters.

use crate::error::{Error, Result};
use crate::nn::Approximator;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::sync::atomic::{AtomicBool, Ordering};

/// Clamp range for log_std; prevents σ under/overflow during long training
/// runs. The clamp is logged once (never a silent NaN shield) and clamped
/// coordinates get zero log_std gradient, matching finite differences of the
/// clamped forward map.
pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;

static CLAMP_WARNED: AtomicBool = AtomicBool::new(false);

fn clamp_log_std(raw: f64) -> (f64, bool) {
    if raw < LOG_STD_MIN || raw > LOG_STD_MAX {
        if !CLAMP_WARNED.swap(true, Ordering::Relaxed) {
            eprintln!(
                "pglab: log_std {raw:.3} clamped to [{LOG_STD_MIN}, {LOG_STD_MAX}] \
                 (reported once per process)"
            );
        }
        (raw.clamp(LOG_STD_MIN, LOG_STD_MAX), true)
    } else {
        (raw, false)
    }
}

#[derive(Debug, Clone)]
pub struct GaussianPolicy {
    pub mean: Approximator,
    pub log_std: Vec<f64>,
    /// When false, σ is a fixed constant of the policy: log_std is excluded
    /// from the parameter vector and receives no gradient.
    pub learn_std: bool,
}

impl GaussianPolicy {
    pub fn new(mean: Approximator, log_std_init: f64, learn_std: bool) -> Self {
        let action_dim = mean.arch.output_dim();
        GaussianPolicy {
            mean,
            log_std: vec![log_std_init; action_dim],
            learn_std,
        }
    }

    pub fn action_dim(&self) -> usize {
        self.mean.arch.output_dim()
    }

    pub fn state_dim(&self) -> usize {
        self.mean.arch.input_dim()
    }

    pub fn param_len(&self) -> usize {
        self.mean.params.len() + if self.learn_std { self.log_std.len() } else { 0 }
    }

    /// Flatten θ = concat(mean params, log_std if learnable).
    pub fn params(&self) -> Vec<f64> {
        let mut p = self.mean.params.clone();
        if self.learn_std {
            p.extend_from_slice(&self.log_std);
        }
        p
    }

    pub fn set_params(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.param_len() {
            return Err(Error::dim("policy params", self.param_len(), p.len()));
        }
        let nm = self.mean.params.len();
        self.mean.params.copy_from_slice(&p[..nm]);
        if self.learn_std {
            self.log_std.copy_from_slice(&p[nm..]);
        }
        Ok(())
    }

    /// σ per action dimension (from the clamped log_std).
    pub fn sigma(&self) -> Vec<f64> {
        self.log_std.iter().map(|&l| clamp_log_std(l).0.exp()).collect()
    }

    fn sigma_and_clamped(&self) -> (Vec<f64>, Vec<bool>) {
        let mut sig = Vec::with_capacity(self.log_std.len());
        let mut cl = Vec::with_capacity(self.log_std.len());
        for &l in &self.log_std {
            let (v, c) = clamp_log_std(l);
            sig.push(v.exp());
            cl.push(c);
        }
        (sig, cl)
    }

    pub fn mean_action(&self, s: &[f64]) -> Result<Vec<f64>> {
        self.mean.forward(s)
    }

    /// Draw ε ~ N(0, I) and return `(f_θ(ε; s), ε)`; the noise is returned so
    /// callers can store it alongside the transition.
    pub fn sample(&self, s: &[f64], rng: &mut ChaCha8Rng) -> Result<(Vec<f64>, Vec<f64>)> {
        let eps: Vec<f64> =
            (0..self.action_dim()).map(|_| StandardNormal.sample(rng)).collect();
        let a = self.reparam(s, &eps)?;
        Ok((a, eps))
    }

    /// The deterministic sampling path `f_θ(ε; s) = μ_θ(s) + σ ⊙ ε`.
    pub fn reparam(&self, s: &[f64], eps: &[f64]) -> Result<Vec<f64>> {
        if eps.len() != self.action_dim() {
            return Err(Error::dim("noise", self.action_dim(), eps.len()));
        }
        let mu = self.mean.forward(s)?;
        let sig = self.sigma();
        Ok(mu.iter().zip(eps).zip(&sig).map(|((m, e), sg)| m + sg * e).collect())
    }

    /// Inverse transform `g_θ(a; s) = (a − μ_θ(s)) / σ`; `f(g(a;s);s) = a`.
    pub fn reparam_inverse(&self, s: &[f64], a: &[f64]) -> Result<Vec<f64>> {
        if a.len() != self.action_dim() {
            return Err(Error::dim("action", self.action_dim(), a.len()));
        }
        let mu = self.mean.forward(s)?;
        let sig = self.sigma();
        Ok(a.iter().zip(&mu).zip(&sig).map(|((ai, m), sg)| (ai - m) / sg).collect())
    }

    /// Diagonal-Gaussian log density of `a` at state `s`.
    pub fn log_prob(&self, s: &[f64], a: &[f64]) -> Result<f64> {
        if a.len() != self.action_dim() {
            return Err(Error::dim("action", self.action_dim(), a.len()));
        }
        let mu = self.mean.forward(s)?;
        let (sig, _) = self.sigma_and_clamped();
        let mut lp = 0.0;
        for i in 0..a.len() {
            let z = (a[i] - mu[i]) / sig[i];
            lp += -0.5 * z * z - sig[i].ln() - 0.5 * (2.0 * std::f64::consts::PI).ln();
        }
        Ok(lp)
    }

    /// Score function ∇_θ log π_θ(a|s) as one flat vector.
    ///
    /// Mean part: mean-network `grad_params` with cotangent `(a−μ)/σ²`.
    /// log_std part (when learnable): `(a−μ)²/σ² − 1` per dimension, zeroed
    /// where the clamp is active.
    pub fn score(&self, s: &[f64], a: &[f64]) -> Result<Vec<f64>> {
        if a.len() != self.action_dim() {
            return Err(Error::dim("action", self.action_dim(), a.len()));
        }
        let mu = self.mean.forward(s)?;
        let (sig, clamped) = self.sigma_and_clamped();
        let cot: Vec<f64> = (0..a.len()).map(|i| (a[i] - mu[i]) / (sig[i] * sig[i])).collect();
        let mut g = self.mean.grad_params(s, &cot)?;
        if self.learn_std {
            for i in 0..a.len() {
                let z = (a[i] - mu[i]) / sig[i];
                g.push(if clamped[i] { 0.0 } else { z * z - 1.0 });
            }
        }
        Ok(g)
    }

    /// `(∂f_θ(ε;s)/∂θ)ᵀ · cotangent` — chains an action-space gradient (for
    /// example ∇_a r) back into policy parameters through the sampling path.
    ///
    /// Mean part: mean-network `grad_params` with the same cotangent.
    /// log_std part: `cotangent ⊙ σ ⊙ ε`, zeroed where the clamp is active.
    pub fn reparam_param_vjp(&self, s: &[f64], eps: &[f64], cotangent: &[f64]) -> Result<Vec<f64>> {
        if eps.len() != self.action_dim() {
            return Err(Error::dim("noise", self.action_dim(), eps.len()));
        }
        if cotangent.len() != self.action_dim() {
            return Err(Error::dim("cotangent", self.action_dim(), cotangent.len()));
        }
        let (sig, clamped) = self.sigma_and_clamped();
        let mut g = self.mean.grad_params(s, cotangent)?;
        if self.learn_std {
            for i in 0..eps.len() {
                g.push(if clamped[i] { 0.0 } else { cotangent[i] * sig[i] * eps[i] });
            }
        }
        Ok(g)
    }
}

/// Batch estimate of KL(old ‖ new): mean of (old log-prob − new log-prob).
pub fn approx_kl(old_logps: &[f64], new_logps: &[f64]) -> f64 {
    assert_eq!(old_logps.len(), new_logps.len(), "approx_kl: batch length mismatch");
    if old_logps.is_empty() {
        return 0.0;
    }
    old_logps
        .iter()
        .zip(new_logps)
        .map(|(o, n)| o - n)
        .sum::<f64>()
        / old_logps.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Architecture;
    use crate::rng::Seed;

    /// 1-dim policy with linear mean μ = w·s + b.
    fn linear_policy(w: f64, b: f64, log_std: f64) -> GaussianPolicy {
        let mean = Approximator::new(
            Architecture::Linear { inputs: 1, outputs: 1 },
            vec![w, b],
        )
        .unwrap();
        GaussianPolicy::new(mean, log_std, true)
    }

    fn mlp_policy(seed: u64) -> GaussianPolicy {
        let mean = Approximator::init(
            Architecture::Mlp { inputs: 2, hidden: vec![6, 6], outputs: 2 },
            Seed::new(seed),
        );
        GaussianPolicy::new(mean, -0.4, true)
    }

    #[test]
    fn reparam_is_mu_plus_sigma_eps() {
        // μ≡0, σ=1: f(ε=0.3) = 0.3.
        let pi = linear_policy(0.0, 0.0, 0.0);
        let a = pi.reparam(&[0.7], &[0.3]).unwrap();
        assert_eq!(a, vec![0.3]);
    }

    #[test]
    fn tiny_sigma_collapses_to_mean() {
        // log_std below the clamp floor: σ = e^-20, sampling is numerically
        // the deterministic mean action.
        let pi = linear_policy(2.0, 0.5, -100.0);
        let mut rng = Seed::new(1).rng();
        let s = [1.0];
        let (a, _) = pi.sample(&s, &mut rng).unwrap();
        assert!((a[0] - 2.5).abs() < 1e-7, "σ→0 limit must return μ, got {}", a[0]);
    }

    #[test]
    fn sample_mean_approaches_mu() {
        let pi = linear_policy(0.0, 1.25, (0.5f64).ln());
        let mut rng = Seed::new(42).rng();
        let n = 1_000_000;
        let mut sum = 0.0;
        for _ in 0..n {
            sum += pi.sample(&[0.0], &mut rng).unwrap().0[0];
        }
        let mean = sum / n as f64;
        let tol = 4.0 * 0.5 / 1000.0; // 4σ/sqrt(n)
        assert!((mean - 1.25).abs() < tol, "empirical mean {mean} too far from 1.25");
    }

    #[test]
    fn inverse_recovers_noise() {
        let pi = linear_policy(0.0, 1.0, (2.0f64).ln());
        // μ=1, σ=2, a=5 → ε=2.
        let eps = pi.reparam_inverse(&[0.0], &[5.0]).unwrap();
        assert_eq!(eps, vec![2.0]);
        // a = μ → ε = 0.
        let eps0 = pi.reparam_inverse(&[0.0], &[1.0]).unwrap();
        assert_eq!(eps0, vec![0.0]);
    }

    #[test]
    fn roundtrip_f_g_identity() {
        let pi = mlp_policy(3);
        let mut rng = Seed::new(9).rng();
        for _ in 0..1000 {
            let s: Vec<f64> = (0..2).map(|_| StandardNormal.sample(&mut rng)).collect();
            let (a, eps) = pi.sample(&s, &mut rng).unwrap();
            let eps_back = pi.reparam_inverse(&s, &a).unwrap();
            let a_back = pi.reparam(&s, &eps_back).unwrap();
            for i in 0..2 {
                assert!((eps_back[i] - eps[i]).abs() < 1e-12, "g(f(ε)) must be ε");
                assert!((a_back[i] - a[i]).abs() < 1e-12, "f(g(a)) must be a");
            }
        }
    }

    #[test]
    fn log_prob_standard_normal_values() {
        let pi = linear_policy(0.0, 0.0, 0.0);
        let lp = pi.log_prob(&[0.0], &[0.0]).unwrap();
        assert!((lp - (-0.9189385332046727)).abs() < 1e-12, "-0.5 ln 2π, got {lp}");

        let mean2 = Approximator::zeros(Architecture::Linear { inputs: 1, outputs: 2 });
        let pi2 = GaussianPolicy::new(mean2, 0.0, true);
        let lp2 = pi2.log_prob(&[0.0], &[0.0, 0.0]).unwrap();
        assert!((lp2 - (-1.8378770664093453)).abs() < 1e-12, "2 × -0.5 ln 2π, got {lp2}");
    }

    #[test]
    fn density_integrates_to_one() {
        // Trapezoid quadrature of exp(log_prob) over ±12σ around μ.
        let pi = linear_policy(0.3, -0.7, (0.8f64).ln());
        let s = [2.0];
        let mu = pi.mean_action(&s).unwrap()[0];
        let (lo, hi) = (mu - 12.0 * 0.8, mu + 12.0 * 0.8);
        let n = 200_000;
        let da = (hi - lo) / n as f64;
        let mut total = 0.0;
        for i in 0..=n {
            let a = lo + i as f64 * da;
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            total += w * pi.log_prob(&s, &[a]).unwrap().exp() * da;
        }
        assert!((total - 1.0).abs() < 1e-6, "density must normalize, integral {total}");
    }

    #[test]
    fn score_at_mean_action() {
        let pi = mlp_policy(4);
        let s = [0.3, -0.9];
        let a = pi.mean_action(&s).unwrap();
        let g = pi.score(&s, &a).unwrap();
        let nm = pi.mean.params.len();
        assert!(g[..nm].iter().all(|&x| x == 0.0), "mean part vanishes at a=μ");
        assert_eq!(&g[nm..], &[-1.0, -1.0], "log_std part is -1 per dim at a=μ");
    }

    #[test]
    fn score_linear_mean_closed_form() {
        // μ = w·s + b: ∂logπ/∂w = s(a−μ)/σ².
        let (w, b, sigma): (f64, f64, f64) = (1.7, -0.2, 0.6);
        let pi = linear_policy(w, b, sigma.ln());
        let (s, a) = (0.8, 1.9);
        let mu = w * s + b;
        let g = pi.score(&[s], &[a]).unwrap();
        let expect_w = s * (a - mu) / (sigma * sigma);
        let expect_b = (a - mu) / (sigma * sigma);
        assert!((g[0] - expect_w).abs() < 1e-12);
        assert!((g[1] - expect_b).abs() < 1e-12);
    }

    #[test]
    fn score_matches_finite_differences_on_mlp() {
        let pi = mlp_policy(7);
        let s = [0.5, 0.25];
        let a = [0.9, -1.4];
        let analytic = pi.score(&s, &a).unwrap();
        let base = pi.params();
        let h = 1e-6;
        for i in 0..base.len() {
            let mut probe = pi.clone();
            let mut p = base.clone();
            p[i] += h;
            probe.set_params(&p).unwrap();
            let fp = probe.log_prob(&s, &a).unwrap();
            p[i] -= 2.0 * h;
            probe.set_params(&p).unwrap();
            let fm = probe.log_prob(&s, &a).unwrap();
            let fd = (fp - fm) / (2.0 * h);
            let rel = (analytic[i] - fd).abs() / analytic[i].abs().max(1.0);
            assert!(rel < 1e-5, "score FD mismatch at param {i}: {} vs {fd}", analytic[i]);
        }
    }

    #[test]
    fn vjp_zero_cotangent_and_zero_noise() {
        let pi = mlp_policy(5);
        let s = [0.1, 0.2];
        let z = pi.reparam_param_vjp(&s, &[0.4, -0.4], &[0.0, 0.0]).unwrap();
        assert!(z.iter().all(|&x| x == 0.0), "zero cotangent → zero VJP");

        let cot = [1.5, -2.0];
        let v = pi.reparam_param_vjp(&s, &[0.0, 0.0], &cot).unwrap();
        let nm = pi.mean.params.len();
        let mean_part = pi.mean.grad_params(&s, &cot).unwrap();
        assert_eq!(&v[..nm], &mean_part[..], "ε=0: mean part is grad_params of μ");
        assert_eq!(&v[nm..], &[0.0, 0.0], "ε=0: log_std part vanishes");
    }

    #[test]
    fn vjp_chains_reward_gradient_like_finite_differences() {
        // Composite check: ∇_θ r(s, f_θ(ε;s)) for r(a) = exp(-(a₀-1)² - 0.5(a₁+2)²).
        let reward = |a: &[f64]| (-(a[0] - 1.0).powi(2) - 0.5 * (a[1] + 2.0).powi(2)).exp();
        let reward_grad = |a: &[f64]| {
            let r = reward(a);
            vec![-2.0 * (a[0] - 1.0) * r, -(a[1] + 2.0) * r]
        };
        let pi = mlp_policy(12);
        let s = [-0.3, 0.6];
        let eps = [0.7, -1.1];
        let a = pi.reparam(&s, &eps).unwrap();
        let analytic = pi.reparam_param_vjp(&s, &eps, &reward_grad(&a)).unwrap();

        let base = pi.params();
        let h = 1e-6;
        for i in 0..base.len() {
            let mut probe = pi.clone();
            let mut p = base.clone();
            p[i] += h;
            probe.set_params(&p).unwrap();
            let fp = reward(&probe.reparam(&s, &eps).unwrap());
            p[i] -= 2.0 * h;
            probe.set_params(&p).unwrap();
            let fm = reward(&probe.reparam(&s, &eps).unwrap());
            let fd = (fp - fm) / (2.0 * h);
            let rel = (analytic[i] - fd).abs() / analytic[i].abs().max(1.0);
            assert!(rel < 1e-5, "VJP chain FD mismatch at param {i}: {} vs {fd}", analytic[i]);
        }
    }

    #[test]
    fn expected_score_is_zero() {
        let pi = linear_policy(0.4, -0.1, (0.7f64).ln());
        let s = [1.3];
        let mut rng = Seed::new(2024).rng();
        let n = 1_000_000usize;
        let mut acc = crate::stats::MomentAccumulator::new(pi.param_len());
        for _ in 0..n {
            let (a, _) = pi.sample(&s, &mut rng).unwrap();
            acc.push(&pi.score(&s, &a).unwrap());
        }
        let se = acc.standard_error();
        for (i, (&m, &e)) in acc.mean.iter().zip(&se).enumerate() {
            assert!(
                m.abs() <= 4.0 * e,
                "E[score] coordinate {i} not within 4 SE of zero: mean {m}, se {e}"
            );
        }
    }

    #[test]
    fn fixed_sigma_policy_has_no_log_std_params() {
        let mean = Approximator::new(Architecture::DiagLinear { dim: 2 }, vec![-1.0, -1.3]).unwrap();
        let pi = GaussianPolicy::new(mean, (0.1f64).ln(), false);
        assert_eq!(pi.param_len(), 2);
        let g = pi.score(&[0.5, 0.5], &[-0.4, -0.7]).unwrap();
        assert_eq!(g.len(), 2, "fixed-σ policy gradient covers mean params only");
    }

    #[test]
    fn clamped_log_std_gets_zero_gradient() {
        let pi = linear_policy(0.0, 0.0, 5.0); // above LOG_STD_MAX
        assert!((pi.sigma()[0] - LOG_STD_MAX.exp()).abs() < 1e-12);
        let g = pi.score(&[0.0], &[3.0]).unwrap();
        assert_eq!(g[2], 0.0, "clamped coordinate must not receive gradient");
        let v = pi.reparam_param_vjp(&[0.0], &[0.5], &[1.0]).unwrap();
        assert_eq!(v[2], 0.0);
    }

    #[test]
    fn param_roundtrip_exact() {
        let mut pi = mlp_policy(31);
        let p = pi.params();
        pi.set_params(&p).unwrap();
        assert_eq!(pi.params(), p, "flatten/unflatten must round-trip exactly");
        assert_eq!(p.len(), pi.param_len());
    }

    #[test]
    fn approx_kl_basics() {
        assert_eq!(approx_kl(&[0.5, -1.0], &[0.5, -1.0]), 0.0);
        assert!((approx_kl(&[-0.3], &[-0.4]) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn approx_kl_approaches_closed_form_gaussian_kl() {
        // KL(N(0,1) ‖ N(0.3,1)) = 0.3²/2 = 0.045.
        let pi_old = linear_policy(0.0, 0.0, 0.0);
        let pi_new = linear_policy(0.0, 0.3, 0.0);
        let mut rng = Seed::new(5).rng();
        let s = [0.0];
        let n = 400_000;
        let (mut olds, mut news) = (Vec::with_capacity(n), Vec::with_capacity(n));
        for _ in 0..n {
            let (a, _) = pi_old.sample(&s, &mut rng).unwrap();
            olds.push(pi_old.log_prob(&s, &a).unwrap());
            news.push(pi_new.log_prob(&s, &a).unwrap());
        }
        let kl = approx_kl(&olds, &news);
        assert!((kl - 0.045).abs() < 0.003, "batch KL {kl} should approach 0.045");
    }
}
