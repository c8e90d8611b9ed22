//! Bias²/variance/MSE measurement of gradient estimators against a
//! ground-truth gradient, with percentile-bootstrap confidence intervals,
//! plus the quadrature ground truth for bandit objectives.
//!
//! For each sample count n, M independent estimates ĝ_i are drawn (each from
//! n fresh episodes) and summarized with squared-Euclidean metrics:
//! bias² = ‖mean ĝ − g*‖², variance = (1/M)Σ‖ĝ_i − mean ĝ‖², and
//! MSE = (1/M)Σ‖ĝ_i − g*‖², which decompose exactly as MSE = bias² +
//! variance. The 95% intervals come from resampling the M estimate vectors
//! with replacement and recomputing each metric.

use crate::envs::{rollout, Environment};
use crate::error::{Error, Result};
use crate::estimators::{estimate, EstimatorKind, ExactOracle};
use crate::policy::GaussianPolicy;
use crate::rng::Seed;
use crate::stats::percentile_sorted;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// One measured cell of the bias/variance study (fixed estimator and n).
#[derive(Debug, Clone, PartialEq)]
pub struct BiasVarianceRow {
    pub estimator: String,
    pub n_samples: usize,
    pub bias2: f64,
    pub bias2_lo: f64,
    pub bias2_hi: f64,
    pub variance: f64,
    pub var_lo: f64,
    pub var_hi: f64,
    pub mse: f64,
    pub mse_lo: f64,
    pub mse_hi: f64,
    pub reps: usize,
    pub seed: u64,
}

/// Study shape: sample counts on the x-axis, repetitions M per cell, and
/// bootstrap resample count B for the 95% intervals.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub n_list: Vec<usize>,
    pub reps: usize,
    pub bootstrap: usize,
    pub level: f64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            n_list: vec![10, 25, 50, 75, 100],
            reps: 1000,
            bootstrap: 1000,
            level: 0.95,
        }
    }
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_list.is_empty() || self.n_list.iter().any(|&n| n == 0) {
            return Err(Error::InvalidArg("sample counts must be a non-empty list of positive n".into()));
        }
        if self.reps < 2 {
            return Err(Error::InvalidArg(format!(
                "need at least 2 repetitions to measure variance, got {}",
                self.reps
            )));
        }
        if self.bootstrap < 100 {
            return Err(Error::InvalidArg(format!(
                "bootstrap resample count below 100 gives unstable intervals, got {}",
                self.bootstrap
            )));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::InvalidArg(format!("level must lie in (0,1), got {}", self.level)));
        }
        Ok(())
    }
}

/// Percentile-bootstrap interval of an arbitrary statistic of an m-element
/// sample. `stat` receives a resampled index multiset (values in 0..m) and
/// returns the statistic; the interval covers `level` probability
/// symmetrically.
pub fn bootstrap_ci<F>(
    m: usize,
    b: usize,
    level: f64,
    mut stat: F,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, f64)>
where
    F: FnMut(&[usize]) -> f64,
{
    if m == 0 {
        return Err(Error::InvalidArg("cannot bootstrap an empty sample".into()));
    }
    if b < 100 {
        return Err(Error::InvalidArg(format!("need at least 100 resamples, got {b}")));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArg(format!("level must lie in (0,1), got {level}")));
    }
    let mut idx = vec![0usize; m];
    let mut values = Vec::with_capacity(b);
    for _ in 0..b {
        for slot in idx.iter_mut() {
            *slot = rng.random_range(0..m);
        }
        values.push(stat(&idx));
    }
    values.sort_by(|a, b| a.partial_cmp(b).expect("bootstrap statistic must not be NaN"));
    let tail = (1.0 - level) / 2.0;
    Ok((percentile_sorted(&values, tail), percentile_sorted(&values, 1.0 - tail)))
}

/// The three squared-Euclidean metrics of an index multiset over the stored
/// estimates (`dim` components per estimate).
fn metrics_of(idx: &[usize], estimates: &[f64], dim: usize, gstar: &[f64]) -> (f64, f64, f64) {
    let m = idx.len() as f64;
    let mut mean = vec![0.0; dim];
    for &i in idx {
        for d in 0..dim {
            mean[d] += estimates[i * dim + d];
        }
    }
    for v in mean.iter_mut() {
        *v /= m;
    }
    let bias2: f64 = mean.iter().zip(gstar).map(|(a, b)| (a - b) * (a - b)).sum();
    let mut variance = 0.0;
    let mut mse = 0.0;
    for &i in idx {
        for d in 0..dim {
            let e = estimates[i * dim + d];
            variance += (e - mean[d]) * (e - mean[d]) / m;
            mse += (e - gstar[d]) * (e - gstar[d]) / m;
        }
    }
    (bias2, variance, mse)
}

/// Measure any estimate-drawing procedure: `draw(n, seed)` must return one
/// gradient estimate computed from n fresh episodes. Cells run in parallel
/// on per-cell seed children; every reduction is order-fixed, so the output
/// depends only on `seed`.
pub fn bias_variance_over<F>(
    label: &str,
    draw: F,
    gstar: &[f64],
    study: &StudyConfig,
    seed: Seed,
) -> Result<Vec<BiasVarianceRow>>
where
    F: Fn(usize, Seed) -> Result<Vec<f64>> + Sync,
{
    study.validate()?;
    let dim = gstar.len();
    let mut rows = Vec::with_capacity(study.n_list.len());
    for (ni, &n) in study.n_list.iter().enumerate() {
        let estimates_res: Vec<Result<Vec<f64>>> = (0..study.reps)
            .into_par_iter()
            .map(|rep| {
                let cell = (ni * study.reps + rep) as u64;
                let g = draw(n, seed.child(cell))?;
                if g.len() != dim {
                    return Err(Error::dim("estimate length", dim, g.len()));
                }
                Ok(g)
            })
            .collect();
        let mut estimates = Vec::with_capacity(study.reps * dim);
        for e in estimates_res {
            estimates.extend_from_slice(&e?);
        }
        let full: Vec<usize> = (0..study.reps).collect();
        let (bias2, variance, mse) = metrics_of(&full, &estimates, dim, gstar);
        // One resample stream drives all three intervals so each resampled
        // set contributes a consistent (bias², var, mse) triple.
        let mut rng = seed.child(u64::MAX - ni as u64).rng();
        let mut idx = vec![0usize; study.reps];
        let (mut b2s, mut vars, mut mses) = (
            Vec::with_capacity(study.bootstrap),
            Vec::with_capacity(study.bootstrap),
            Vec::with_capacity(study.bootstrap),
        );
        for _ in 0..study.bootstrap {
            for slot in idx.iter_mut() {
                *slot = rng.random_range(0..study.reps);
            }
            let (b2, v, ms) = metrics_of(&idx, &estimates, dim, gstar);
            b2s.push(b2);
            vars.push(v);
            mses.push(ms);
        }
        let tail = (1.0 - study.level) / 2.0;
        let ci = |xs: &mut Vec<f64>| {
            xs.sort_by(|a, b| a.partial_cmp(b).expect("metric must not be NaN"));
            (percentile_sorted(xs, tail), percentile_sorted(xs, 1.0 - tail))
        };
        let (bias2_lo, bias2_hi) = ci(&mut b2s);
        let (var_lo, var_hi) = ci(&mut vars);
        let (mse_lo, mse_hi) = ci(&mut mses);
        rows.push(BiasVarianceRow {
            estimator: label.to_string(),
            n_samples: n,
            bias2,
            bias2_lo,
            bias2_hi,
            variance,
            var_lo,
            var_hi,
            mse,
            mse_lo,
            mse_hi,
            reps: study.reps,
            seed: seed.0,
        });
    }
    Ok(rows)
}

/// The concrete study: each repetition rolls out n fresh episodes under the
/// fixed policy and applies the chosen estimator with exact oracles.
pub fn bias_variance_mse(
    kind: EstimatorKind,
    env: &dyn Environment,
    oracle: &dyn ExactOracle,
    policy: &GaussianPolicy,
    gstar: &[f64],
    study: &StudyConfig,
    seed: Seed,
) -> Result<Vec<BiasVarianceRow>> {
    bias_variance_over(
        kind.id(),
        |n, cell_seed| {
            let mut rng = cell_seed.rng();
            let trajs = rollout(env, policy, n, &mut rng, None)?;
            Ok(estimate(kind, &trajs, oracle, policy, cell_seed.0)?.grad)
        },
        gstar,
        study,
        seed,
    )
}

// ---------------------------------------------------------------------------
// Bandit ground truth by quadrature
// ---------------------------------------------------------------------------

/// J(policy) = ∫ r(s₀, a)·N(a; μ, σ²) da for a one-dimensional bandit,
/// by the trapezoid rule on [−half_width, half_width].
pub fn bandit_objective_quadrature(
    env: &dyn Environment,
    policy: &GaussianPolicy,
    points: usize,
    half_width: f64,
) -> Result<f64> {
    let spec = env.spec();
    if spec.action_dim != 1 || spec.horizon != 1 {
        return Err(Error::InvalidArg(
            "quadrature ground truth covers one-dimensional one-step tasks".into(),
        ));
    }
    if points < 2 {
        return Err(Error::InvalidArg("need at least two quadrature points".into()));
    }
    let s0 = env.initial_state();
    let mu = policy.mean_action(&s0)?[0];
    let sigma = policy.sigma()[0];
    let norm = 1.0 / (sigma * (2.0 * std::f64::consts::PI).sqrt());
    let step = 2.0 * half_width / (points - 1) as f64;
    let mut total = 0.0;
    for k in 0..points {
        let a = -half_width + k as f64 * step;
        let z = (a - mu) / sigma;
        let f = env.reward(&s0, &[a]) * norm * (-0.5 * z * z).exp();
        let w = if k == 0 || k == points - 1 { 0.5 } else { 1.0 };
        total += w * f;
    }
    Ok(total * step)
}

/// Ground-truth policy gradient for a bandit: central finite differences of
/// the quadrature objective over every policy parameter. Parameters the
/// objective does not depend on (the weight on an identically-zero state)
/// come out as exact zeros.
pub fn bandit_true_gradient(
    env: &dyn Environment,
    policy: &GaussianPolicy,
    h: f64,
    points: usize,
) -> Result<Vec<f64>> {
    if h <= 0.0 {
        return Err(Error::InvalidArg(format!("finite-difference step must be positive, got {h}")));
    }
    let base = policy.params();
    let mut grad = vec![0.0; base.len()];
    let mut probe = policy.clone();
    for k in 0..base.len() {
        let mut p = base.clone();
        p[k] += h;
        probe.set_params(&p)?;
        let fp = bandit_objective_quadrature(env, &probe, points, 30.0)?;
        p[k] -= 2.0 * h;
        probe.set_params(&p)?;
        let fm = bandit_objective_quadrature(env, &probe, points, 30.0)?;
        grad[k] = (fp - fm) / (2.0 * h);
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::make_env;
    use crate::estimators::BanditExact;
    use crate::nn::{Approximator, Architecture};
    use crate::stats::mean;

    fn quick_study() -> StudyConfig {
        StudyConfig {
            n_list: vec![5, 10],
            reps: 200,
            bootstrap: 100,
            level: 0.95,
        }
    }

    #[test]
    fn perfect_estimator_measures_zero_everywhere() {
        let gstar = [0.3, -0.7];
        let rows = bias_variance_over(
            "oracle",
            |_n, _s| Ok(gstar.to_vec()),
            &gstar,
            &quick_study(),
            Seed::new(1),
        )
        .unwrap();
        // Metrics vanish up to the last-place rounding of the mean
        // accumulation (squared, so ~1e-30).
        let tiny = 1e-25;
        for row in rows {
            assert!(
                row.bias2 <= tiny && row.variance <= tiny && row.mse <= tiny,
                "an estimator that always answers g* has no error: {row:?}"
            );
            assert!(row.bias2_hi <= tiny && row.var_hi <= tiny && row.mse_hi <= tiny);
        }
    }

    #[test]
    fn constant_offset_shows_up_as_pure_bias() {
        let gstar = [1.0, 2.0];
        let d = [0.3, -0.4];
        let rows = bias_variance_over(
            "offset",
            |_n, _s| Ok(vec![gstar[0] + d[0], gstar[1] + d[1]]),
            &gstar,
            &quick_study(),
            Seed::new(2),
        )
        .unwrap();
        let d2 = d[0] * d[0] + d[1] * d[1];
        for row in rows {
            assert!((row.bias2 - d2).abs() < 1e-13);
            assert!(row.variance <= 1e-25, "identical estimates carry no spread");
            assert!((row.mse - d2).abs() < 1e-13);
            assert!((row.mse - row.bias2 - row.variance).abs() <= 1e-6 * row.mse.max(1.0));
        }
    }

    #[test]
    fn degenerate_study_shapes_are_rejected() {
        let s = |f: fn(&mut StudyConfig)| {
            let mut cfg = quick_study();
            f(&mut cfg);
            cfg
        };
        let run = |cfg: StudyConfig| {
            bias_variance_over("x", |_n, _s| Ok(vec![0.0]), &[0.0], &cfg, Seed::new(3))
        };
        assert!(run(s(|c| c.reps = 1)).is_err(), "variance needs at least two repetitions");
        assert!(run(s(|c| c.bootstrap = 99)).is_err());
        assert!(run(s(|c| c.n_list = vec![])).is_err());
        assert!(run(s(|c| c.n_list = vec![0])).is_err());
        assert!(run(s(|c| c.level = 1.0)).is_err());
    }

    #[test]
    fn bootstrap_interval_basics() {
        let mut rng = Seed::new(4).rng();
        // Constant sample: zero-width interval at the constant.
        let vals = vec![2.5; 40];
        let (lo, hi) =
            bootstrap_ci(vals.len(), 1000, 0.95, |idx| mean(&idx.iter().map(|&i| vals[i]).collect::<Vec<_>>()), &mut rng)
                .unwrap();
        assert_eq!((lo, hi), (2.5, 2.5));
        // Two-point sample {0, 2}, mean statistic: resampled means take the
        // values {0, 1, 2} with probabilities {¼, ½, ¼}, so the symmetric
        // 95% interval spans the full range.
        let two = [0.0, 2.0];
        let (lo, hi) =
            bootstrap_ci(2, 1000, 0.95, |idx| mean(&idx.iter().map(|&i| two[i]).collect::<Vec<_>>()), &mut rng)
                .unwrap();
        assert_eq!((lo, hi), (0.0, 2.0));
        // The interval straddles the point estimate on a generic sample.
        let sample: Vec<f64> = (0..60).map(|_| rng.random_range(-1.0..1.0)).collect();
        let point = mean(&sample);
        let (lo, hi) = bootstrap_ci(
            sample.len(),
            500,
            0.95,
            |idx| mean(&idx.iter().map(|&i| sample[i]).collect::<Vec<_>>()),
            &mut rng,
        )
        .unwrap();
        assert!(lo <= point && point <= hi, "{lo} ≤ {point} ≤ {hi}");
        // Guard rails.
        assert!(bootstrap_ci(0, 1000, 0.95, |_| 0.0, &mut rng).is_err());
        assert!(bootstrap_ci(5, 99, 0.95, |_| 0.0, &mut rng).is_err());
    }

    #[test]
    fn real_bandit_study_is_consistent_and_deterministic() {
        let env = make_env("peaks", Some(8.0)).unwrap();
        let mean_net = Approximator::new(
            Architecture::Linear { inputs: 1, outputs: 1 },
            vec![0.0, 0.5],
        )
        .unwrap();
        let policy = GaussianPolicy::new(mean_net, 0.25f64.ln(), true);
        let oracle = BanditExact::new(env.as_ref()).unwrap();
        let gstar = bandit_true_gradient(env.as_ref(), &policy, 1e-6, 200_001).unwrap();
        let study = quick_study();
        let rows = bias_variance_mse(
            EstimatorKind::Pg,
            env.as_ref(),
            &oracle,
            &policy,
            &gstar,
            &study,
            Seed::new(7),
        )
        .unwrap();
        assert_eq!(rows.len(), 2);
        for row in &rows {
            assert!(
                (row.mse - row.bias2 - row.variance).abs() <= 1e-6 * row.mse.max(1.0),
                "decomposition must hold: {row:?}"
            );
            assert!(row.var_lo <= row.variance && row.variance <= row.var_hi);
            assert_eq!(row.reps, 200);
            assert_eq!(row.estimator, "pg");
        }
        // Sample-mean variance halves when n doubles (within bootstrap noise).
        let ratio = rows[0].variance / rows[1].variance;
        assert!(
            (1.2..=3.3).contains(&ratio),
            "variance should scale like 1/n: ratio {ratio}"
        );
        let again = bias_variance_mse(
            EstimatorKind::Pg,
            env.as_ref(),
            &oracle,
            &policy,
            &gstar,
            &study,
            Seed::new(7),
        )
        .unwrap();
        assert_eq!(rows, again, "study must be reproducible bit-for-bit");
    }

    #[test]
    fn quadrature_matches_closed_forms() {
        // Smoothing a Gaussian bump of variance b²/2 with policy noise σ²:
        // J = √(v/(v+σ²))·exp(−(μ−c)²/(2(v+σ²))) with the bump centred at c.
        let cases = [(8.0, 0.5, 0.25), (2.0, -0.3, 0.69), (4.0, 1.4, 1.0)];
        for (b_sq, mu, sigma) in cases {
            let env = make_env("peaks", Some(b_sq)).unwrap();
            let mean_net = Approximator::new(
                Architecture::Linear { inputs: 1, outputs: 1 },
                vec![0.0, mu],
            )
            .unwrap();
            let policy = GaussianPolicy::new(mean_net, f64::ln(sigma), true);
            let v = b_sq / 2.0;
            let expected =
                (v / (v + sigma * sigma)).sqrt() * (-(mu - 1.0) * (mu - 1.0) / (2.0 * (v + sigma * sigma))).exp();
            let got = bandit_objective_quadrature(env.as_ref(), &policy, 1_000_001, 30.0).unwrap();
            assert!(
                (got - expected).abs() < 1e-9,
                "peaks b²={b_sq} μ={mu} σ={sigma}: {got} vs {expected}"
            );
            // The complement-shaped well: J = 1 − (same form centred at 0).
            let env = make_env("holes", Some(b_sq)).unwrap();
            let expected_h = 1.0
                - (v / (v + sigma * sigma)).sqrt() * (-mu * mu / (2.0 * (v + sigma * sigma))).exp();
            let got_h = bandit_objective_quadrature(env.as_ref(), &policy, 1_000_001, 30.0).unwrap();
            assert!(
                (got_h - expected_h).abs() < 1e-9,
                "holes b²={b_sq}: {got_h} vs {expected_h}"
            );
        }
        // Frozen reference value for the unbiasedness checks.
        let env = make_env("peaks", Some(8.0)).unwrap();
        let mean_net = Approximator::new(
            Architecture::Linear { inputs: 1, outputs: 1 },
            vec![0.0, 0.5],
        )
        .unwrap();
        let policy = GaussianPolicy::new(mean_net, 0.25f64.ln(), true);
        let j = bandit_objective_quadrature(env.as_ref(), &policy, 1_000_001, 30.0).unwrap();
        assert!((j - 0.9622111862939067).abs() < 1e-12, "frozen objective value drifted: {j}");
    }

    #[test]
    fn quadrature_gradient_matches_frozen_reference() {
        let env = make_env("peaks", Some(8.0)).unwrap();
        let mean_net = Approximator::new(
            Architecture::Linear { inputs: 1, outputs: 1 },
            vec![0.0, 0.5],
        )
        .unwrap();
        let policy = GaussianPolicy::new(mean_net, 0.25f64.ln(), true);
        let g = bandit_true_gradient(env.as_ref(), &policy, 1e-6, 1_000_001).unwrap();
        assert_eq!(g.len(), 3);
        assert_eq!(g[0], 0.0, "weight on the identically-zero state is dead");
        assert!((g[1] - 0.11842599217937178).abs() < 1e-8, "dJ/dμ drifted: {}", g[1]);
        assert!((g[2] - (-0.013892279937532948)).abs() < 1e-8, "dJ/dlogσ drifted: {}", g[2]);
        assert!(bandit_true_gradient(env.as_ref(), &policy, 0.0, 101).is_err());
        // Multi-step tasks are rejected.
        let lqg = make_env("lqg", None).unwrap();
        let p2 = crate::lqg::lqg_policy(&[-0.5, -0.5], &crate::envs::LqgParams::default());
        assert!(bandit_objective_quadrature(lqg.as_ref(), &p2, 1001, 30.0).is_err());
    }
}
