//! Command layer: argument parsing, config resolution, and the four
//! subcommands (`gradcheck`, `bias-variance`, `train`, `sweep`).
//!
//! Every command resolves its configuration the same way — environment
//! preset, then config file, then command-line flags — writes the resolved
//! document plus a content hash into the output directory, and emits CSV
//! artifacts that are byte-identical when rerun with the same configuration
//! and seed.

use crate::algorithms::{train, Algo, IterMetrics, RewardMode, TrainConfig};
use crate::analysis::{bandit_true_gradient, bias_variance_mse, BiasVarianceRow, StudyConfig};
use crate::config::{
    bias_variance_csv, metrics_csv, parse_seed_range, resolve_train, summarize_runs, summary_csv,
    FileConfig, ResolvedConfig,
};
use crate::envs::{make_env, Environment, LqgParams};
use crate::error::{Error, Result};
use crate::estimators::{BanditExact, EstimatorKind, ExactOracle, LqgExact};
use crate::lqg::{lqg_policy, true_gradient, FiniteHorizonValue};
use crate::nn::{Approximator, Architecture};
use crate::policy::GaussianPolicy;
use crate::rng::Seed;
use clap::{Args, Parser, Subcommand};
use rand::Rng;
use rayon::prelude::*;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// Policy-gradient estimator laboratory.
#[derive(Debug, Parser)]
#[command(name = "pglab", version, about = "Analytic testbeds for policy-gradient estimators")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Audit every analytic gradient path against finite differences.
    Gradcheck(CommonArgs),
    /// Measure bias, variance, and MSE of the gradient estimators at a
    /// fixed policy, with bootstrap confidence intervals.
    #[command(name = "bias-variance")]
    BiasVariance(CommonArgs),
    /// Train one configuration across a seed range and summarize learning
    /// curves.
    Train(CommonArgs),
    /// Run a grid of training configurations with a manifest and resume
    /// support.
    Sweep(CommonArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// TOML config file.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Single seed (shorthand for --seeds N..N+1).
    #[arg(long, conflicts_with = "seeds")]
    pub seed: Option<u64>,
    /// Half-open seed range A..B (runs seeds A through B−1).
    #[arg(long, value_name = "A..B")]
    pub seeds: Option<String>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Environment id: lqg | peaks | holes | mountain.
    #[arg(long, value_name = "ID")]
    pub env: Option<String>,
    /// Bandit reward width b² (peaks/holes only).
    #[arg(long, value_name = "B2")]
    pub b_sq: Option<f64>,
    /// Training algorithm: ppo | rpg.
    #[arg(long, value_name = "ALGO")]
    pub algo: Option<String>,
    /// Reward source for the pathwise term: true | learned.
    #[arg(long, value_name = "MODE")]
    pub reward_mode: Option<String>,
    /// In the negative-advantage branch, zero the ratio below 1+ε instead
    /// of 1−ε (the printed form of the modified ratio).
    #[arg(long)]
    pub paper_literal_clip: bool,
    /// Record wall-clock seconds per iteration (makes output files
    /// timing-dependent, so reruns are no longer byte-identical).
    #[arg(long)]
    pub timing: bool,
}

/// A resolved invocation: the concrete config plus the raw `[train]` table
/// from the file, which `sweep` re-resolves per cell (presets differ by
/// environment).
#[derive(Debug, Clone)]
pub struct Resolution {
    pub config: ResolvedConfig,
    pub file_train: Option<toml::Value>,
    /// Whether an output directory was named (flag or file) rather than
    /// defaulted.
    pub out_explicit: bool,
    cli_algo: Option<Algo>,
    cli_reward_mode: Option<RewardMode>,
    cli_b_sq: Option<f64>,
    cli_paper_literal_clip: bool,
    cli_timing: bool,
}

/// Build the resolved configuration for one command: preset defaults, then
/// the config file, then command-line flags.
pub fn resolve(command: &str, args: &CommonArgs) -> Result<Resolution> {
    let file = match &args.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };

    let (seed, seed_end) = if let Some(r) = &args.seeds {
        parse_seed_range(r)?
    } else if let Some(s) = args.seed {
        (s, s + 1)
    } else if let Some(r) = &file.seeds {
        parse_seed_range(r)?
    } else if let Some(s) = file.seed {
        (s, s + 1)
    } else {
        (0, 1)
    };

    let file_env = file
        .train
        .as_ref()
        .and_then(|t| t.get("env"))
        .and_then(|v| v.as_str())
        .map(str::to_owned);
    // The variance study defaults to the regulator; training defaults to the
    // quickest task.
    let default_env = if command == "bias-variance" { "lqg" } else { "peaks" };
    let env = args
        .env
        .clone()
        .or(file_env)
        .unwrap_or_else(|| default_env.to_string());

    let mut train_cfg = resolve_train(&env, file.train.as_ref())?;
    train_cfg.env = env;
    let cli_algo = args.algo.as_deref().map(str::parse).transpose()?;
    let cli_reward_mode = args.reward_mode.as_deref().map(str::parse).transpose()?;
    apply_cli_train_overrides(
        &mut train_cfg,
        cli_algo,
        cli_reward_mode,
        args.b_sq,
        args.paper_literal_clip,
        args.timing,
    );
    train_cfg.validate()?;

    let out_explicit = args.out.is_some() || file.out.is_some();
    let out = args
        .out
        .as_ref()
        .map(|p| p.to_string_lossy().into_owned())
        .or(file.out.clone())
        .unwrap_or_else(|| format!("pglab-out/{command}"));

    let mut sweep = file.sweep.clone().unwrap_or_default();
    if command == "sweep" {
        // For sweeps the env/width/algo/mode flags restrict the grid axes.
        if let Some(e) = &args.env {
            sweep.envs = vec![e.clone()];
        }
        if let Some(b) = args.b_sq {
            sweep.b_sq = vec![b];
        }
        if let Some(a) = cli_algo {
            sweep.algos = vec![a.to_string()];
        }
        if let Some(m) = cli_reward_mode {
            sweep.reward_modes = vec![m.to_string()];
        }
    }

    Ok(Resolution {
        config: ResolvedConfig {
            command: command.to_string(),
            seed,
            seed_end,
            out,
            train: train_cfg,
            study: file.study.unwrap_or_default(),
            sweep,
        },
        file_train: file.train,
        out_explicit,
        cli_algo,
        cli_reward_mode,
        cli_b_sq: args.b_sq,
        cli_paper_literal_clip: args.paper_literal_clip,
        cli_timing: args.timing,
    })
}

fn apply_cli_train_overrides(
    cfg: &mut TrainConfig,
    algo: Option<Algo>,
    reward_mode: Option<RewardMode>,
    b_sq: Option<f64>,
    paper_literal_clip: bool,
    timing: bool,
) {
    if let Some(a) = algo {
        cfg.algo = a;
    }
    if let Some(m) = reward_mode {
        cfg.reward_mode = m;
    }
    if let Some(b) = b_sq {
        cfg.b_sq = Some(b);
    }
    // Boolean flags only assert; absence must not clobber a file setting.
    if paper_literal_clip {
        cfg.paper_literal_clip = true;
    }
    if timing {
        cfg.timing = true;
    }
}

/// Cap the global worker pool from the `PGLAB_THREADS` environment variable.
/// Call once at process start, before any parallel work.
pub fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("PGLAB_THREADS") {
        let n: usize = v.trim().parse().map_err(|_| {
            Error::InvalidArg(format!("PGLAB_THREADS must be a positive integer, got '{v}'"))
        })?;
        if n == 0 {
            return Err(Error::InvalidArg("PGLAB_THREADS must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    Ok(())
}

/// Run one parsed invocation. Returns `Ok(true)` on success and `Ok(false)`
/// when a gradient audit found failures (a non-zero exit without an error
/// message beyond the report itself).
pub fn dispatch(cli: &Cli) -> Result<bool> {
    match &cli.command {
        Command::Gradcheck(a) => {
            let r = resolve("gradcheck", a)?;
            let report = cmd_gradcheck(&r)?;
            Ok(report.iter().all(|c| c.passed()))
        }
        Command::BiasVariance(a) => {
            let r = resolve("bias-variance", a)?;
            cmd_bias_variance(&r.config)?;
            Ok(true)
        }
        Command::Train(a) => {
            let r = resolve("train", a)?;
            cmd_train(&r.config)?;
            Ok(true)
        }
        Command::Sweep(a) => {
            let r = resolve("sweep", a)?;
            cmd_sweep(&r)?;
            Ok(true)
        }
    }
}

// ---------------------------------------------------------------------------
// gradcheck
// ---------------------------------------------------------------------------

/// Relative-error tolerance shared by every gradient audit.
pub const GRADCHECK_TOL: f64 = 1e-5;
/// Random cases per check in the command-line audit.
pub const GRADCHECK_CASES: usize = 120;

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub cases: usize,
    pub max_rel_err: f64,
    pub tol: f64,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.max_rel_err < self.tol
    }
}

fn rel_err(analytic: f64, reference: f64) -> f64 {
    (analytic - reference).abs() / analytic.abs().max(1.0)
}

/// Central finite differences of a scalar function of the policy parameters.
fn fd_policy_scalar<F>(policy: &GaussianPolicy, f: F, h: f64) -> Result<Vec<f64>>
where
    F: Fn(&GaussianPolicy) -> Result<f64>,
{
    let base = policy.params();
    let mut grad = vec![0.0; base.len()];
    let mut probe = policy.clone();
    for k in 0..base.len() {
        let mut p = base.clone();
        p[k] += h;
        probe.set_params(&p)?;
        let fp = f(&probe)?;
        p[k] -= 2.0 * h;
        probe.set_params(&p)?;
        let fm = f(&probe)?;
        grad[k] = (fp - fm) / (2.0 * h);
    }
    Ok(grad)
}

fn random_policy(case: usize, seed: Seed) -> GaussianPolicy {
    let mut rng = seed.rng();
    let arch = match case % 3 {
        0 => Architecture::DiagLinear { dim: 2 },
        1 => Architecture::Linear { inputs: 2, outputs: 2 },
        _ => Architecture::Mlp { inputs: 2, hidden: vec![5], outputs: 2 },
    };
    let mean = Approximator::init(arch, seed.child(1));
    let learn_std = case % 2 == 0;
    let log_std_init = rng.random_range(-1.2..0.4);
    let mut policy = GaussianPolicy::new(mean, log_std_init, learn_std);
    if learn_std {
        // Give each coordinate its own log-std, away from the clamp edges.
        let mut p = policy.params();
        let mean_len = p.len() - policy.action_dim();
        for v in p.iter_mut().skip(mean_len) {
            *v += rng.random_range(-0.3..0.3);
        }
        policy.set_params(&p).expect("same length");
    }
    policy
}

fn check_network(name: &'static str, arch_of: impl Fn(&mut rand_chacha::ChaCha8Rng) -> Architecture, cases: usize, seed: Seed) -> Result<CheckResult> {
    let mut max_err = 0.0f64;
    for c in 0..cases {
        let case_seed = seed.child(c as u64);
        let mut rng = case_seed.rng();
        let arch = arch_of(&mut rng);
        let input: Vec<f64> =
            (0..arch.input_dim()).map(|_| rng.random_range(-2.0..2.0)).collect();
        let net = Approximator::init(arch, case_seed.child(1));
        max_err = max_err.max(net.finite_diff_check(&input, 1e-5)?);
    }
    Ok(CheckResult { name, cases, max_rel_err: max_err, tol: GRADCHECK_TOL })
}

fn check_policy_score(cases: usize, seed: Seed) -> Result<CheckResult> {
    let mut max_err = 0.0f64;
    for c in 0..cases {
        let case_seed = seed.child(c as u64);
        let policy = random_policy(c, case_seed);
        let mut rng = case_seed.child(2).rng();
        let s: Vec<f64> = (0..policy.state_dim()).map(|_| rng.random_range(-2.0..2.0)).collect();
        let (a, _) = policy.sample(&s, &mut rng)?;
        let analytic = policy.score(&s, &a)?;
        let fd = fd_policy_scalar(&policy, |p| p.log_prob(&s, &a), 1e-6)?;
        for (g, f) in analytic.iter().zip(&fd) {
            max_err = max_err.max(rel_err(*g, *f));
        }
    }
    Ok(CheckResult { name: "policy-score", cases, max_rel_err: max_err, tol: GRADCHECK_TOL })
}

fn check_policy_reparam_vjp(cases: usize, seed: Seed) -> Result<CheckResult> {
    let mut max_err = 0.0f64;
    for c in 0..cases {
        let case_seed = seed.child(c as u64);
        let policy = random_policy(c, case_seed);
        let mut rng = case_seed.child(2).rng();
        let s: Vec<f64> = (0..policy.state_dim()).map(|_| rng.random_range(-2.0..2.0)).collect();
        let eps: Vec<f64> = (0..policy.action_dim())
            .map(|_| rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng))
            .collect();
        let cot: Vec<f64> =
            (0..policy.action_dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let analytic = policy.reparam_param_vjp(&s, &eps, &cot)?;
        let fd = fd_policy_scalar(
            &policy,
            |p| {
                let a = p.reparam(&s, &eps)?;
                Ok(a.iter().zip(&cot).map(|(x, c)| x * c).sum())
            },
            1e-6,
        )?;
        for (g, f) in analytic.iter().zip(&fd) {
            max_err = max_err.max(rel_err(*g, *f));
        }
    }
    Ok(CheckResult { name: "policy-reparam-vjp", cases, max_rel_err: max_err, tol: GRADCHECK_TOL })
}

fn check_reward_grad(
    name: &'static str,
    env: &dyn Environment,
    action_range: (f64, f64),
    cases: usize,
    seed: Seed,
) -> Result<CheckResult> {
    let spec = env.spec();
    let mut max_err = 0.0f64;
    for c in 0..cases {
        let mut rng = seed.child(c as u64).rng();
        let s: Vec<f64> = (0..spec.state_dim).map(|_| rng.random_range(-2.0..2.0)).collect();
        let a: Vec<f64> =
            (0..spec.action_dim).map(|_| rng.random_range(action_range.0..action_range.1)).collect();
        let analytic = env.reward_grad_action(&s, &a);
        let h = 1e-6;
        for i in 0..spec.action_dim {
            let mut ap = a.clone();
            ap[i] += h;
            let fp = env.reward(&s, &ap);
            ap[i] -= 2.0 * h;
            let fm = env.reward(&s, &ap);
            max_err = max_err.max(rel_err(analytic[i], (fp - fm) / (2.0 * h)));
        }
    }
    Ok(CheckResult { name, cases, max_rel_err: max_err, tol: GRADCHECK_TOL })
}

fn check_regulator_q_grad(cases: usize, seed: Seed) -> Result<CheckResult> {
    let params = LqgParams::default();
    let mut max_err = 0.0f64;
    for c in 0..cases {
        let mut rng = seed.child(c as u64).rng();
        let theta = [rng.random_range(-2.0..0.0), rng.random_range(-2.0..0.0)];
        let values = FiniteHorizonValue::new(theta, &params);
        let t = rng.random_range(0..values.horizon());
        let s = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let a = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let analytic = values.q_grad_action(t, &s, &a);
        let h = 1e-5;
        for i in 0..2 {
            let mut ap = a;
            ap[i] += h;
            let fp = values.q(t, &s, &ap);
            ap[i] -= 2.0 * h;
            let fm = values.q(t, &s, &ap);
            max_err = max_err.max(rel_err(analytic[i], (fp - fm) / (2.0 * h)));
        }
    }
    Ok(CheckResult { name: "regulator-q-action-grad", cases, max_rel_err: max_err, tol: GRADCHECK_TOL })
}

/// Run the full gradient audit: every analytic derivative in the library
/// against central finite differences, `cases` random configurations each.
pub fn run_gradcheck(seed: Seed, cases: usize) -> Result<Vec<CheckResult>> {
    let mut report = Vec::new();
    report.push(check_network(
        "net-linear",
        |rng| Architecture::Linear {
            inputs: rng.random_range(1..=5),
            outputs: rng.random_range(1..=4),
        },
        cases,
        seed.child(1),
    )?);
    report.push(check_network(
        "net-diag-linear",
        |rng| Architecture::DiagLinear { dim: rng.random_range(1..=6) },
        cases,
        seed.child(2),
    )?);
    report.push(check_network(
        "net-mlp",
        |rng| {
            let layers = rng.random_range(1..=2);
            Architecture::Mlp {
                inputs: rng.random_range(1..=4),
                hidden: (0..layers).map(|_| rng.random_range(2..=8)).collect(),
                outputs: rng.random_range(1..=3),
            }
        },
        cases,
        seed.child(3),
    )?);
    report.push(check_policy_score(cases, seed.child(4))?);
    report.push(check_policy_reparam_vjp(cases, seed.child(5))?);
    let lqg = make_env("lqg", None)?;
    let peaks = make_env("peaks", Some(8.0))?;
    let holes = make_env("holes", Some(2.0))?;
    let mountain = make_env("mountain", None)?;
    report.push(check_reward_grad("reward-grad-lqg", lqg.as_ref(), (-2.0, 2.0), cases, seed.child(6))?);
    report.push(check_reward_grad("reward-grad-peaks", peaks.as_ref(), (-3.0, 3.0), cases, seed.child(7))?);
    report.push(check_reward_grad("reward-grad-holes", holes.as_ref(), (-3.0, 3.0), cases, seed.child(8))?);
    // Stay inside the actuator clip: the analytic convention zeroes
    // saturated coordinates, where a finite difference straddles the kink.
    report.push(check_reward_grad(
        "reward-grad-mountain",
        mountain.as_ref(),
        (-0.95, 0.95),
        cases,
        seed.child(9),
    )?);
    report.push(check_regulator_q_grad(cases, seed.child(10))?);
    Ok(report)
}

pub fn format_gradcheck_report(report: &[CheckResult]) -> String {
    let mut out = String::new();
    for c in report {
        let _ = writeln!(
            out,
            "check {:<26} cases {:>4}  max rel err {:.3e}  tol {:.0e}  {}",
            c.name,
            c.cases,
            c.max_rel_err,
            c.tol,
            if c.passed() { "ok" } else { "FAIL" }
        );
    }
    let passed = report.iter().filter(|c| c.passed()).count();
    let _ = writeln!(out, "gradcheck: {passed}/{} checks passed", report.len());
    out
}

pub fn cmd_gradcheck(res: &Resolution) -> Result<Vec<CheckResult>> {
    let cfg = &res.config;
    let report = run_gradcheck(Seed::new(cfg.seed), GRADCHECK_CASES)?;
    let text = format_gradcheck_report(&report);
    print!("{text}");
    if res.out_explicit {
        // An explicitly requested output directory gets the report on disk.
        let dir = Path::new(&cfg.out);
        cfg.write_into(dir)?;
        std::fs::write(dir.join("gradcheck.txt"), &text)?;
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// bias-variance
// ---------------------------------------------------------------------------

fn parse_estimators(ids: &[String]) -> Result<Vec<EstimatorKind>> {
    if ids.is_empty() {
        return Err(Error::Config("study.estimators must not be empty".into()));
    }
    ids.iter().map(|s| s.parse()).collect()
}

/// Linear(1→1) mean over the dummy bandit state with learnable log-std: the
/// effective parameters are [w (dead), mean, log σ].
fn bandit_policy(mean: f64, sigma: f64) -> Result<GaussianPolicy> {
    if sigma <= 0.0 {
        return Err(Error::InvalidArg(format!("policy sigma must be positive, got {sigma}")));
    }
    let net = Approximator::new(Architecture::Linear { inputs: 1, outputs: 1 }, vec![0.0, mean])?;
    Ok(GaussianPolicy::new(net, sigma.ln(), true))
}

fn run_study(
    kinds: &[EstimatorKind],
    env: &dyn Environment,
    oracle: &dyn ExactOracle,
    policy: &GaussianPolicy,
    gstar: &[f64],
    study: &StudyConfig,
    seed: Seed,
) -> Result<Vec<BiasVarianceRow>> {
    let mut rows = Vec::new();
    for (i, kind) in kinds.iter().enumerate() {
        let table =
            bias_variance_mse(*kind, env, oracle, policy, gstar, study, seed.child(i as u64))?;
        for r in &table {
            println!(
                "{:>12}  n={:>3}  bias2 {:.3e} [{:.3e}, {:.3e}]  var {:.3e} [{:.3e}, {:.3e}]  mse {:.3e}",
                r.estimator, r.n_samples, r.bias2, r.bias2_lo, r.bias2_hi, r.variance, r.var_lo,
                r.var_hi, r.mse
            );
        }
        rows.extend(table);
    }
    Ok(rows)
}

pub fn cmd_bias_variance(cfg: &ResolvedConfig) -> Result<Vec<BiasVarianceRow>> {
    let kinds = parse_estimators(&cfg.study.estimators)?;
    let study = StudyConfig {
        n_list: cfg.study.n_list.clone(),
        reps: cfg.study.reps,
        bootstrap: cfg.study.bootstrap,
        level: cfg.study.level,
    };
    let seed = Seed::new(cfg.seed);
    let env = make_env(&cfg.train.env, cfg.train.b_sq)?;

    let rows = match cfg.train.env.as_str() {
        "lqg" => {
            let params = LqgParams::default();
            let theta = cfg.study.theta;
            let oracle = LqgExact::new(theta, &params);
            let policy = lqg_policy(&theta, &params);
            let gstar = true_gradient(theta, &params, 1e-6).to_vec();
            println!(
                "task lqg at gains ({}, {}): exact gradient ({:.6}, {:.6})",
                theta[0], theta[1], gstar[0], gstar[1]
            );
            run_study(&kinds, env.as_ref(), &oracle, &policy, &gstar, &study, seed)?
        }
        "peaks" | "holes" => {
            let policy = bandit_policy(cfg.study.policy_mean, cfg.study.policy_sigma)?;
            let oracle = BanditExact::new(env.as_ref())?;
            let gstar = bandit_true_gradient(env.as_ref(), &policy, 1e-6, 1_000_001)?;
            println!(
                "task {} (b²={}) at policy N({}, {}): exact gradient {:?}",
                cfg.train.env,
                cfg.train.b_sq.unwrap_or(2.0),
                cfg.study.policy_mean,
                cfg.study.policy_sigma,
                gstar
            );
            run_study(&kinds, env.as_ref(), &oracle, &policy, &gstar, &study, seed)?
        }
        other => {
            return Err(Error::InvalidArg(format!(
                "no exact gradient oracle for environment '{other}' (use lqg, peaks, or holes)"
            )))
        }
    };

    let dir = Path::new(&cfg.out);
    cfg.write_into(dir)?;
    std::fs::write(dir.join("bias_variance.csv"), bias_variance_csv(&rows))?;
    println!("wrote {}", dir.join("bias_variance.csv").display());
    Ok(rows)
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

pub fn cmd_train(cfg: &ResolvedConfig) -> Result<Vec<Vec<IterMetrics>>> {
    let dir = Path::new(&cfg.out);
    cfg.write_into(dir)?;
    let env = make_env(&cfg.train.env, cfg.train.b_sq)?;
    let seeds: Vec<u64> = cfg.seeds().collect();
    let runs: Result<Vec<Vec<IterMetrics>>> = seeds
        .par_iter()
        .map(|&s| {
            let run = train(env.as_ref(), &cfg.train, Seed::new(s))?;
            let seed_dir = dir.join(format!("seed-{s}"));
            std::fs::create_dir_all(&seed_dir)?;
            std::fs::write(seed_dir.join("metrics.csv"), metrics_csv(&run.metrics))?;
            Ok(run.metrics)
        })
        .collect();
    let runs = runs?;
    for (s, metrics) in seeds.iter().zip(&runs) {
        match metrics.last() {
            Some(m) => println!(
                "seed {s}: {} iterations, {} env steps, final mean return {:.4}",
                metrics.len(),
                m.env_steps,
                m.mean_return
            ),
            None => println!("seed {s}: zero-step run, no iterations"),
        }
    }
    let summary = summarize_runs(&runs);
    std::fs::write(dir.join("summary.csv"), summary_csv(&summary))?;
    println!("wrote {}", dir.join("summary.csv").display());
    Ok(runs)
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub env: String,
    pub b_sq: Option<f64>,
    pub algo: Algo,
    pub reward_mode: RewardMode,
    pub dir: String,
}

/// Expand the grid axes into concrete cells. Bandit tasks fan out over the
/// width axis; other tasks ignore it. PPO ignores the reward-mode axis.
pub fn sweep_cells(res: &Resolution) -> Result<Vec<SweepCell>> {
    let sweep = &res.config.sweep;
    if sweep.envs.is_empty() || sweep.algos.is_empty() {
        return Err(Error::Config("sweep grid is empty (no envs or no algos)".into()));
    }
    let mut cells = Vec::new();
    for env in &sweep.envs {
        let bandit = matches!(env.as_str(), "peaks" | "holes");
        let widths: Vec<Option<f64>> = if bandit {
            if sweep.b_sq.is_empty() {
                return Err(Error::Config(format!("sweep grid is empty: no b_sq values for bandit '{env}'")));
            }
            sweep.b_sq.iter().map(|&b| Some(b)).collect()
        } else {
            vec![None]
        };
        for &b in &widths {
            for algo_name in &sweep.algos {
                let algo: Algo = algo_name.parse()?;
                let modes: Vec<RewardMode> = match algo {
                    Algo::Ppo => vec![RewardMode::True],
                    Algo::Rpg => {
                        if sweep.reward_modes.is_empty() {
                            return Err(Error::Config(
                                "sweep grid is empty: no reward modes for rpg".into(),
                            ));
                        }
                        sweep
                            .reward_modes
                            .iter()
                            .map(|m| m.parse())
                            .collect::<Result<Vec<_>>>()?
                    }
                };
                for mode in modes {
                    let mut dir = env.clone();
                    if let Some(b) = b {
                        let _ = write!(dir, "-b{b}");
                    }
                    let _ = write!(dir, "-{algo}");
                    if algo == Algo::Rpg {
                        let _ = write!(dir, "-{mode}");
                    }
                    cells.push(SweepCell { env: env.clone(), b_sq: b, algo, reward_mode: mode, dir });
                }
            }
        }
    }
    if cells.is_empty() {
        return Err(Error::Config("sweep grid is empty".into()));
    }
    Ok(cells)
}

/// Resolve the training configuration for one cell: per-environment preset,
/// file overrides, command-line overrides, then the cell's grid coordinates.
fn cell_train_config(res: &Resolution, cell: &SweepCell) -> Result<TrainConfig> {
    let mut cfg = resolve_train(&cell.env, res.file_train.as_ref())?;
    cfg.env = cell.env.clone();
    apply_cli_train_overrides(
        &mut cfg,
        res.cli_algo,
        res.cli_reward_mode,
        res.cli_b_sq,
        res.cli_paper_literal_clip,
        res.cli_timing,
    );
    cfg.b_sq = cell.b_sq;
    cfg.algo = cell.algo;
    cfg.reward_mode = cell.reward_mode;
    cfg.validate()?;
    Ok(cfg)
}

pub fn cmd_sweep(res: &Resolution) -> Result<()> {
    let cfg = &res.config;
    let cells = sweep_cells(res)?;
    let dir = Path::new(&cfg.out);
    cfg.write_into(dir)?;

    let manifest = serde_json::json!({
        "hash": cfg.content_hash(),
        "seed": cfg.seed,
        "seed_end": cfg.seed_end,
        "cells": cells
            .iter()
            .map(|c| {
                serde_json::json!({
                    "env": c.env,
                    "b_sq": c.b_sq,
                    "algo": c.algo.to_string(),
                    "reward_mode": c.reward_mode.to_string(),
                    "dir": c.dir,
                })
            })
            .collect::<Vec<_>>(),
    });
    std::fs::write(dir.join("manifest.json"), format!("{manifest:#}\n"))?;

    let mut ran = 0usize;
    let mut skipped = 0usize;
    for cell in &cells {
        let cell_dir = dir.join(&cell.dir);
        if cell_dir.join("summary.csv").exists() {
            println!("cell {}: summary exists, skipping", cell.dir);
            skipped += 1;
            continue;
        }
        println!("cell {}: running seeds {}..{}", cell.dir, cfg.seed, cfg.seed_end);
        let cell_cfg = ResolvedConfig {
            command: "train".into(),
            seed: cfg.seed,
            seed_end: cfg.seed_end,
            out: cell_dir.to_string_lossy().into_owned(),
            train: cell_train_config(res, cell)?,
            study: cfg.study.clone(),
            sweep: cfg.sweep.clone(),
        };
        cmd_train(&cell_cfg)?;
        ran += 1;
    }
    println!("sweep complete: {ran} cells run, {skipped} skipped, manifest at {}", dir.join("manifest.json").display());
    Ok(())
}
