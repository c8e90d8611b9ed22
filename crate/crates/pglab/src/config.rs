//! Experiment configuration: TOML loading with per-task presets, strict
//! unknown-key rejection, a content hash for reproducibility records, and the
//! CSV/JSON emitters used by the command layer.
//!
//! Resolution order for the training section: the environment's preset
//! supplies every default, the config file overrides the keys it names, and
//! command-line flags override both. The fully resolved configuration is
//! serialized into each output directory, so any run can be reconstructed
//! from its artifacts alone. The content hash is the SHA-256 of the resolved
//! TOML with the seed fields cleared — runs that differ only by seed share a
//! hash.

use crate::algorithms::{IterMetrics, TrainConfig};
use crate::analysis::BiasVarianceRow;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::Path;

/// Knobs of the bias/variance study (`bias-variance` command).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudySection {
    /// Estimator ids to measure.
    pub estimators: Vec<String>,
    pub n_list: Vec<usize>,
    pub reps: usize,
    pub bootstrap: usize,
    pub level: f64,
    /// Fixed policy gains for the two-dimensional regulator study.
    pub theta: [f64; 2],
    /// Fixed bandit policy: mean action and standard deviation.
    pub policy_mean: f64,
    pub policy_sigma: f64,
}

impl Default for StudySection {
    fn default() -> Self {
        StudySection {
            estimators: vec!["pg".into(), "rpg".into()],
            n_list: vec![10, 25, 50, 75, 100],
            reps: 1000,
            bootstrap: 1000,
            level: 0.95,
            theta: crate::lqg::STUDY_GAINS,
            policy_mean: 0.5,
            policy_sigma: 0.25,
        }
    }
}

/// Grid axes of the `sweep` command. The cell set is the cartesian product
/// of environments, bandit widths (ignored by non-bandit tasks), algorithms,
/// and reward modes (ignored by `ppo`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub envs: Vec<String>,
    pub b_sq: Vec<f64>,
    pub algos: Vec<String>,
    pub reward_modes: Vec<String>,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            envs: vec!["peaks".into()],
            b_sq: vec![2.0, 8.0, 32.0],
            algos: vec!["ppo".into(), "rpg".into()],
            reward_modes: vec!["true".into()],
        }
    }
}

/// Shape of a config file. The `train` table is kept raw here because its
/// defaults depend on the chosen environment; [`resolve_train`] merges it
/// over the preset and rejects unknown keys at that point.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FileConfig {
    pub seed: Option<u64>,
    /// Half-open seed range "A..B" (runs seeds A, A+1, …, B−1).
    pub seeds: Option<String>,
    pub out: Option<String>,
    pub train: Option<toml::Value>,
    pub study: Option<StudySection>,
    pub sweep: Option<SweepSection>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<FileConfig> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

/// Merge the file's `[train]` table over the environment preset and
/// deserialize strictly. Keys the file does not mention keep their preset
/// values; unknown keys are an error.
pub fn resolve_train(env: &str, file_train: Option<&toml::Value>) -> Result<TrainConfig> {
    let preset = TrainConfig::preset(env)?;
    let mut base = toml::Value::try_from(&preset)
        .map_err(|e| Error::Config(format!("internal preset serialization: {e}")))?;
    if let Some(overlay) = file_train {
        let overlay_table = overlay
            .as_table()
            .ok_or_else(|| Error::Config("[train] must be a table".into()))?;
        let base_table = base.as_table_mut().expect("preset serializes to a table");
        for (k, v) in overlay_table {
            base_table.insert(k.clone(), v.clone());
        }
    }
    let cfg: TrainConfig = base
        .try_into()
        .map_err(|e| Error::Config(format!("[train]: {e}")))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Parse a half-open "A..B" seed range.
pub fn parse_seed_range(s: &str) -> Result<(u64, u64)> {
    let (a, b) = s
        .split_once("..")
        .ok_or_else(|| Error::InvalidArg(format!("seed range must look like A..B, got '{s}'")))?;
    let lo: u64 = a
        .trim()
        .parse()
        .map_err(|_| Error::InvalidArg(format!("bad seed range start '{a}'")))?;
    let hi: u64 = b
        .trim()
        .parse()
        .map_err(|_| Error::InvalidArg(format!("bad seed range end '{b}'")))?;
    if hi <= lo {
        return Err(Error::InvalidArg(format!(
            "seed range is half-open and must be non-empty: {lo}..{hi}"
        )));
    }
    Ok((lo, hi))
}

/// The fully resolved configuration of one command invocation, written to
/// `config.toml` in the output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResolvedConfig {
    pub command: String,
    /// First seed (inclusive).
    pub seed: u64,
    /// End of the half-open seed range; `seed + 1` for single-seed runs.
    pub seed_end: u64,
    pub out: String,
    pub train: TrainConfig,
    pub study: StudySection,
    pub sweep: SweepSection,
}

impl ResolvedConfig {
    pub fn seeds(&self) -> impl Iterator<Item = u64> {
        self.seed..self.seed_end
    }

    /// SHA-256 of the canonical TOML with the seed fields and output path
    /// cleared: a stable identity for "same experiment, any seed, anywhere".
    pub fn content_hash(&self) -> String {
        let mut cleared = self.clone();
        cleared.seed = 0;
        cleared.seed_end = 0;
        cleared.out = String::new();
        let text = toml::to_string(&cleared).expect("resolved config serializes");
        let mut hasher = Sha256::new();
        hasher.update(text.as_bytes());
        let digest = hasher.finalize();
        let mut hex = String::with_capacity(64);
        for byte in digest {
            let _ = write!(hex, "{byte:02x}");
        }
        hex
    }

    pub fn write_into(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let text = toml::to_string_pretty(self).expect("resolved config serializes");
        std::fs::write(dir.join("config.toml"), text)?;
        let meta = serde_json::json!({
            "command": self.command,
            "hash": self.content_hash(),
            "seed": self.seed,
            "seed_end": self.seed_end,
        });
        std::fs::write(dir.join("meta.json"), format!("{meta:#}\n"))?;
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// CSV emission
// ---------------------------------------------------------------------------

pub const METRICS_HEADER: &str =
    "iter,env_steps,mean_return,policy_loss,value_loss,reward_loss,kl,clip_frac,grad_norm,wallclock_s";
pub const BIAS_VARIANCE_HEADER: &str =
    "estimator,n_samples,bias2,bias2_lo,bias2_hi,variance,var_lo,var_hi,mse,mse_lo,mse_hi,M,seed";
pub const SUMMARY_HEADER: &str = "iter,env_steps,mean_return_mean,mean_return_se,n_seeds";

pub fn metrics_csv(rows: &[IterMetrics]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.iter,
            r.env_steps,
            r.mean_return,
            r.policy_loss,
            r.value_loss,
            r.reward_loss,
            r.kl,
            r.clip_frac,
            r.grad_norm,
            r.wallclock_s
        );
    }
    out
}

pub fn bias_variance_csv(rows: &[BiasVarianceRow]) -> String {
    let mut out = String::from(BIAS_VARIANCE_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.estimator,
            r.n_samples,
            r.bias2,
            r.bias2_lo,
            r.bias2_hi,
            r.variance,
            r.var_lo,
            r.var_hi,
            r.mse,
            r.mse_lo,
            r.mse_hi,
            r.reps,
            r.seed
        );
    }
    out
}

/// Cross-seed aggregate at one cadence point (iteration index).
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub iter: usize,
    pub env_steps: usize,
    pub mean_return_mean: f64,
    pub mean_return_se: f64,
    pub n_seeds: usize,
}

/// Aggregate per-seed metric tables: mean and standard error (sample std /
/// √n) of `mean_return` at each iteration, over the seeds that reached it.
pub fn summarize_runs(runs: &[Vec<IterMetrics>]) -> Vec<SummaryRow> {
    let longest = runs.iter().map(|r| r.len()).max().unwrap_or(0);
    let mut rows = Vec::with_capacity(longest);
    for i in 0..longest {
        let at: Vec<&IterMetrics> = runs.iter().filter_map(|r| r.get(i)).collect();
        let values: Vec<f64> = at.iter().map(|m| m.mean_return).collect();
        rows.push(SummaryRow {
            iter: at[0].iter,
            env_steps: at[0].env_steps,
            mean_return_mean: crate::stats::mean(&values),
            mean_return_se: crate::stats::standard_error(&values),
            n_seeds: at.len(),
        });
    }
    rows
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.iter, r.env_steps, r.mean_return_mean, r.mean_return_se, r.n_seeds
        );
    }
    out
}
