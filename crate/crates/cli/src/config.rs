//! Run configuration: JSON, fail-closed on unknown keys.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use sparsekl::cox::Link;
use sparsekl::fit::FeatureKind;
use sparsekl::optimize::OptimizerConfig;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    FitRegression,
    FitClassification,
    FitCox,
    Verify,
    Generate,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default)]
pub struct RawConfig {
    pub task: Option<Task>,
    pub seed: Option<u64>,
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub model: ModelConfig,
    pub optimizer: OptimizerBlock,
    pub generate: GenerateConfig,
    pub verify: VerifyConfig,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default)]
pub struct KernelInit {
    pub variance: Option<f64>,
    pub lengthscales: Option<Vec<f64>>,
    pub mean: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub kernel: KernelInit,
    pub num_inducing: usize,
    pub feature: FeatureKind,
    pub window_width: Option<f64>,
    pub noise_var: Option<f64>,
    pub link: Link,
    pub domain: Option<Vec<[f64; 2]>>,
    pub quad_orders: Option<Vec<usize>>,
    /// Prediction grid points per axis for Cox fits.
    pub grid: Option<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            kernel: KernelInit::default(),
            num_inducing: 10,
            feature: FeatureKind::Point,
            window_width: None,
            noise_var: None,
            link: Link::Exp,
            domain: None,
            quad_orders: None,
            grid: None,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default)]
pub struct OptimizerBlock {
    pub max_iters: Option<usize>,
    pub step: Option<f64>,
    pub tol: Option<f64>,
    pub fd_step: Option<f64>,
}

impl OptimizerBlock {
    pub fn resolve(&self) -> CliResult<OptimizerConfig> {
        let d = OptimizerConfig::default();
        let c = OptimizerConfig {
            max_iters: self.max_iters.unwrap_or(d.max_iters),
            step: self.step.unwrap_or(d.step),
            tol: self.tol.unwrap_or(d.tol),
            fd_step: self.fd_step.unwrap_or(d.fd_step),
        };
        c.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenerateKind {
    Regression,
    Cox,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default)]
pub struct GenerateConfig {
    pub kind: GenerateKind,
    /// Number of regression points.
    pub n: usize,
    pub noise_std: f64,
    pub domain: Vec<[f64; 2]>,
    /// Cox base rate `c` in `c·(1 + sin(ω·x₁))`.
    pub rate: f64,
    pub frequency: f64,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        GenerateConfig {
            kind: GenerateKind::Regression,
            n: 100,
            noise_std: 0.2,
            domain: vec![[0.0, 6.0]],
            rate: 8.5,
            frequency: 1.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default)]
pub struct VerifyConfig {
    pub instances: u64,
    pub tolerances: Tolerances,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            instances: 100,
            tolerances: Tolerances::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize, serde::Serialize)]
#[serde(default)]
pub struct Tolerances {
    /// Relative to `1 + |full_kl|`.
    pub equivalence: f64,
    pub chain_rule: f64,
    pub augmentation: f64,
    /// Smallest acceptable gap for the mismatched conditional.
    pub min_gap: f64,
    pub pushforward: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            equivalence: 1e-8,
            chain_rule: 1e-9,
            augmentation: 1e-9,
            min_gap: 0.01,
            pushforward: 1e-9,
        }
    }
}

/// Configuration with paths made absolute and CLI overrides applied.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub task: Task,
    pub seed: u64,
    pub data: Option<PathBuf>,
    pub out: PathBuf,
    pub model: ModelConfig,
    pub optimizer: OptimizerConfig,
    pub generate: GenerateConfig,
    pub verify: VerifyConfig,
}

/// Parses the JSON text and lists every key the schema does not know.
pub fn parse(text: &str) -> CliResult<RawConfig> {
    let mut unknown = Vec::new();
    let de = &mut serde_json::Deserializer::from_str(text);
    let raw: RawConfig = serde_ignored::deserialize(de, |path| unknown.push(path.to_string()))
        .map_err(|e| CliError::Config(e.to_string()))?;
    if !unknown.is_empty() {
        return Err(CliError::Config(format!("unknown keys: {}", unknown.join(", "))));
    }
    Ok(raw)
}

pub fn load(task: Task, path: &Path, seed: Option<u64>, out: Option<&Path>) -> CliResult<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let raw = parse(&text)?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    resolve(raw, task, &base, seed, out)
}

pub fn resolve(raw: RawConfig, task: Task, base: &Path, seed: Option<u64>, out: Option<&Path>) -> CliResult<RunConfig> {
    if let Some(t) = raw.task {
        if t != task {
            return Err(CliError::Config(format!("config is for task {t:?}, not {task:?}")));
        }
    }
    let seed = seed
        .or(raw.seed)
        .ok_or_else(|| CliError::Config("a seed is required: pass --seed or set \"seed\"".into()))?;
    let data = raw.data.map(|p| base.join(p));
    if matches!(task, Task::FitRegression | Task::FitClassification | Task::FitCox) && data.is_none() {
        return Err(CliError::Config("\"data\" is required for fit tasks".into()));
    }
    let out = match out {
        Some(o) => o.to_path_buf(),
        None => base.join(raw.out.unwrap_or_else(|| PathBuf::from("out"))),
    };
    let m = &raw.model;
    if m.num_inducing == 0 {
        return Err(CliError::Config("model.num_inducing must be at least 1".into()));
    }
    if let Some(d) = &m.domain {
        check_domain(d, "model.domain")?;
    }
    if task == Task::Generate {
        let g = &raw.generate;
        check_domain(&g.domain, "generate.domain")?;
        if !(g.noise_std >= 0.0 && g.noise_std.is_finite()) || !(g.rate >= 0.0 && g.rate.is_finite()) || !g.frequency.is_finite() {
            return Err(CliError::Config("generate.noise_std and generate.rate must be finite and non-negative".into()));
        }
    }
    if raw.verify.instances == 0 {
        return Err(CliError::Config("verify.instances must be at least 1".into()));
    }
    Ok(RunConfig {
        task,
        seed,
        data,
        out,
        optimizer: raw.optimizer.resolve()?,
        model: raw.model,
        generate: raw.generate,
        verify: raw.verify,
    })
}

fn check_domain(d: &[[f64; 2]], what: &str) -> CliResult<()> {
    if d.is_empty() || d.len() > 2 || d.iter().any(|[a, b]| !(a < b && a.is_finite() && b.is_finite())) {
        return Err(CliError::Config(format!("{what} needs one or two finite intervals [lo, hi] with lo < hi")));
    }
    Ok(())
}
