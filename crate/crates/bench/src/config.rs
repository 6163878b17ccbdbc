//! Experiment configuration, read from TOML.
//!
//! ```toml
//! family = "quadratic"   # quadratic | bregman | scoring | logloss
//! rounds = 2000
//! seed = 7
//!
//! [loss]
//! y_max = 1.0
//!
//! [kernel]
//! type = "rbf"
//! order = 1
//! gamma = 1.0
//!
//! [generator]
//! kind = "adversarial_sign"
//!
//! [[benchmark]]
//! name = "b0"
//! centers = [[0.2, 0.5, 0.7]]
//! coeffs = [1.5]
//! ```
//!
//! A center lists `x_1, y_1, ..., x_m, y_m, x_current` with each `x` taking
//! `side_dim` coordinates.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};

fn default_side_dim() -> usize {
    1
}

fn default_delta() -> f64 {
    0.05
}

fn default_runs() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub name: Option<String>,
    /// `interval` or `binary`; checked against the family when given.
    #[serde(default)]
    pub space: Option<String>,
    pub family: String,
    pub rounds: usize,
    pub seed: u64,
    #[serde(default = "default_side_dim")]
    pub side_dim: usize,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default)]
    pub loss: LossConfig,
    pub kernel: KernelConfig,
    pub generator: GeneratorConfig,
    #[serde(default, rename = "benchmark")]
    pub benchmarks: Vec<BenchmarkConfig>,
    #[serde(default)]
    pub random_benchmarks: Option<RandomBenchmarks>,
    #[serde(default)]
    pub experiment: Option<ExperimentConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossConfig {
    #[serde(default = "LossConfig::default_y_max")]
    pub y_max: f64,
    #[serde(default = "LossConfig::default_eps")]
    pub eps: f64,
    /// `brier` or `log`, for the scoring family.
    #[serde(default = "LossConfig::default_rule")]
    pub rule: String,
    #[serde(default)]
    pub p_lower: Option<f64>,
    #[serde(default)]
    pub p_upper: Option<f64>,
}

impl LossConfig {
    fn default_y_max() -> f64 {
        1.0
    }

    fn default_eps() -> f64 {
        0.05
    }

    fn default_rule() -> String {
        "brier".into()
    }
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            y_max: Self::default_y_max(),
            eps: Self::default_eps(),
            rule: Self::default_rule(),
            p_lower: None,
            p_upper: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    /// `rbf`, `linear`, `constant` or `universal`.
    #[serde(rename = "type")]
    pub kind: String,
    #[serde(default)]
    pub order: usize,
    #[serde(default = "KernelConfig::default_gamma")]
    pub gamma: f64,
    #[serde(default = "KernelConfig::default_value")]
    pub value: f64,
    #[serde(default = "KernelConfig::default_value")]
    pub coordinate_bound: f64,
    /// Universal-kernel members, e.g. `"echo"`, `"affine:0.5,0.1"`.
    #[serde(default)]
    pub members: Vec<String>,
    /// Sup norms of the members; computed from the member formulas when absent.
    #[serde(default)]
    pub sup_norms: Option<Vec<f64>>,
    /// Estimate the sup norms by sampling this many situations instead.
    #[serde(default)]
    pub sup_samples: Option<usize>,
}

impl KernelConfig {
    fn default_gamma() -> f64 {
        1.0
    }

    fn default_value() -> f64 {
        1.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub kind: String,
    /// Benchmark the adversary plays against, or the truth of
    /// `stochastic_truth`.
    #[serde(default)]
    pub target: Option<String>,
    #[serde(default)]
    pub rho: Option<f64>,
    #[serde(default)]
    pub sigma: Option<f64>,
    #[serde(default)]
    pub period: Option<f64>,
    #[serde(default)]
    pub amplitude: Option<f64>,
    #[serde(default)]
    pub noise: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub name: String,
    #[serde(default)]
    pub centers: Vec<Vec<f64>>,
    #[serde(default)]
    pub coeffs: Vec<f64>,
    /// Rescale the expansion to this norm.
    #[serde(default)]
    pub norm: Option<f64>,
    /// Member index of a universal kernel, 1-based, instead of an expansion.
    #[serde(default)]
    pub member: Option<usize>,
    /// Must match the leader's benchmark link when given.
    #[serde(default)]
    pub link: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomBenchmarks {
    pub count: usize,
    #[serde(default = "RandomBenchmarks::default_centers")]
    pub centers: usize,
    /// Norms are drawn uniformly from `[0, norm_max]`, capped by the link.
    pub norm_max: f64,
    #[serde(default = "RandomBenchmarks::default_history")]
    pub history: usize,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl RandomBenchmarks {
    fn default_centers() -> usize {
        4
    }

    fn default_history() -> usize {
        3
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// `hoeffding` or `jeffreys`.
    pub kind: String,
    #[serde(default)]
    pub noise: Option<f64>,
    /// Benchmark used as the true strategy.
    pub truth: String,
    #[serde(default)]
    pub checkpoints: Vec<usize>,
    /// `leader` or `zero` for the Hoeffding check.
    #[serde(default)]
    pub strategy: Option<String>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let config: Config = toml::from_str(text).map_err(|e| BenchError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| BenchError::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            BenchError::Config(m) => BenchError::Parse {
                path: path.to_path_buf(),
                message: m,
            },
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(BenchError::Config("rounds must be at least 1".into()));
        }
        if self.runs == 0 {
            return Err(BenchError::Config("runs must be at least 1".into()));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(BenchError::Config(format!("delta = {} must lie in (0, 1)", self.delta)));
        }
        let mut names: Vec<&str> = self.benchmarks.iter().map(|b| b.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(BenchError::Config("benchmark names must be unique".into()));
        }
        for b in &self.benchmarks {
            if b.name.is_empty() || b.name.contains([',', '"', '\n']) {
                return Err(BenchError::Config(format!("invalid benchmark name {:?}", b.name)));
            }
            if b.member.is_none() && b.centers.len() != b.coeffs.len() {
                return Err(BenchError::Config(format!(
                    "{}: {} centers but {} coefficients",
                    b.name,
                    b.centers.len(),
                    b.coeffs.len()
                )));
            }
        }
        Ok(())
    }
}
