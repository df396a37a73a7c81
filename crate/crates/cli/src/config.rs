//! Experiment configuration: a TOML file with strict unknown-key
//! rejection, validated before any computation runs.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemConfig,
    pub topology: TopologyConfig,
    pub algorithm: AlgorithmConfig,
    pub quantization: QuantizationConfig,
    pub channel: Option<ChannelConfig>,
    #[serde(default)]
    pub run: RunConfig,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    /// "synthetic" | "csv" | "quadratic"
    pub kind: String,
    pub m: Option<usize>,
    pub d: Option<usize>,
    pub rho: Option<f64>,
    pub seed: Option<u64>,
    pub path: Option<PathBuf>,
    pub mu: Option<f64>,
    pub lip: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyConfig {
    /// "master" | "edge-list" | "random-geometric"
    pub kind: String,
    pub nodes: Option<usize>,
    pub path: Option<PathBuf>,
    pub radius: Option<f64>,
    pub seed: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmConfig {
    /// "gd" | "pgd" | "dual"
    pub kind: String,
    pub gamma: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantizationConfig {
    /// An integer, "auto" (the condition-number formula), or a sweep
    /// range "lo..hi".
    pub bits: BitsSpec,
    /// Radius decay override; below alpha(bits) the guarantee is void.
    pub alpha: Option<f64>,
    /// Gain override in place of max(1, 2 L_A L_C / sigma).
    pub gain: Option<f64>,
    /// Distance bound override; defaults come from the problem.
    pub d_bound: Option<f64>,
    /// Sweeps also run the algorithm and report observed counts.
    #[serde(default)]
    pub empirical: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum BitsSpec {
    Fixed(u32),
    Text(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bits {
    Fixed(u32),
    Auto,
    Sweep { lo: u32, hi: u32 },
}

impl BitsSpec {
    pub fn parse(&self) -> Result<Bits, CliError> {
        match self {
            BitsSpec::Fixed(b) => Ok(Bits::Fixed(*b)),
            BitsSpec::Text(text) => {
                let t = text.trim();
                if t == "auto" {
                    return Ok(Bits::Auto);
                }
                if let Some((lo, hi)) = t.split_once("..") {
                    let lo: u32 = lo
                        .trim()
                        .parse()
                        .map_err(|_| CliError::config(format!("bad bit range {text:?}")))?;
                    let hi: u32 = hi
                        .trim()
                        .parse()
                        .map_err(|_| CliError::config(format!("bad bit range {text:?}")))?;
                    if lo == 0 || hi < lo || hi > 64 {
                        return Err(CliError::config(format!("bit range {text:?} out of order")));
                    }
                    return Ok(Bits::Sweep { lo, hi });
                }
                if let Ok(b) = t.parse::<u32>() {
                    return Ok(Bits::Fixed(b));
                }
                Err(CliError::config(format!(
                    "bits must be an integer, \"auto\", or \"lo..hi\", got {text:?}"
                )))
            }
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    /// "constant" | "finite-blocklength" | "bell"
    pub rate: String,
    pub c: Option<f64>,
    pub v: Option<f64>,
    pub max_rate: Option<f64>,
    pub a: Option<f64>,
    #[serde(default)]
    pub theta: u64,
    #[serde(default)]
    pub p: f64,
    /// "until-success" (default) | "fixed-rounds"
    pub policy: Option<String>,
    pub delta: Option<f64>,
    /// Explicit rounds per iteration for the fixed-rounds policy; the
    /// default is the probabilistic-guarantee formula at `delta`.
    pub rounds: Option<u64>,
    /// Failure probabilities for the retrans sweep.
    pub p_grid: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub eps: Option<f64>,
    pub horizon: Option<usize>,
    pub seed: Option<u64>,
    pub replicas: Option<usize>,
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::config(format!("config error: {e}")))
    }

    pub fn eps(&self) -> f64 {
        self.run.eps.unwrap_or(1e-4)
    }

    pub fn horizon(&self) -> usize {
        self.run.horizon.unwrap_or(500)
    }

    pub fn seed(&self) -> u64 {
        self.run.seed.unwrap_or(1)
    }

    pub fn replicas(&self) -> usize {
        self.run.replicas.unwrap_or(10_000)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.run.out.clone().unwrap_or_else(|| PathBuf::from("out"))
    }
}

impl ChannelConfig {
    pub fn rate_model(&self) -> Result<quantgrid::channel::RateModel, CliError> {
        use quantgrid::channel::RateModel;
        match self.rate.as_str() {
            "constant" => Ok(RateModel::Constant {
                c: self
                    .c
                    .ok_or_else(|| CliError::config("constant rate needs `c`"))?,
            }),
            "finite-blocklength" => Ok(RateModel::FiniteBlocklength {
                c: self
                    .c
                    .ok_or_else(|| CliError::config("finite-blocklength rate needs `c`"))?,
                v: self
                    .v
                    .ok_or_else(|| CliError::config("finite-blocklength rate needs `v`"))?,
            }),
            "bell" => {
                let default = RateModel::bell_default();
                let (default_rate, default_a) = match default {
                    RateModel::BellShape { max_rate, a } => (max_rate, a),
                    _ => unreachable!(),
                };
                Ok(RateModel::BellShape {
                    max_rate: self.max_rate.unwrap_or(default_rate),
                    a: self.a.unwrap_or(default_a),
                })
            }
            other => Err(CliError::config(format!(
                "unknown rate model {other:?}; expected constant, finite-blocklength, or bell"
            ))),
        }
    }

    pub fn is_fixed_rounds(&self) -> Result<bool, CliError> {
        match self.policy.as_deref() {
            None | Some("until-success") => Ok(false),
            Some("fixed-rounds") => Ok(true),
            Some(other) => Err(CliError::config(format!(
                "unknown policy {other:?}; expected until-success or fixed-rounds"
            ))),
        }
    }
}
