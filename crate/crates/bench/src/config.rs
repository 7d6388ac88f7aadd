//! Experiment configuration.
//!
//! A config file is flat `key = value` text. Blank lines and lines starting
//! with `#` are ignored; the file must declare `schema = 1`. Keys:
//!
//! | key | meaning |
//! |---|---|
//! | `experiment` | `static`, `arch`, `tracking` or `highdim` |
//! | `sizes` | comma-separated particle counts (N for static/arch, M otherwise) |
//! | `dims` | state dimensions for `highdim`, multiples of 4 |
//! | `runs`, `horizon`, `seed` | Monte Carlo runs P, last time index T, master seed |
//! | `budget_matched` | `true`: baselines get `N = (M^2 + M) / 2` particles |
//! | `scenario` | tracking noise: `moderate`, `informative` or `both` |
//! | `sigma_x2`, `sigma_y2` | static prior and noise variances |
//! | `beta0`, `beta1`, `r` | ARCH parameters |
//! | `sigma_q2`, `sigma_rho`, `sigma_theta` | tracking process and sensor noise |
//! | `hd_sigma_q2`, `hd_sigma_obs2` | high-dimensional process and sensor noise |

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use sha2::{Digest, Sha256};
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(String),
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("invalid value for `{key}`: {value}")]
    Value { key: String, value: String },
    #[error("missing or unsupported schema (expected schema = {SCHEMA_VERSION})")]
    Schema,
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Static,
    Arch,
    Tracking,
    Highdim,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Static => "static",
            Experiment::Arch => "arch",
            Experiment::Tracking => "tracking",
            Experiment::Highdim => "highdim",
        }
    }

    /// Stream tag separating the random numbers of different experiments.
    pub fn tag(self) -> u64 {
        match self {
            Experiment::Static => 1,
            Experiment::Arch => 2,
            Experiment::Tracking => 3,
            Experiment::Highdim => 4,
        }
    }
}

impl FromStr for Experiment {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, ConfigError> {
        match s {
            "static" => Ok(Experiment::Static),
            "arch" => Ok(Experiment::Arch),
            "tracking" => Ok(Experiment::Tracking),
            "highdim" => Ok(Experiment::Highdim),
            _ => Err(ConfigError::Value {
                key: "experiment".into(),
                value: s.into(),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    Moderate,
    Informative,
    Both,
}

impl Scenario {
    fn name(self) -> &'static str {
        match self {
            Scenario::Moderate => "moderate",
            Scenario::Informative => "informative",
            Scenario::Both => "both",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub sizes: Vec<usize>,
    pub dims: Vec<usize>,
    pub runs: usize,
    pub horizon: usize,
    pub seed: u64,
    pub budget_matched: bool,
    pub scenario: Scenario,
    pub sigma_x2: f64,
    pub sigma_y2: f64,
    pub beta0: f64,
    pub beta1: f64,
    pub r: f64,
    pub sigma_q2: f64,
    /// `None` selects the scenario's default.
    pub sigma_rho: Option<f64>,
    pub sigma_theta: Option<f64>,
    pub hd_sigma_q2: f64,
    pub hd_sigma_obs2: f64,
}

impl ExperimentConfig {
    pub fn defaults(experiment: Experiment) -> Self {
        let sizes = match experiment {
            Experiment::Static => vec![20, 40, 60, 80, 100],
            Experiment::Arch => vec![5, 10, 15, 25, 50],
            Experiment::Tracking => vec![5, 10, 20, 30, 50],
            Experiment::Highdim => vec![100],
        };
        ExperimentConfig {
            experiment,
            sizes,
            dims: vec![4, 8, 16, 32],
            runs: 1000,
            horizon: 50,
            seed: 1,
            budget_matched: matches!(experiment, Experiment::Tracking | Experiment::Highdim),
            scenario: Scenario::Both,
            sigma_x2: 10.0,
            sigma_y2: 3.0,
            beta0: 3.0,
            beta1: 0.75,
            r: 1.0,
            sigma_q2: 10.0,
            sigma_rho: None,
            sigma_theta: None,
            hd_sigma_q2: 25.0,
            hd_sigma_obs2: 4.0,
        }
    }

    /// Parses config text, starting from the defaults of its experiment.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut kv = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or(ConfigError::Syntax { line: i + 1 })?;
            kv.insert(k.trim().to_string(), v.trim().to_string());
        }
        if kv.remove("schema").as_deref() != Some("1") {
            return Err(ConfigError::Schema);
        }
        let experiment = kv
            .remove("experiment")
            .ok_or_else(|| ConfigError::Invalid("missing `experiment`".into()))?
            .parse()?;
        let mut cfg = Self::defaults(experiment);
        for (k, v) in &kv {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(e.to_string()))?;
        Self::parse(&text)
    }

    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let bad = || ConfigError::Value {
            key: key.into(),
            value: value.into(),
        };
        let num = |v: &str| v.parse::<f64>().map_err(|_| bad());
        match key {
            "experiment" => {
                if value.parse::<Experiment>()? != self.experiment {
                    return Err(ConfigError::Invalid("experiment cannot change".into()));
                }
            }
            "sizes" => self.sizes = parse_list(value).ok_or_else(bad)?,
            "dims" => self.dims = parse_list(value).ok_or_else(bad)?,
            "runs" => self.runs = value.parse().map_err(|_| bad())?,
            "horizon" => self.horizon = value.parse().map_err(|_| bad())?,
            "seed" => self.seed = value.parse().map_err(|_| bad())?,
            "budget_matched" => self.budget_matched = value.parse().map_err(|_| bad())?,
            "scenario" => {
                self.scenario = match value {
                    "moderate" => Scenario::Moderate,
                    "informative" => Scenario::Informative,
                    "both" => Scenario::Both,
                    _ => return Err(bad()),
                }
            }
            "sigma_x2" => self.sigma_x2 = num(value)?,
            "sigma_y2" => self.sigma_y2 = num(value)?,
            "beta0" => self.beta0 = num(value)?,
            "beta1" => self.beta1 = num(value)?,
            "r" => self.r = num(value)?,
            "sigma_q2" => self.sigma_q2 = num(value)?,
            "sigma_rho" => self.sigma_rho = Some(num(value)?),
            "sigma_theta" => self.sigma_theta = Some(num(value)?),
            "hd_sigma_q2" => self.hd_sigma_q2 = num(value)?,
            "hd_sigma_obs2" => self.hd_sigma_obs2 = num(value)?,
            _ => return Err(ConfigError::UnknownKey(key.into())),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.sizes.is_empty() || self.sizes.contains(&0) {
            return Err(ConfigError::Invalid("sizes must be positive".into()));
        }
        if self.runs == 0 {
            return Err(ConfigError::Invalid("runs must be positive".into()));
        }
        if self.dims.is_empty() || self.dims.iter().any(|&d| d == 0 || d % 4 != 0) {
            return Err(ConfigError::Invalid(
                "dims must be positive multiples of 4".into(),
            ));
        }
        let positive = [
            self.sigma_x2,
            self.sigma_y2,
            self.beta0,
            self.beta1,
            self.r,
            self.sigma_q2,
            self.hd_sigma_q2,
            self.hd_sigma_obs2,
            self.sigma_rho.unwrap_or(1.0),
            self.sigma_theta.unwrap_or(1.0),
        ];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(ConfigError::Invalid(
                "model parameters must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Particle count of the baseline filter for final size `m`.
    pub fn baseline_particles(&self, m: usize) -> usize {
        if self.budget_matched {
            (m * m + m) / 2
        } else {
            m
        }
    }

    /// Canonical `key=value` text, also accepted by [`ExperimentConfig::parse`].
    pub fn canonical(&self) -> String {
        let list = |v: &[usize]| {
            v.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        let mut s = String::new();
        let _ = writeln!(s, "schema={SCHEMA_VERSION}");
        let _ = writeln!(s, "experiment={}", self.experiment.name());
        let _ = writeln!(s, "sizes={}", list(&self.sizes));
        let _ = writeln!(s, "dims={}", list(&self.dims));
        let _ = writeln!(s, "runs={}", self.runs);
        let _ = writeln!(s, "horizon={}", self.horizon);
        let _ = writeln!(s, "seed={}", self.seed);
        let _ = writeln!(s, "budget_matched={}", self.budget_matched);
        let _ = writeln!(s, "scenario={}", self.scenario.name());
        for (k, v) in [
            ("sigma_x2", self.sigma_x2),
            ("sigma_y2", self.sigma_y2),
            ("beta0", self.beta0),
            ("beta1", self.beta1),
            ("r", self.r),
            ("sigma_q2", self.sigma_q2),
            ("hd_sigma_q2", self.hd_sigma_q2),
            ("hd_sigma_obs2", self.hd_sigma_obs2),
        ] {
            let _ = writeln!(s, "{k}={v:?}");
        }
        if let Some(v) = self.sigma_rho {
            let _ = writeln!(s, "sigma_rho={v:?}");
        }
        if let Some(v) = self.sigma_theta {
            let _ = writeln!(s, "sigma_theta={v:?}");
        }
        s
    }

    /// First 12 hex digits of the SHA-256 of [`ExperimentConfig::canonical`].
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest.iter().take(6).map(|b| format!("{b:02x}")).collect()
    }
}

fn parse_list(v: &str) -> Option<Vec<usize>> {
    v.split(',').map(|x| x.trim().parse().ok()).collect()
}
