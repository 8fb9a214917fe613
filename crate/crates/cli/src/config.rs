//! Run configuration: flags over an optional JSON file over defaults.

use std::path::{Path, PathBuf};

use clap::{Args, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use donsker_core::paths::IncrementLaw;
use donsker_core::sobolev::{validate_index, SobolevIndex};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("invalid value for `{field}`: {msg}")]
    Field { field: &'static str, msg: String },
    #[error("cannot read config file {path}: {msg}")]
    File { path: PathBuf, msg: String },
}

fn field(field: &'static str, msg: impl Into<String>) -> ConfigError {
    ConfigError::Field { field, msg: msg.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    /// Gram matrix tables, inverse norms and conditional variances
    Gram,
    /// Sobolev norm checks and bound-ratio sweeps
    Norms,
    /// Stein-Dirichlet identity and Lipschitz-modulus probe
    Stein,
    /// Walk-to-Brownian-motion rate ladder
    Rate,
    /// Local time at zero against the half-normal law
    Localtime,
}

/// Parameters accepted on the command line and in the JSON config file.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    /// Grid size of the walk
    #[arg(long, global = true)]
    pub m: Option<usize>,
    /// Coarse grid size
    #[arg(long = "N", global = true)]
    #[serde(rename = "N")]
    pub n: Option<usize>,
    /// Comma-separated ladder of grid sizes
    #[arg(long, global = true, value_delimiter = ',')]
    pub ladder: Option<Vec<usize>>,
    /// Increment law: rademacher, gaussian or uniform
    #[arg(long, global = true)]
    pub law: Option<String>,
    #[arg(long, global = true)]
    pub eta: Option<f64>,
    #[arg(long, global = true)]
    pub p: Option<f64>,
    /// Monte Carlo replicates per estimate
    #[arg(long, global = true)]
    pub reps: Option<usize>,
    /// Replicates for the KR lower bounds of `rate` (defaults to --reps)
    #[arg(long, global = true)]
    pub kr_reps: Option<usize>,
    /// Smoothing time of the Stein-Dirichlet identity
    #[arg(long, global = true)]
    pub tau0: Option<f64>,
    /// Truncation time of the Stein-Dirichlet integral
    #[arg(long, global = true)]
    pub tau_max: Option<f64>,
    /// Comma-separated OU times for the probe suite
    #[arg(long, global = true, value_delimiter = ',')]
    pub taus: Option<Vec<f64>>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Relative tolerance of the Sobolev norm quadrature
    #[arg(long, global = true)]
    pub norm_tol: Option<f64>,
}

impl Params {
    /// `self` where set, otherwise `other`.
    pub fn or(self, other: Params) -> Params {
        Params {
            m: self.m.or(other.m),
            n: self.n.or(other.n),
            ladder: self.ladder.or(other.ladder),
            law: self.law.or(other.law),
            eta: self.eta.or(other.eta),
            p: self.p.or(other.p),
            reps: self.reps.or(other.reps),
            kr_reps: self.kr_reps.or(other.kr_reps),
            tau0: self.tau0.or(other.tau0),
            tau_max: self.tau_max.or(other.tau_max),
            taus: self.taus.or(other.taus),
            seed: self.seed.or(other.seed),
            norm_tol: self.norm_tol.or(other.norm_tol),
        }
    }

    pub fn from_file(path: &Path) -> Result<Params, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::File { path: path.into(), msg: e.to_string() })?;
        serde_json::from_str(&text).map_err(|e| ConfigError::File { path: path.into(), msg: e.to_string() })
    }
}

/// Fully resolved and validated configuration.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: Command,
    pub m: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub ladder: Vec<usize>,
    pub law: String,
    pub eta: f64,
    pub p: f64,
    pub reps: usize,
    pub kr_reps: usize,
    pub tau0: f64,
    pub tau_max: f64,
    pub taus: Vec<f64>,
    pub seed: u64,
    pub norm_tol: f64,
}

impl RunConfig {
    pub fn index(&self) -> SobolevIndex {
        validate_index(self.eta, self.p).expect("validated")
    }

    pub fn increment_law(&self) -> IncrementLaw {
        IncrementLaw::parse(&self.law, 1).expect("validated")
    }

    pub fn resolve(command: Command, p: Params) -> Result<RunConfig, ConfigError> {
        let (dm, dn, dladder): (usize, usize, Vec<usize>) = match command {
            Command::Gram => (24, 2, vec![]),
            Command::Norms => (64, 4, vec![4, 16, 64, 256]),
            Command::Stein => (2, 1, vec![]),
            Command::Rate => (0, 0, vec![64, 512, 4096]),
            Command::Localtime => (0, 0, vec![16, 64, 256, 1024, 4096]),
        };
        let cfg = RunConfig {
            command,
            m: p.m.unwrap_or(dm),
            n: p.n.unwrap_or(dn),
            ladder: p.ladder.unwrap_or(dladder),
            law: p.law.unwrap_or_else(|| "rademacher".into()),
            eta: p.eta.unwrap_or(0.1),
            p: p.p.unwrap_or(20.0),
            reps: p.reps.unwrap_or(10_000),
            kr_reps: p.kr_reps.or(p.reps).unwrap_or(10_000),
            tau0: p.tau0.unwrap_or(0.05),
            tau_max: p.tau_max.unwrap_or(8.0),
            taus: p.taus.unwrap_or_else(|| vec![0.1, 0.4, 1.6]),
            seed: p.seed.unwrap_or(1),
            norm_tol: p.norm_tol.unwrap_or(1e-3),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        validate_index(self.eta, self.p).map_err(|e| field("eta/p", e.to_string()))?;
        IncrementLaw::parse(&self.law, 1).map_err(|e| field("law", e.to_string()))?;
        if self.reps == 0 {
            return Err(field("reps", "must be >= 1"));
        }
        if self.kr_reps < 20 && self.command == Command::Rate {
            return Err(field("kr_reps", "must be >= 20"));
        }
        if !(self.norm_tol > 0.0) {
            return Err(field("norm_tol", "must be > 0"));
        }
        let ladder_ok = |min_len: usize| -> Result<(), ConfigError> {
            if self.ladder.len() < min_len {
                return Err(field("ladder", format!("needs at least {min_len} sizes")));
            }
            if self.ladder[0] == 0 || self.ladder.windows(2).any(|w| w[1] <= w[0]) {
                return Err(field("ladder", "must be positive and strictly increasing"));
            }
            Ok(())
        };
        match self.command {
            Command::Gram => {
                if self.n == 0 {
                    return Err(field("N", "must be >= 1"));
                }
                if self.m <= 8 * self.n {
                    return Err(field("m", format!("must exceed 8N = {}", 8 * self.n)));
                }
            }
            Command::Norms => {
                ladder_ok(1)?;
                if self.n == 0 || self.n >= self.m {
                    return Err(field("N", "must satisfy 1 <= N < m"));
                }
                if self.reps < 2 {
                    return Err(field("reps", "must be >= 2"));
                }
            }
            Command::Stein => {
                if self.m == 0 || self.n == 0 {
                    return Err(field("m", "m and N must be >= 1"));
                }
                if !(self.tau0 > 0.0) {
                    return Err(field("tau0", "must be > 0"));
                }
                if !(self.tau_max > self.tau0) || !self.tau_max.is_finite() {
                    return Err(field("tau_max", "must be finite and > tau0"));
                }
                if self.taus.is_empty() || self.taus.iter().any(|t| !(*t > 0.0) || !t.is_finite()) {
                    return Err(field("taus", "must be a nonempty list of positive times"));
                }
                if self.reps < 2 {
                    return Err(field("reps", "must be >= 2"));
                }
            }
            Command::Rate => {
                ladder_ok(3)?;
                if self.reps < 2 {
                    return Err(field("reps", "must be >= 2"));
                }
            }
            Command::Localtime => {
                ladder_ok(3)?;
                if self.reps < 20 {
                    return Err(field("reps", "must be >= 20"));
                }
            }
        }
        Ok(())
    }
}
