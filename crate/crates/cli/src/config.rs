//! Run configuration: a TOML file, overridden key by key by command-line flags.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use whitney_core::verifier::{Suite, TolerancePolicy};
use whitney_core::Exponent;

use crate::error::{CliError, CliResult};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Json => "json",
            Format::Csv => "csv",
        })
    }
}

/// Verification settings that have no dedicated flag.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exponents: Option<Vec<Exponent>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub marchaud_grid: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub marchaud_h_samples: Option<usize>,
}

/// Every field is optional; flags fill or override them and [`RunConfig::resolve`] applies defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub command: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub operation: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub function: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tag: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<Exponent>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t: Option<Vec<f64>>,
    /// Flat `a1, b1, a2, b2, ...`.
    #[serde(rename = "box", skip_serializing_if = "Option::is_none")]
    pub bounds: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h_samples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub parts: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub suite: Option<Suite>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,
    pub verify: VerifySection,
    pub tolerance: TolerancePolicy,
}

impl FromStr for RunConfig {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        toml::from_str(s).map_err(|e| e.to_string())
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::ConfigRead {
            path: path.to_path_buf(),
            source,
        })?;
        text.parse().map_err(|message| CliError::ConfigParse {
            path: path.to_path_buf(),
            message,
        })
    }

    #[cfg(test)]
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    /// Fields set in `flags` replace those in `self`.
    pub fn overridden_by(mut self, flags: RunConfig) -> Self {
        macro_rules! take {
            ($($field:ident),*) => {
                $(if flags.$field.is_some() { self.$field = flags.$field; })*
            };
        }
        take!(command, operation, function, tag, r, p, t, bounds, grid, h_samples, parts, seed, jobs, suite, out, format);
        self
    }
}

pub const DEFAULT_GRID: usize = 64;
pub const DEFAULT_H_SAMPLES: usize = 17;

/// Configuration with defaults applied, echoed into every report.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Resolved {
    pub command: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub operation: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub function: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tag: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<Exponent>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t: Option<Vec<f64>>,
    #[serde(rename = "box", skip_serializing_if = "Option::is_none")]
    pub bounds: Option<Vec<f64>>,
    pub grid: Vec<usize>,
    pub h_samples: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub parts: Option<Vec<usize>>,
    pub seed: u64,
    pub jobs: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub suite: Option<Suite>,
    pub format: Format,
    pub verify: VerifySection,
}

impl RunConfig {
    pub fn resolve(&self, command: &str) -> CliResult<Resolved> {
        let grid = self.grid.clone().unwrap_or_else(|| vec![DEFAULT_GRID]);
        if grid.is_empty() || grid.contains(&0) {
            return Err(CliError::Usage("grid sizes must be positive".into()));
        }
        let h_samples = self.h_samples.unwrap_or(DEFAULT_H_SAMPLES);
        if h_samples < 2 {
            return Err(CliError::Usage("hsamples must be at least 2".into()));
        }
        let jobs = self.jobs.unwrap_or(1);
        if jobs == 0 {
            return Err(CliError::Usage("jobs must be at least 1".into()));
        }
        if let Some(b) = &self.bounds {
            if b.is_empty() || b.len() % 2 != 0 {
                return Err(CliError::Usage("box needs pairs a,b per axis".into()));
            }
        }
        Ok(Resolved {
            command: command.to_string(),
            operation: self.operation.clone(),
            function: self.function.clone(),
            tag: self.tag.clone(),
            r: self.r.clone(),
            p: self.p,
            t: self.t.clone(),
            bounds: self.bounds.clone(),
            grid,
            h_samples,
            parts: self.parts.clone(),
            seed: self.seed.unwrap_or(0),
            jobs,
            suite: self.suite,
            format: self.format.unwrap_or_default(),
            verify: self.verify.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_config_round_trips() {
        let cfg = RunConfig {
            command: Some("verify".into()),
            operation: Some("best".into()),
            function: Some("exp_sum_2d".into()),
            tag: Some("analytic".into()),
            r: Some(vec![2, 3]),
            p: Some(Exponent::Finite(0.5)),
            t: Some(vec![0.25, 0.5]),
            bounds: Some(vec![-1.0, 1.0, 0.0, 2.5]),
            grid: Some(vec![32, 48]),
            h_samples: Some(9),
            parts: Some(vec![2, 4]),
            seed: Some(7),
            jobs: Some(2),
            suite: Some(Suite::ConstantLemma),
            out: Some(PathBuf::from("out/report.json")),
            format: Some(Format::Csv),
            verify: VerifySection {
                exponents: Some(vec![Exponent::Infinity, Exponent::Finite(1.0)]),
                marchaud_grid: Some(16),
                marchaud_h_samples: Some(5),
            },
            tolerance: TolerancePolicy {
                stability_rel: 0.2,
                ..Default::default()
            },
        };
        let text = cfg.to_toml();
        let back: RunConfig = text.parse().unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn empty_config_round_trips() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.to_toml().parse::<RunConfig>().unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!("gird = [3]".parse::<RunConfig>().is_err());
        assert!("[tolerance]\nfoo = 1.0".parse::<RunConfig>().is_err());
    }

    #[test]
    fn flags_win() {
        let file: RunConfig = "seed = 3\ngrid = [16]\np = \"inf\"".parse().unwrap();
        let flags = RunConfig {
            seed: Some(9),
            ..Default::default()
        };
        let merged = file.overridden_by(flags);
        assert_eq!(merged.seed, Some(9));
        assert_eq!(merged.grid, Some(vec![16]));
        assert_eq!(merged.p, Some(Exponent::Infinity));
    }

    #[test]
    fn resolve_rejects_bad_values() {
        let odd_box = RunConfig {
            bounds: Some(vec![0.0, 1.0, 2.0]),
            ..Default::default()
        };
        assert!(odd_box.resolve("compute").is_err());
        let zero_grid = RunConfig {
            grid: Some(vec![0]),
            ..Default::default()
        };
        assert!(zero_grid.resolve("compute").is_err());
    }
}
