use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::baselines::Method;
use crate::model::ValueFunctions;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),
    #[error("invalid value `{value}` for `{key}`: {message}")]
    InvalidValue {
        key: String,
        value: String,
        message: String,
    },
    #[error("invalid configuration: {0}")]
    Inconsistent(String),
}

/// Where the tasks and workers of a run come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Distribution {
    Uniform,
    Normal,
    Csv,
}

impl FromStr for Distribution {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "uniform" => Ok(Self::Uniform),
            "normal" => Ok(Self::Normal),
            "csv" => Ok(Self::Csv),
            other => Err(format!("expected uniform, normal or csv, got `{other}`")),
        }
    }
}

impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Uniform => "uniform",
            Self::Normal => "normal",
            Self::Csv => "csv",
        })
    }
}

/// How `sigma_or_var` is read by the normal generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpreadMode {
    Variance,
    StdDev,
}

impl FromStr for SpreadMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "variance" | "var" => Ok(Self::Variance),
            "stddev" | "sd" | "sigma" => Ok(Self::StdDev),
            other => Err(format!("expected variance or stddev, got `{other}`")),
        }
    }
}

/// One experiment: a method, the synthetic or recorded workload and the seed.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub algo: Method,
    /// Workers per task in a batch.
    pub worker_task_ratio: f64,
    pub task_value: f64,
    /// Service radius of every synthetic worker.
    pub worker_range: f64,
    pub eps_range: (f64, f64),
    /// Budgets per task-worker pair.
    pub budget_group_size: usize,
    pub batch_size: usize,
    pub n_tasks: usize,
    pub distribution: Distribution,
    pub seed: u64,
    pub alpha: f64,
    pub beta: f64,
    pub sigma_or_var: f64,
    pub spread_mode: SpreadMode,
    pub input_tasks: Option<PathBuf>,
    pub input_workers: Option<PathBuf>,
    /// Workers per group in CSV mode; `None` means `ceil(ratio * batch_size)`.
    pub worker_group_size: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            algo: Method::Puce,
            worker_task_ratio: 2.0,
            task_value: 4.5,
            worker_range: 1.4,
            eps_range: (0.5, 1.75),
            budget_group_size: 7,
            batch_size: 500,
            n_tasks: 500,
            distribution: Distribution::Normal,
            seed: 0,
            alpha: 1.0,
            beta: 1.0,
            sigma_or_var: 150.0,
            spread_mode: SpreadMode::Variance,
            input_tasks: None,
            input_workers: None,
            worker_group_size: None,
        }
    }
}

pub const MAX_BATCH: usize = 1000;

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value
        .trim()
        .parse::<T>()
        .map_err(|e| ConfigError::InvalidValue {
            key: key.to_string(),
            value: value.to_string(),
            message: e.to_string(),
        })
}

/// Parses `lo,hi` or `lo:hi`.
fn parse_range(key: &str, value: &str) -> Result<(f64, f64), ConfigError> {
    let parts: Vec<&str> = value.split([',', ':']).collect();
    if parts.len() != 2 {
        return Err(ConfigError::InvalidValue {
            key: key.to_string(),
            value: value.to_string(),
            message: "expected `lo,hi`".into(),
        });
    }
    Ok((parse_num(key, parts[0])?, parse_num(key, parts[1])?))
}

/// Maps CLI spellings onto field names.
fn canonical_key(key: &str) -> String {
    let key = key.trim().trim_start_matches("--").replace('-', "_");
    match key.as_str() {
        "ratio" => "worker_task_ratio",
        "value" => "task_value",
        "range" => "worker_range",
        "eps" => "eps_range",
        "z" => "budget_group_size",
        "tasks" => "n_tasks",
        "batch" => "batch_size",
        "dist" => "distribution",
        _ => return key,
    }
    .to_string()
}

impl ExperimentConfig {
    /// Sets one field from its textual form; `key` is a field name or a CLI flag name.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let key = canonical_key(key);
        let invalid = |message: String| ConfigError::InvalidValue {
            key: key.clone(),
            value: value.to_string(),
            message,
        };
        let v = value.trim();
        match key.as_str() {
            "algo" => self.algo = v.parse().map_err(invalid)?,
            "worker_task_ratio" => self.worker_task_ratio = parse_num(&key, v)?,
            "task_value" => self.task_value = parse_num(&key, v)?,
            "worker_range" => self.worker_range = parse_num(&key, v)?,
            "eps_range" => self.eps_range = parse_range(&key, v)?,
            "budget_group_size" => self.budget_group_size = parse_num(&key, v)?,
            "batch_size" => self.batch_size = parse_num(&key, v)?,
            "n_tasks" => self.n_tasks = parse_num(&key, v)?,
            "distribution" => self.distribution = v.parse().map_err(invalid)?,
            "seed" => self.seed = parse_num(&key, v)?,
            "alpha" => self.alpha = parse_num(&key, v)?,
            "beta" => self.beta = parse_num(&key, v)?,
            "sigma_or_var" => self.sigma_or_var = parse_num(&key, v)?,
            "spread_mode" => self.spread_mode = v.parse().map_err(invalid)?,
            "input_tasks" => self.input_tasks = Some(PathBuf::from(v)),
            "input_workers" => self.input_workers = Some(PathBuf::from(v)),
            "worker_group_size" => self.worker_group_size = Some(parse_num(&key, v)?),
            _ => return Err(ConfigError::UnknownKey(key)),
        }
        Ok(())
    }

    /// Applies a flat `key = value` file on top of `self`. Blank lines and `#` comments are skipped.
    pub fn apply_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        self.apply_text(&text)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (k, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError::Syntax {
                    line: k + 1,
                    text: line.to_string(),
                });
            };
            self.set(key, value)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = |name: &str, x: f64| {
            if x.is_finite() && x > 0.0 {
                Ok(())
            } else {
                Err(ConfigError::Inconsistent(format!(
                    "{name} must be positive, got {x}"
                )))
            }
        };
        positive("worker_task_ratio", self.worker_task_ratio)?;
        positive("task_value", self.task_value)?;
        positive("worker_range", self.worker_range)?;
        positive("alpha", self.alpha)?;
        positive("beta", self.beta)?;
        positive("sigma_or_var", self.sigma_or_var)?;
        let (lo, hi) = self.eps_range;
        positive("eps_range lower bound", lo)?;
        if !(hi.is_finite() && lo <= hi) {
            return Err(ConfigError::Inconsistent(format!(
                "eps_range needs lo <= hi, got [{lo}, {hi}]"
            )));
        }
        if self.budget_group_size == 0 || self.n_tasks == 0 || self.batch_size == 0 {
            return Err(ConfigError::Inconsistent(
                "budget_group_size, n_tasks and batch_size must be positive".into(),
            ));
        }
        if self.batch_size > MAX_BATCH {
            return Err(ConfigError::Inconsistent(format!(
                "batch_size {} exceeds {MAX_BATCH}",
                self.batch_size
            )));
        }
        if self.worker_group_size == Some(0) {
            return Err(ConfigError::Inconsistent(
                "worker_group_size must be positive".into(),
            ));
        }
        if self.distribution == Distribution::Csv
            && (self.input_tasks.is_none() || self.input_workers.is_none())
        {
            return Err(ConfigError::Inconsistent(
                "csv input needs both input_tasks and input_workers".into(),
            ));
        }
        Ok(())
    }

    pub fn value_functions(&self) -> Result<ValueFunctions, ConfigError> {
        ValueFunctions::new(self.alpha, self.beta)
            .map_err(|e| ConfigError::Inconsistent(e.to_string()))
    }

    /// Workers generated per batch of `n` tasks.
    pub fn workers_for(&self, n: usize) -> usize {
        (self.worker_task_ratio * n as f64 - 1e-9).ceil().max(0.0) as usize
    }
}

/// Reads a configuration file over the defaults.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let mut cfg = ExperimentConfig::default();
    cfg.apply_text(text)?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let cfg = ExperimentConfig::default();
        assert_eq!(cfg.worker_task_ratio, 2.0);
        assert_eq!(cfg.task_value, 4.5);
        assert_eq!(cfg.worker_range, 1.4);
        assert_eq!(cfg.eps_range, (0.5, 1.75));
        assert_eq!(cfg.budget_group_size, 7);
        assert!(cfg.batch_size <= MAX_BATCH);
        cfg.validate().unwrap();
    }

    #[test]
    fn file_keys_are_field_names() {
        let cfg = parse_config(
            "# sweep base\nalgo = pgt\nworker_task_ratio = 1.5\neps_range = 0.5, 0.75\n\nseed=9\n",
        )
        .unwrap();
        assert_eq!(cfg.algo, Method::Pgt);
        assert_eq!(cfg.worker_task_ratio, 1.5);
        assert_eq!(cfg.eps_range, (0.5, 0.75));
        assert_eq!(cfg.seed, 9);
    }

    #[test]
    fn bad_lines() {
        assert!(matches!(
            parse_config("ratio 2"),
            Err(ConfigError::Syntax { line: 1, .. })
        ));
        assert!(matches!(
            parse_config("colour = red"),
            Err(ConfigError::UnknownKey(_))
        ));
        assert!(matches!(
            parse_config("seed = -1"),
            Err(ConfigError::InvalidValue { .. })
        ));
        assert!(matches!(
            parse_config("algo = simplex"),
            Err(ConfigError::InvalidValue { .. })
        ));
    }

    #[test]
    fn validation() {
        let mut cfg = ExperimentConfig::default();
        cfg.eps_range = (1.0, 0.5);
        assert!(cfg.validate().is_err());
        cfg = ExperimentConfig::default();
        cfg.batch_size = 1001;
        assert!(cfg.validate().is_err());
        cfg = ExperimentConfig::default();
        cfg.distribution = Distribution::Csv;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn worker_counts() {
        let mut cfg = ExperimentConfig::default();
        assert_eq!(cfg.workers_for(100), 200);
        cfg.worker_task_ratio = 1.5;
        assert_eq!(cfg.workers_for(3), 5);
    }
}
