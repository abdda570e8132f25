use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution as _, Normal};
use thiserror::Error;

use super::config::{Distribution, ExperimentConfig, SpreadMode};
use crate::model::{Instance, Point, Task, Worker};
use crate::privacy::substream;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("{file}: {message}")]
    Io { file: String, message: String },
    #[error("{file}:{line}: column `{column}`: {message}")]
    Malformed {
        file: String,
        line: u64,
        column: String,
        message: String,
    },
    #[error("{file}: {message}")]
    Invalid { file: String, message: String },
}

const DATA_STREAM: u64 = 0x6461_7461;

fn build(cfg: &ExperimentConfig, tasks: Vec<Point>, workers: Vec<Point>) -> Instance {
    let tasks = tasks
        .into_iter()
        .enumerate()
        .map(|(k, location)| Task {
            id: k as u64,
            location,
            value: cfg.task_value,
            release_time: k as f64,
        })
        .collect();
    let workers = workers
        .into_iter()
        .enumerate()
        .map(|(k, location)| Worker {
            id: k as u64,
            location,
            radius: cfg.worker_range,
        })
        .collect();
    Instance::new(tasks, workers).expect("validated configuration yields a valid instance")
}

/// `n_tasks` tasks and `ceil(ratio * n_tasks)` workers uniform on `[0, 100]^2`.
pub fn generate_uniform<R: Rng + ?Sized>(cfg: &ExperimentConfig, rng: &mut R) -> Instance {
    let mut point = || Point::new(rng.random_range(0.0..=100.0), rng.random_range(0.0..=100.0));
    let tasks = (0..cfg.n_tasks).map(|_| point()).collect();
    let workers = (0..cfg.workers_for(cfg.n_tasks)).map(|_| point()).collect();
    build(cfg, tasks, workers)
}

/// Same counts as [`generate_uniform`], points from a centred isotropic normal.
pub fn generate_normal<R: Rng + ?Sized>(cfg: &ExperimentConfig, rng: &mut R) -> Instance {
    let sigma = match cfg.spread_mode {
        SpreadMode::Variance => cfg.sigma_or_var.sqrt(),
        SpreadMode::StdDev => cfg.sigma_or_var,
    };
    let normal = Normal::new(0.0, sigma).expect("validated spread");
    let mut point = || Point::new(normal.sample(rng), normal.sample(rng));
    let tasks = (0..cfg.n_tasks).map(|_| point()).collect();
    let workers = (0..cfg.workers_for(cfg.n_tasks)).map(|_| point()).collect();
    build(cfg, tasks, workers)
}

struct Table<'a> {
    file: &'a str,
    reader: csv::Reader<std::fs::File>,
    columns: Vec<usize>,
    names: &'static [&'static str],
}

impl<'a> Table<'a> {
    fn open(
        path: &'a Path,
        file: &'a str,
        names: &'static [&'static str],
    ) -> Result<Self, DataError> {
        let mut reader = csv::ReaderBuilder::new()
            .flexible(true)
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| DataError::Io {
                file: file.to_string(),
                message: e.to_string(),
            })?;
        let header = reader.headers().map_err(|e| DataError::Io {
            file: file.to_string(),
            message: e.to_string(),
        })?;
        let columns = names
            .iter()
            .map(|name| {
                header
                    .iter()
                    .position(|h| h == *name)
                    .ok_or_else(|| DataError::Malformed {
                        file: file.to_string(),
                        line: 1,
                        column: name.to_string(),
                        message: "missing from header".into(),
                    })
            })
            .collect::<Result<_, _>>()?;
        Ok(Self {
            file,
            reader,
            columns,
            names,
        })
    }

    /// Line number and numeric fields, in `names` order, of every data row.
    fn rows(&mut self) -> Result<Vec<(u64, Vec<f64>)>, DataError> {
        let mut out = Vec::new();
        for record in self.reader.records() {
            let record = record.map_err(|e| DataError::Malformed {
                file: self.file.to_string(),
                line: e.position().map_or(0, |p| p.line()),
                column: String::new(),
                message: e.to_string(),
            })?;
            let line = record.position().map_or(0, |p| p.line());
            let mut row = Vec::with_capacity(self.columns.len());
            for (&c, name) in self.columns.iter().zip(self.names) {
                let malformed = |message: String| DataError::Malformed {
                    file: self.file.to_string(),
                    line,
                    column: name.to_string(),
                    message,
                };
                let field = record
                    .get(c)
                    .filter(|f| !f.is_empty())
                    .ok_or_else(|| malformed("missing value".into()))?;
                let x: f64 = field
                    .parse()
                    .map_err(|_| malformed(format!("`{field}` is not a number")))?;
                if !x.is_finite() {
                    return Err(malformed(format!("`{field}` is not finite")));
                }
                row.push(x);
            }
            out.push((line, row));
        }
        Ok(out)
    }
}

fn parse_id(x: f64, file: &str, line: u64) -> Result<u64, DataError> {
    if x >= 0.0 && x.fract() == 0.0 && x < u64::MAX as f64 {
        Ok(x as u64)
    } else {
        Err(DataError::Malformed {
            file: file.to_string(),
            line,
            column: "id".into(),
            message: format!("`{x}` is not a non-negative integer"),
        })
    }
}

/// Reads recorded tasks and workers and cuts them into batches.
///
/// Tasks are ordered by release time and chunked into `cfg.batch_size`; workers
/// are split into groups of `cfg.worker_group_size` (default
/// `ceil(ratio * batch_size)`) that are handed to the batches in turn.
pub fn ingest_csv(
    task_path: &Path,
    worker_path: &Path,
    cfg: &ExperimentConfig,
) -> Result<Vec<Instance>, DataError> {
    let task_file = task_path.display().to_string();
    let worker_file = worker_path.display().to_string();

    let mut tasks = Vec::new();
    let rows = Table::open(
        task_path,
        &task_file,
        &["id", "release_time", "x", "y", "value"],
    )?
    .rows()?;
    for (line, r) in rows {
        tasks.push(Task {
            id: parse_id(r[0], &task_file, line)?,
            release_time: r[1],
            location: Point::new(r[2], r[3]),
            value: r[4],
        });
    }
    let mut workers = Vec::new();
    let rows = Table::open(worker_path, &worker_file, &["id", "x", "y", "radius"])?.rows()?;
    for (line, r) in rows {
        workers.push(Worker {
            id: parse_id(r[0], &worker_file, line)?,
            location: Point::new(r[1], r[2]),
            radius: r[3],
        });
    }
    if tasks.is_empty() {
        return Err(DataError::Invalid {
            file: task_file,
            message: "no tasks".into(),
        });
    }
    if workers.is_empty() {
        return Err(DataError::Invalid {
            file: worker_file,
            message: "no workers".into(),
        });
    }

    tasks.sort_by(|a, b| a.release_time.total_cmp(&b.release_time));
    let group = cfg
        .worker_group_size
        .unwrap_or_else(|| cfg.workers_for(cfg.batch_size))
        .max(1);
    let groups: Vec<&[Worker]> = workers.chunks(group).collect();
    tasks
        .chunks(cfg.batch_size)
        .enumerate()
        .map(|(b, chunk)| {
            Instance::new(chunk.to_vec(), groups[b % groups.len()].to_vec()).map_err(|e| {
                DataError::Invalid {
                    file: format!("{task_file}, {worker_file}"),
                    message: format!("batch {b}: {e}"),
                }
            })
        })
        .collect()
}

/// All batches of a configuration. Synthetic batches are generated independently
/// from per-batch streams of `cfg.seed`.
pub fn load_batches(cfg: &ExperimentConfig) -> Result<Vec<Instance>, DataError> {
    match cfg.distribution {
        Distribution::Csv => {
            let (Some(t), Some(w)) = (&cfg.input_tasks, &cfg.input_workers) else {
                return Err(DataError::Invalid {
                    file: String::new(),
                    message: "csv input needs task and worker files".into(),
                });
            };
            ingest_csv(t, w, cfg)
        }
        dist => {
            let count = cfg.n_tasks.div_ceil(cfg.batch_size);
            Ok((0..count)
                .map(|b| {
                    let mut sub = cfg.clone();
                    sub.n_tasks = cfg.batch_size.min(cfg.n_tasks - b * cfg.batch_size);
                    let mut rng = substream(cfg.seed, &[DATA_STREAM, b as u64]);
                    if dist == Distribution::Uniform {
                        generate_uniform(&sub, &mut rng)
                    } else {
                        generate_normal(&sub, &mut rng)
                    }
                })
                .collect())
        }
    }
}
