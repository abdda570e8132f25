use std::io::Write;
use std::sync::Arc;
use std::time::Instant;

use rand::RngCore;
use rayon::prelude::*;
use thiserror::Error;

use super::config::{ConfigError, ExperimentConfig};
use super::data::{load_batches, DataError};
use super::metrics::{BatchStats, Metrics};
use crate::baselines::{run_variant, Method};
use crate::privacy::{substream, UniformBudgets};

pub const CSV_HEADER: [&str; 15] = [
    "run_id",
    "algo",
    "ratio",
    "task_value",
    "worker_range",
    "eps_lo",
    "eps_hi",
    "z",
    "seed",
    "matched",
    "u_avg",
    "u_rd",
    "d_avg",
    "d_rd",
    "elapsed_ms",
];

const RUN_STREAM: u64 = 0x0072_756e;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RunError {
    #[error("run {run_id}: {source}")]
    Config { run_id: usize, source: ConfigError },
    #[error("run {run_id}: {source}")]
    Data { run_id: usize, source: DataError },
}

/// One output line: the run's identity, its measures and the private solver's wall time.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub run_id: usize,
    pub algo: Method,
    pub ratio: f64,
    pub task_value: f64,
    pub worker_range: f64,
    pub eps_range: (f64, f64),
    pub z: usize,
    pub seed: u64,
    pub metrics: Metrics,
    pub elapsed_ms: f64,
}

/// Runs `cfg.algo` and its non-private counterpart on every batch of `cfg`.
pub fn run_config(run_id: usize, cfg: &ExperimentConfig) -> Result<MetricsRow, RunError> {
    cfg.validate()
        .map_err(|source| RunError::Config { run_id, source })?;
    let vf = cfg
        .value_functions()
        .map_err(|source| RunError::Config { run_id, source })?;
    let batches = load_batches(cfg).map_err(|source| RunError::Data { run_id, source })?;

    let (mut private, mut reference) = (BatchStats::default(), BatchStats::default());
    let mut elapsed_ms = 0.0;
    for (b, inst) in batches.iter().enumerate() {
        let batch_seed = substream(cfg.seed, &[RUN_STREAM, b as u64]).next_u64();
        let budgets = Arc::new(UniformBudgets {
            seed: batch_seed,
            lo: cfg.eps_range.0,
            hi: cfg.eps_range.1,
            z: cfg.budget_group_size,
        });
        let start = Instant::now();
        let outcome = run_variant(cfg.algo, inst, vf, budgets.clone(), batch_seed);
        elapsed_ms += start.elapsed().as_secs_f64() * 1e3;
        let counterpart = run_variant(
            cfg.algo.nonprivate_counterpart(),
            inst,
            vf,
            budgets,
            batch_seed,
        );
        private += BatchStats::of(&outcome, inst, &vf);
        reference += BatchStats::of(&counterpart, inst, &vf);
    }

    Ok(MetricsRow {
        run_id,
        algo: cfg.algo,
        ratio: cfg.worker_task_ratio,
        task_value: cfg.task_value,
        worker_range: cfg.worker_range,
        eps_range: cfg.eps_range,
        z: cfg.budget_group_size,
        seed: cfg.seed,
        metrics: Metrics::from_stats(&private, &reference),
        elapsed_ms,
    })
}

/// Runs every grid point in parallel; rows come back in grid order. The error
/// of the first failing grid point is returned.
pub fn run_sweep(grid: &[ExperimentConfig]) -> Result<Vec<MetricsRow>, RunError> {
    let results: Vec<_> = grid
        .par_iter()
        .enumerate()
        .map(|(k, cfg)| run_config(k, cfg))
        .collect();
    results.into_iter().collect()
}

/// `x` with 6 significant digits; exponent notation below 1e-4 and from 1e6 up.
pub fn format_real(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    let trim = |s: &str| {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if !(-4..6).contains(&exp) {
        format!("{}e{exp}", trim(mantissa))
    } else {
        trim(&format!("{x:.*}", (5 - exp) as usize))
    }
}

/// Writes the header and `rows`. With `timing` off the elapsed column is left
/// empty so that repeated runs produce identical bytes.
pub fn write_rows<W: Write>(out: W, rows: &[MetricsRow], timing: bool) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    let opt = |x: Option<f64>| x.map(format_real).unwrap_or_default();
    for r in rows {
        w.write_record([
            r.run_id.to_string(),
            r.algo.name().to_string(),
            format_real(r.ratio),
            format_real(r.task_value),
            format_real(r.worker_range),
            format_real(r.eps_range.0),
            format_real(r.eps_range.1),
            r.z.to_string(),
            r.seed.to_string(),
            r.metrics.matched.to_string(),
            opt(r.metrics.u_avg),
            opt(r.metrics.u_rd),
            opt(r.metrics.d_avg),
            opt(r.metrics.d_rd),
            if timing {
                format_real(r.elapsed_ms)
            } else {
                String::new()
            },
        ])?;
    }
    w.flush()
}
