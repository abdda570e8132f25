//! Seeded experiments: instance generation and CSV ingest, paired private and
//! non-private runs, metrics and CSV output.

mod config;
mod data;
mod metrics;
mod sweep;

pub use config::{parse_config, ConfigError, Distribution, ExperimentConfig, SpreadMode};
pub use data::{generate_normal, generate_uniform, ingest_csv, load_batches, DataError};
pub use metrics::{compute_metrics, BatchStats, Metrics};
pub use sweep::{format_real, run_config, run_sweep, write_rows, MetricsRow, RunError, CSV_HEADER};
