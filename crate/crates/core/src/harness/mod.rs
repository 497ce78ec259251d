//! Evaluation: confusion metrics, windowed series, timing, memory accounting,
//! report files and run configuration.

mod config;
mod memory;
mod metrics;
mod report;
mod timing;

pub use config::RunConfig;
pub use memory::{memory_estimate, MemoryEstimate, CNN_PATCH_ELEMENTS};
pub use metrics::{confusion, metrics_from_counts, windowed_eval, ConfusionCounts, Metrics, WindowMetrics};
pub use report::{
    fmt_value, metrics_csv, report, series_dat, timing_csv, MetricsRow, CONVENTION_NOTE, METRICS_HEADER,
    SERIES_HEADER, TIMING_HEADER,
};
pub use timing::{compare_modes, time_filter, TimingMode, TimingOptions, TimingReport};
