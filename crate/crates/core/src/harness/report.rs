//! Deterministic CSV metric tables and gnuplot series.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::metrics::{metrics_from_counts, ConfusionCounts, WindowMetrics};
use super::timing::TimingReport;
use crate::error::Result;

/// Header comment stating the confusion convention.
pub const CONVENTION_NOTE: &str = "# fp = real event classified noise; fn = noise event classified real";

pub const METRICS_HEADER: &str = "name,tp,fp,tn,fn,accuracy,sr,nr,snr";
pub const SERIES_HEADER: &str = "# start_us end_us accuracy sr nr snr";
pub const TIMING_HEADER: &str = "name,mode,events,repetitions,mean_s,std_s,median_s,total_s";

/// Formats a value for tables: `nan` and `inf` are spelled out.
pub fn fmt_value(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{v:.6}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub name: String,
    pub counts: ConfusionCounts,
}

pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{METRICS_HEADER}");
    for r in rows {
        let m = metrics_from_counts(&r.counts);
        let c = r.counts;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            r.name,
            c.tp,
            c.fp,
            c.tn,
            c.fn_,
            fmt_value(m.accuracy),
            fmt_value(m.signal_ratio),
            fmt_value(m.noise_ratio),
            fmt_value(m.snr)
        );
    }
    s
}

/// Whitespace-separated series; an empty series is header-only.
pub fn series_dat(windows: &[WindowMetrics]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{SERIES_HEADER}");
    for w in windows {
        let m = w.metrics;
        let _ = writeln!(
            s,
            "{} {} {} {} {} {}",
            w.start_us,
            w.end_us,
            fmt_value(m.accuracy),
            fmt_value(m.signal_ratio),
            fmt_value(m.noise_ratio),
            fmt_value(m.snr)
        );
    }
    s
}

pub fn timing_csv(rows: &[(String, TimingReport)]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{TIMING_HEADER}");
    for (name, r) in rows {
        let _ = writeln!(
            s,
            "{name},{},{},{},{:e},{:e},{:e},{:e}",
            r.mode.as_str(),
            r.events,
            r.repetitions,
            r.mean_s,
            r.std_s,
            r.median_s,
            r.total_s
        );
    }
    s
}

/// Writes `<run_id>_metrics.csv` and one `<run_id>_<name>.dat` per series.
pub fn report(out_dir: &Path, run_id: &str, rows: &[MetricsRow], series: &[(String, Vec<WindowMetrics>)]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    let path = out_dir.join(format!("{run_id}_metrics.csv"));
    fs::write(&path, metrics_csv(rows))?;
    written.push(path);
    for (name, windows) in series {
        let path = out_dir.join(format!("{run_id}_{name}.dat"));
        fs::write(&path, series_dat(windows))?;
        written.push(path);
    }
    Ok(written)
}
