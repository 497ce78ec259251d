//! Wall-clock timing of filters in sequential and batch mode.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::event::{Decision, Event};
use crate::filters::Denoiser;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TimingMode {
    Sequential,
    Batch,
}

impl TimingMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            TimingMode::Sequential => "sequential",
            TimingMode::Batch => "batch",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimingOptions {
    /// Events replayed once, unmeasured, before every repetition.
    pub warmup: usize,
    pub repetitions: usize,
}

impl Default for TimingOptions {
    fn default() -> Self {
        TimingOptions { warmup: 100, repetitions: 5 }
    }
}

/// Per-event times in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimingReport {
    pub mode: TimingMode,
    pub mean_s: f64,
    pub std_s: f64,
    /// Median over repetitions of the per-event mean.
    pub median_s: f64,
    pub events: usize,
    /// Wall time of all measured repetitions.
    pub total_s: f64,
    pub repetitions: usize,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Times `filter` over `events` and returns the report with the decisions of
/// the last repetition.
pub fn time_filter(
    filter: &mut dyn Denoiser,
    events: &[Event],
    mode: TimingMode,
    opts: &TimingOptions,
) -> Result<(TimingReport, Vec<Decision>)> {
    if events.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let reps = opts.repetitions.max(1);
    let n = events.len();
    let warm = &events[..opts.warmup.min(n)];
    let mut per_rep = Vec::with_capacity(reps);
    let mut samples = Vec::new();
    let mut total = 0.0;
    let mut decisions = Vec::new();
    for _ in 0..reps {
        filter.reset();
        filter.run_batch(warm);
        filter.reset();
        match mode {
            TimingMode::Sequential => {
                decisions.clear();
                let mut rep_total = 0.0;
                for e in events {
                    let start = Instant::now();
                    let d = filter.step(e);
                    let dt = start.elapsed().as_secs_f64();
                    decisions.push(d);
                    samples.push(dt);
                    rep_total += dt;
                }
                per_rep.push(rep_total / n as f64);
                total += rep_total;
            }
            TimingMode::Batch => {
                let start = Instant::now();
                decisions = filter.run_batch(events);
                let dt = start.elapsed().as_secs_f64();
                per_rep.push(dt / n as f64);
                total += dt;
            }
        }
    }
    let (mean_s, std_s) = match mode {
        TimingMode::Sequential => mean_std(&samples),
        TimingMode::Batch => mean_std(&per_rep),
    };
    let report = TimingReport { mode, mean_s, std_s, median_s: median(per_rep), events: n, total_s: total, repetitions: reps };
    Ok((report, decisions))
}

/// Times both modes and checks they decide identically.
pub fn compare_modes(
    filter: &mut dyn Denoiser,
    events: &[Event],
    opts: &TimingOptions,
) -> Result<(TimingReport, TimingReport)> {
    let (seq, a) = time_filter(filter, events, TimingMode::Sequential, opts)?;
    let (batch, b) = time_filter(filter, events, TimingMode::Batch, opts)?;
    if let Some(index) = a.iter().zip(&b).position(|(x, y)| x != y) {
        return Err(Error::ModeMismatch { index });
    }
    Ok((seq, batch))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
