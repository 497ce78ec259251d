//! Confusion counts and the derived ratios.
//!
//! Counts follow the convention of the benchmark tables this toolkit
//! reproduces: `fp` is a real event classified as noise and `fn_` a noise
//! event classified as real. So `tp + fp` is the number of real events and
//! `tn + fn_` the number of noise events.

use std::ops::{Add, AddAssign};

use crate::error::{Error, Result};
use crate::event::{Decision, Event, Label};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub struct ConfusionCounts {
    /// Real classified real.
    pub tp: u64,
    /// Real classified noise.
    pub fp: u64,
    /// Noise classified noise.
    pub tn: u64,
    /// Noise classified real.
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn new(tp: u64, fp: u64, tn: u64, fn_: u64) -> Self {
        ConfusionCounts { tp, fp, tn, fn_ }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn real(&self) -> u64 {
        self.tp + self.fp
    }

    pub fn noise(&self) -> u64 {
        self.tn + self.fn_
    }

    pub fn record(&mut self, truth: Label, prediction: Decision) -> Result<()> {
        match (truth, prediction) {
            (Label::Real, Decision::Real) => self.tp += 1,
            (Label::Real, Decision::Noise) => self.fp += 1,
            (Label::Noise, Decision::Noise) => self.tn += 1,
            (Label::Noise, Decision::Real) => self.fn_ += 1,
            (Label::Unknown, _) => return Err(Error::invalid("ground truth label is unknown")),
        }
        Ok(())
    }
}

impl Add for ConfusionCounts {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        ConfusionCounts::new(self.tp + o.tp, self.fp + o.fp, self.tn + o.tn, self.fn_ + o.fn_)
    }
}

impl AddAssign for ConfusionCounts {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

/// Tallies aligned predictions against known truths.
pub fn confusion(predictions: &[Decision], truths: &[Label]) -> Result<ConfusionCounts> {
    if predictions.len() != truths.len() {
        return Err(Error::invalid(format!("{} predictions for {} truths", predictions.len(), truths.len())));
    }
    let mut c = ConfusionCounts::default();
    for (&p, &t) in predictions.iter().zip(truths) {
        c.record(t, p)?;
    }
    Ok(c)
}

/// Undefined ratios are NaN; SNR is infinite when no noise passes but some
/// real activity does.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Metrics {
    pub accuracy: f64,
    /// `tp / (tp + fp)`: share of real events passed.
    pub signal_ratio: f64,
    /// `fn / (tn + fn)`: share of noise events passed.
    pub noise_ratio: f64,
    /// `tp / fn`.
    pub snr: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        f64::NAN
    } else {
        num as f64 / den as f64
    }
}

pub fn metrics_from_counts(c: &ConfusionCounts) -> Metrics {
    let snr = match (c.tp, c.fn_) {
        (0, 0) => f64::NAN,
        (_, 0) => f64::INFINITY,
        (tp, f) => tp as f64 / f as f64,
    };
    Metrics {
        accuracy: ratio(c.tp + c.tn, c.total()),
        signal_ratio: ratio(c.tp, c.real()),
        noise_ratio: ratio(c.fn_, c.noise()),
        snr,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowMetrics {
    pub start_us: i64,
    pub end_us: i64,
    pub counts: ConfusionCounts,
    pub metrics: Metrics,
}

/// Metrics over consecutive half-open windows `[k * interval, (k + 1) * interval)`
/// from `k = 0` through the window of the last event. Events with unknown
/// truth are skipped.
pub fn windowed_eval(events: &[Event], predictions: &[Decision], interval_us: i64) -> Result<Vec<WindowMetrics>> {
    if predictions.len() != events.len() {
        return Err(Error::invalid(format!("{} predictions for {} events", predictions.len(), events.len())));
    }
    if interval_us <= 0 {
        return Err(Error::invalid("evaluation interval must be positive"));
    }
    if events.iter().any(|e| e.t < 0) {
        return Err(Error::invalid("windowed evaluation needs non-negative timestamps"));
    }
    let Some(last) = events.iter().map(|e| e.t).max() else {
        return Ok(Vec::new());
    };
    let mut counts = vec![ConfusionCounts::default(); (last / interval_us) as usize + 1];
    for (e, &p) in events.iter().zip(predictions) {
        if e.label.is_known() {
            counts[(e.t / interval_us) as usize].record(e.label, p)?;
        }
    }
    Ok(counts
        .into_iter()
        .enumerate()
        .map(|(k, c)| WindowMetrics {
            start_us: k as i64 * interval_us,
            end_us: (k as i64 + 1) * interval_us,
            counts: c,
            metrics: metrics_from_counts(&c),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_and_all_pass() {
        let truths: Vec<Label> = (0..20).map(|i| if i < 10 { Label::Real } else { Label::Noise }).collect();
        let perfect: Vec<Decision> = truths.iter().map(|&t| Decision::from_bool(t == Label::Real)).collect();
        assert_eq!(confusion(&perfect, &truths).unwrap(), ConfusionCounts::new(10, 0, 10, 0));
        let all = vec![Decision::Real; 20];
        assert_eq!(confusion(&all, &truths).unwrap(), ConfusionCounts::new(10, 0, 0, 10));
    }

    #[test]
    fn errors() {
        assert!(confusion(&[Decision::Real], &[]).is_err());
        assert!(confusion(&[Decision::Real], &[Label::Unknown]).is_err());
    }

    #[test]
    fn undefined_and_infinite() {
        let m = metrics_from_counts(&ConfusionCounts::new(3, 0, 0, 0));
        assert_eq!(m.signal_ratio, 1.0);
        assert!(m.noise_ratio.is_nan());
        assert_eq!(m.snr, f64::INFINITY);
        assert!(metrics_from_counts(&ConfusionCounts::default()).accuracy.is_nan());
    }
}
