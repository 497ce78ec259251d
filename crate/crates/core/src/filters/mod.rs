//! Conventional spatiotemporal denoisers.
//!
//! Every filter is an online state machine: [`Denoiser::step`] decides one
//! event from the state built by earlier events, then records it. Window
//! lookups only see strictly earlier timestamps, `t_prev` in `[t - T, t)`.

mod khodamoradi;
mod liu;
mod neighborhood;
mod yang;

use std::fmt;
use std::str::FromStr;

pub use khodamoradi::KhodamoradiFilter;
pub use liu::LiuFilter;
pub use neighborhood::{BackgroundActivityFilter, NearestNeighborFilter, TimestampMap};
pub use yang::YangFilter;

use crate::error::{Error, Result};
use crate::event::{Decision, Event, EventStream, SensorGeometry};

/// Online event classifier.
pub trait Denoiser {
    fn name(&self) -> &str;

    /// Forgets every event seen so far.
    fn reset(&mut self);

    /// Classifies `e` and records it.
    fn step(&mut self, e: &Event) -> Decision;

    /// Classifies a run of events; same decisions as folding [`Denoiser::step`].
    fn run_batch(&mut self, events: &[Event]) -> Vec<Decision> {
        events.iter().map(|e| self.step(e)).collect()
    }

    /// Memory cells held by the filter state.
    fn memory_cells(&self) -> usize {
        0
    }
}

/// Resets `filter` and folds it over the whole stream.
pub fn run_filter<D: Denoiser + ?Sized>(stream: &EventStream, filter: &mut D) -> Vec<Decision> {
    filter.reset();
    stream.events().iter().map(|e| filter.step(e)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FilterKind {
    BackgroundActivity,
    NearestNeighbor,
    Liu1,
    Liu2,
    Khodamoradi,
    Yang,
}

impl FilterKind {
    pub const ALL: [FilterKind; 6] = [
        FilterKind::BackgroundActivity,
        FilterKind::NearestNeighbor,
        FilterKind::Liu1,
        FilterKind::Liu2,
        FilterKind::Khodamoradi,
        FilterKind::Yang,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            FilterKind::BackgroundActivity => "ba",
            FilterKind::NearestNeighbor => "nnb",
            FilterKind::Liu1 => "liu1",
            FilterKind::Liu2 => "liu2",
            FilterKind::Khodamoradi => "khodamoradi",
            FilterKind::Yang => "yang",
        }
    }
}

impl fmt::Display for FilterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FilterKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FilterKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown filter `{s}`")))
    }
}

/// Tunables for every conventional filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FilterConfig {
    pub ba_half_extent: u16,
    pub ba_window_us: i64,
    pub ba_min_support: usize,
    pub nnb_window_us: i64,
    pub liu_window_us: i64,
    pub khodamoradi_window_us: i64,
    pub khodamoradi_match_polarity: bool,
    pub yang_half_extent: u16,
    pub yang_window_us: i64,
    pub yang_density: usize,
    pub yang_hot_window_us: i64,
    pub yang_hot_count: usize,
    pub yang_hot_support: usize,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            ba_half_extent: 1,
            ba_window_us: 1_000,
            ba_min_support: 8,
            nnb_window_us: 1_000,
            liu_window_us: 1_000,
            khodamoradi_window_us: 1_000,
            khodamoradi_match_polarity: false,
            yang_half_extent: 2,
            yang_window_us: 5_000,
            yang_density: 3,
            yang_hot_window_us: 100_000,
            yang_hot_count: 20,
            yang_hot_support: 3,
        }
    }
}

/// Builds a boxed filter of the given kind.
pub fn build_filter(kind: FilterKind, geometry: SensorGeometry, cfg: &FilterConfig) -> Box<dyn Denoiser + Send> {
    match kind {
        FilterKind::BackgroundActivity => Box::new(BackgroundActivityFilter::new(
            geometry,
            cfg.ba_half_extent,
            cfg.ba_window_us,
            cfg.ba_min_support,
        )),
        FilterKind::NearestNeighbor => Box::new(NearestNeighborFilter::new(geometry, cfg.nnb_window_us)),
        FilterKind::Liu1 => Box::new(LiuFilter::new(geometry, 1, cfg.liu_window_us)),
        FilterKind::Liu2 => Box::new(LiuFilter::new(geometry, 2, cfg.liu_window_us)),
        FilterKind::Khodamoradi => Box::new(KhodamoradiFilter::new(
            geometry,
            cfg.khodamoradi_window_us,
            cfg.khodamoradi_match_polarity,
        )),
        FilterKind::Yang => Box::new(YangFilter::new(geometry, cfg)),
    }
}

/// Timestamp sentinel for cells that never saw an event.
pub(crate) const NEVER: i64 = i64::MIN;

/// Whether a stored timestamp lies in `[t - window, t)`.
#[inline]
pub(crate) fn in_window(prev: i64, t: i64, window: i64) -> bool {
    prev != NEVER && prev < t && prev >= t - window
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kind_names_round_trip() {
        for k in FilterKind::ALL {
            assert_eq!(k.as_str().parse::<FilterKind>().unwrap(), k);
        }
        assert!("gnnt".parse::<FilterKind>().is_err());
    }

    #[test]
    fn window_is_half_open() {
        assert!(in_window(0, 1000, 1000));
        assert!(!in_window(1000, 1000, 1000));
        assert!(!in_window(-1, 1000, 1000));
        assert!(!in_window(NEVER, 0, i64::MAX));
    }
}
