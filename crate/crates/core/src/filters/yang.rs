//! Density-matrix filter with hot-pixel suppression.
//!
//! The density of an event is the number of pixels of its 5x5 region that
//! are active within the preceding window, counting the arriving event's own
//! pixel once. A pixel is hot while it fires at least `hot_count` times in
//! the hot window and its neighbors (excluding itself) contribute fewer than
//! `hot_support` events over the same span.

use std::collections::VecDeque;

use super::{Denoiser, FilterConfig};
use crate::event::{Decision, Event, SensorGeometry};

#[derive(Debug, Clone)]
pub struct YangFilter {
    geometry: SensorGeometry,
    half_extent: u16,
    window_us: i64,
    density: usize,
    hot_window_us: i64,
    hot_count: usize,
    hot_support: usize,
    /// Per-pixel timestamps no older than the longest window.
    history: Vec<VecDeque<i64>>,
    hot: Vec<bool>,
}

/// Entries of `h` (oldest first) in `[t - window, t)`.
fn count_in(h: &VecDeque<i64>, t: i64, window: i64) -> usize {
    h.iter().rev().skip_while(|&&p| p >= t).take_while(|&&p| p >= t - window).count()
}

impl YangFilter {
    pub fn new(geometry: SensorGeometry, cfg: &FilterConfig) -> Self {
        YangFilter {
            geometry,
            half_extent: cfg.yang_half_extent,
            window_us: cfg.yang_window_us,
            density: cfg.yang_density,
            hot_window_us: cfg.yang_hot_window_us,
            hot_count: cfg.yang_hot_count,
            hot_support: cfg.yang_hot_support,
            history: vec![VecDeque::new(); geometry.pixel_count()],
            hot: vec![false; geometry.pixel_count()],
        }
    }

    pub fn is_hot(&self, x: u16, y: u16) -> bool {
        self.hot[self.geometry.index(x, y)]
    }

    fn horizon(&self) -> i64 {
        self.window_us.max(self.hot_window_us)
    }
}

impl Denoiser for YangFilter {
    fn name(&self) -> &str {
        "yang"
    }

    fn reset(&mut self) {
        self.history.iter_mut().for_each(VecDeque::clear);
        self.hot.fill(false);
    }

    fn step(&mut self, e: &Event) -> Decision {
        if !self.geometry.contains(e.x as i64, e.y as i64) {
            return Decision::Noise;
        }
        let (w, h) = (self.geometry.width as i64, self.geometry.height as i64);
        let (x, y, r) = (e.x as i64, e.y as i64, self.half_extent as i64);
        let oldest = e.t - self.horizon();
        let own = self.geometry.index(e.x, e.y);
        let mut active = 1;
        let mut support = 0;
        for yy in (y - r).max(0)..=(y + r).min(h - 1) {
            for xx in (x - r).max(0)..=(x + r).min(w - 1) {
                let i = (yy * w + xx) as usize;
                let hist = &mut self.history[i];
                while hist.front().is_some_and(|&p| p < oldest) {
                    hist.pop_front();
                }
                if i == own {
                    continue;
                }
                if count_in(hist, e.t, self.window_us) > 0 {
                    active += 1;
                }
                support += count_in(hist, e.t, self.hot_window_us);
            }
        }
        let hist = &mut self.history[own];
        hist.push_back(e.t);
        let fires = hist.iter().filter(|&&p| p >= e.t - self.hot_window_us).count();
        self.hot[own] = fires >= self.hot_count && support < self.hot_support;
        Decision::from_bool(active >= self.density && !self.hot[own])
    }

    fn memory_cells(&self) -> usize {
        self.geometry.pixel_count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::Polarity;

    #[test]
    fn count_in_is_half_open() {
        let h: VecDeque<i64> = [0, 5, 10, 10].into_iter().collect();
        assert_eq!(count_in(&h, 10, 10), 2);
        assert_eq!(count_in(&h, 11, 6), 3);
    }

    #[test]
    fn same_pixel_repeats_do_not_build_density() {
        let g = SensorGeometry::new(10, 10).unwrap();
        let mut f = YangFilter::new(g, &FilterConfig::default());
        for t in 0..5 {
            assert_eq!(f.step(&Event::new(t * 100, 4, 4, Polarity::On)), Decision::Noise);
        }
    }
}
