//! Timestamp-map filters: background activity and nearest neighbor.

use super::{in_window, Denoiser, NEVER};
use crate::event::{Decision, Event, SensorGeometry};

/// Most recent timestamp per pixel.
#[derive(Debug, Clone)]
pub struct TimestampMap {
    geometry: SensorGeometry,
    cells: Vec<i64>,
}

impl TimestampMap {
    pub fn new(geometry: SensorGeometry) -> Self {
        TimestampMap { geometry, cells: vec![NEVER; geometry.pixel_count()] }
    }

    pub fn clear(&mut self) {
        self.cells.fill(NEVER);
    }

    pub fn cells(&self) -> usize {
        self.cells.len()
    }

    pub fn get(&self, x: u16, y: u16) -> i64 {
        self.cells[self.geometry.index(x, y)]
    }

    /// Records `t` at `(x, y)`; entries never decrease.
    pub fn record(&mut self, x: u16, y: u16, t: i64) {
        let i = self.geometry.index(x, y);
        self.cells[i] = self.cells[i].max(t);
    }

    /// Pixels of the `(2 half + 1)^2` window around `(x, y)` whose timestamp
    /// lies in `[t - window, t)`, stopping once `limit` is reached.
    pub fn count_recent(&self, x: u16, y: u16, half: u16, t: i64, window: i64, limit: usize) -> usize {
        let (w, h) = (self.geometry.width as i64, self.geometry.height as i64);
        let (x, y, r) = (x as i64, y as i64, half as i64);
        let mut n = 0;
        for yy in (y - r).max(0)..=(y + r).min(h - 1) {
            let row = &self.cells[(yy * w) as usize..((yy + 1) * w) as usize];
            for &prev in &row[(x - r).max(0) as usize..=(x + r).min(w - 1) as usize] {
                if in_window(prev, t, window) {
                    n += 1;
                    if n >= limit {
                        return n;
                    }
                }
            }
        }
        n
    }
}

/// Passes an event when at least `min_support` pixels of its window fired
/// within the preceding `window_us`.
#[derive(Debug, Clone)]
pub struct BackgroundActivityFilter {
    map: TimestampMap,
    half_extent: u16,
    window_us: i64,
    min_support: usize,
}

impl BackgroundActivityFilter {
    pub fn new(geometry: SensorGeometry, half_extent: u16, window_us: i64, min_support: usize) -> Self {
        BackgroundActivityFilter { map: TimestampMap::new(geometry), half_extent, window_us, min_support }
    }
}

impl Denoiser for BackgroundActivityFilter {
    fn name(&self) -> &str {
        "ba"
    }

    fn reset(&mut self) {
        self.map.clear();
    }

    fn step(&mut self, e: &Event) -> Decision {
        if !self.map.geometry.contains(e.x as i64, e.y as i64) {
            return Decision::Noise;
        }
        let n = self.map.count_recent(e.x, e.y, self.half_extent, e.t, self.window_us, self.min_support);
        self.map.record(e.x, e.y, e.t);
        Decision::from_bool(n >= self.min_support)
    }

    fn memory_cells(&self) -> usize {
        self.map.cells()
    }
}

/// Passes an event with any 3x3 neighbor within the preceding `window_us`.
#[derive(Debug, Clone)]
pub struct NearestNeighborFilter {
    inner: BackgroundActivityFilter,
}

impl NearestNeighborFilter {
    pub fn new(geometry: SensorGeometry, window_us: i64) -> Self {
        NearestNeighborFilter { inner: BackgroundActivityFilter::new(geometry, 1, window_us, 1) }
    }
}

impl Denoiser for NearestNeighborFilter {
    fn name(&self) -> &str {
        "nnb"
    }

    fn reset(&mut self) {
        self.inner.reset();
    }

    fn step(&mut self, e: &Event) -> Decision {
        self.inner.step(e)
    }

    fn memory_cells(&self) -> usize {
        self.inner.memory_cells()
    }
}
