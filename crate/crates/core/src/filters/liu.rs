//! Sub-sampled group filter: one timestamp cell per `2^S x 2^S` pixel group.

use super::{in_window, Denoiser, NEVER};
use crate::event::{Decision, Event, SensorGeometry};

#[derive(Debug, Clone)]
pub struct LiuFilter {
    geometry: SensorGeometry,
    shift: u32,
    window_us: i64,
    cols: usize,
    rows: usize,
    cells: Vec<i64>,
}

impl LiuFilter {
    pub fn new(geometry: SensorGeometry, shift: u32, window_us: i64) -> Self {
        let side = 1usize << shift;
        let cols = (geometry.width as usize).div_ceil(side);
        let rows = (geometry.height as usize).div_ceil(side);
        LiuFilter { geometry, shift, window_us, cols, rows, cells: vec![NEVER; cols * rows] }
    }

    pub fn shift(&self) -> u32 {
        self.shift
    }

    /// `(x >> S, y >> S)`.
    pub fn group_of(&self, x: u16, y: u16) -> (usize, usize) {
        ((x >> self.shift) as usize, (y >> self.shift) as usize)
    }
}

impl Denoiser for LiuFilter {
    fn name(&self) -> &str {
        if self.shift == 1 {
            "liu1"
        } else {
            "liu2"
        }
    }

    fn reset(&mut self) {
        self.cells.fill(NEVER);
    }

    fn step(&mut self, e: &Event) -> Decision {
        if !self.geometry.contains(e.x as i64, e.y as i64) {
            return Decision::Noise;
        }
        let (gx, gy) = self.group_of(e.x, e.y);
        let mut real = false;
        'outer: for yy in gy.saturating_sub(1)..=(gy + 1).min(self.rows - 1) {
            for xx in gx.saturating_sub(1)..=(gx + 1).min(self.cols - 1) {
                if in_window(self.cells[yy * self.cols + xx], e.t, self.window_us) {
                    real = true;
                    break 'outer;
                }
            }
        }
        let cell = &mut self.cells[gy * self.cols + gx];
        *cell = (*cell).max(e.t);
        Decision::from_bool(real)
    }

    fn memory_cells(&self) -> usize {
        self.cells.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cell_count_rounds_up() {
        let g = SensorGeometry::new(346, 260).unwrap();
        assert_eq!(LiuFilter::new(g, 1, 1000).memory_cells(), 173 * 130);
        assert_eq!(LiuFilter::new(g, 2, 1000).memory_cells(), 87 * 65);
    }

    #[test]
    fn group_index() {
        let f = LiuFilter::new(SensorGeometry::new(16, 16).unwrap(), 2, 1000);
        assert_eq!(f.group_of(7, 12), (1, 3));
    }
}
