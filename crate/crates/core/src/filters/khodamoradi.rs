//! Row/column filter: the most recent event of every row and column.

use super::{in_window, Denoiser, NEVER};
use crate::event::{Decision, Event, Polarity, SensorGeometry};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Cell {
    t: i64,
    p: Polarity,
}

const EMPTY: Cell = Cell { t: NEVER, p: Polarity::On };

#[derive(Debug, Clone)]
pub struct KhodamoradiFilter {
    geometry: SensorGeometry,
    window_us: i64,
    match_polarity: bool,
    columns: Vec<Cell>,
    rows: Vec<Cell>,
}

impl KhodamoradiFilter {
    pub fn new(geometry: SensorGeometry, window_us: i64, match_polarity: bool) -> Self {
        KhodamoradiFilter {
            geometry,
            window_us,
            match_polarity,
            columns: vec![EMPTY; geometry.width as usize],
            rows: vec![EMPTY; geometry.height as usize],
        }
    }

    /// Timestamp held by column cell `x`, if any.
    pub fn column(&self, x: u16) -> Option<i64> {
        Some(self.columns[x as usize].t).filter(|&t| t != NEVER)
    }

    /// Timestamp held by row cell `y`, if any.
    pub fn row(&self, y: u16) -> Option<i64> {
        Some(self.rows[y as usize].t).filter(|&t| t != NEVER)
    }

    fn supported(&self, cells: &[Cell], center: usize, e: &Event) -> bool {
        let lo = center.saturating_sub(1);
        let hi = (center + 1).min(cells.len() - 1);
        cells[lo..=hi]
            .iter()
            .any(|c| in_window(c.t, e.t, self.window_us) && (!self.match_polarity || c.p == e.p))
    }
}

impl Denoiser for KhodamoradiFilter {
    fn name(&self) -> &str {
        "khodamoradi"
    }

    fn reset(&mut self) {
        self.columns.fill(EMPTY);
        self.rows.fill(EMPTY);
    }

    fn step(&mut self, e: &Event) -> Decision {
        if !self.geometry.contains(e.x as i64, e.y as i64) {
            return Decision::Noise;
        }
        let real = self.supported(&self.columns, e.x as usize, e) && self.supported(&self.rows, e.y as usize, e);
        let cell = Cell { t: e.t, p: e.p };
        self.columns[e.x as usize] = cell;
        self.rows[e.y as usize] = cell;
        Decision::from_bool(real)
    }

    /// One (timestamp, polarity) record per column and per row.
    fn memory_cells(&self) -> usize {
        self.columns.len() + self.rows.len()
    }
}
