//! Ground-truth labeling against a known object.
//!
//! Events are grouped by the intensity frame that precedes them, each frame's
//! Canny edges are fitted to its accumulated events with translation-only
//! ICP, and every event is labeled real when its corrected pixel lies within
//! a `(2B+1) x (2B+1)` box around some edge pixel.

mod canny;
mod icp;
mod pgm;

use std::ops::Range;

pub use canny::{canny_edges, gaussian_blur, sobel};
pub use icp::{icp_align, DistanceField};
pub use pgm::{decode_pgm, encode_pgm, read_frame, read_frames, write_frame};

use crate::error::{Error, Result};
use crate::event::{Event, EventStream, Label, SensorGeometry};
use crate::par;

/// Grayscale intensity frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApsFrame {
    pub width: u32,
    pub height: u32,
    pub data: Vec<u8>,
    pub t: i64,
    /// Opaque tag linking frames of repeated trials.
    pub pose: String,
}

impl ApsFrame {
    pub fn new(width: u32, height: u32, data: Vec<u8>, t: i64) -> Result<Self> {
        if data.len() != width as usize * height as usize {
            return Err(Error::invalid(format!("frame data has {} pixels, expected {width}x{height}", data.len())));
        }
        Ok(ApsFrame { width, height, data, t, pose: String::new() })
    }

    pub fn geometry(&self) -> SensorGeometry {
        SensorGeometry { width: self.width, height: self.height }
    }

    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.data[(y * self.width + x) as usize]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeMap {
    pub width: u32,
    pub height: u32,
    pub mask: Vec<bool>,
    /// Timestamp of the source frame.
    pub t: i64,
}

impl EdgeMap {
    pub fn is_edge(&self, x: u32, y: u32) -> bool {
        self.mask[(y * self.width + x) as usize]
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn pixels(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        let w = self.width;
        self.mask.iter().enumerate().filter(|(_, &m)| m).map(move |(i, _)| (i as u32 % w, i as u32 / w))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcpResult {
    /// Translation applied to the event points.
    pub dx: f64,
    pub dy: f64,
    /// Root-mean-square distance from the moved points to their edges.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Residual before the first step and after every accepted step.
    pub residual_history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelingConfig {
    /// Edge proximity window `B` in pixels.
    pub proximity: u32,
    pub canny_sigma: f64,
    /// Hysteresis thresholds as fractions of the largest gradient magnitude.
    pub canny_low: f64,
    pub canny_high: f64,
    pub icp_max_iterations: usize,
    pub icp_tolerance: f64,
    /// Correspondences longer than this are left out of the fit.
    pub icp_max_distance: f64,
    /// Subtracted from event timestamps before synchronizing.
    pub start_offset_us: i64,
}

impl Default for LabelingConfig {
    fn default() -> Self {
        LabelingConfig {
            proximity: 2,
            canny_sigma: 1.4,
            canny_low: 0.1,
            canny_high: 0.3,
            icp_max_iterations: 50,
            icp_tolerance: 0.01,
            icp_max_distance: 8.0,
            start_offset_us: 0,
        }
    }
}

/// Events grouped by the frame interval that contains them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Synchronized {
    /// Events before the first frame.
    pub pre_frame: Range<usize>,
    /// `(frame index, event range)`; frame `i` owns `[t_i, t_{i+1})`.
    pub batches: Vec<(usize, Range<usize>)>,
}

/// Splits `events` (sorted, offset already applied by the caller or via
/// `start_offset_us`) into half-open frame intervals.
pub fn synchronize(events: &[Event], frames: &[ApsFrame], start_offset_us: i64) -> Result<Synchronized> {
    if frames.windows(2).any(|w| w[1].t < w[0].t) {
        return Err(Error::invalid("frames must be sorted by timestamp"));
    }
    let first = |t: i64| events.partition_point(|e| e.t - start_offset_us < t);
    let Some(f0) = frames.first() else {
        return Ok(Synchronized { pre_frame: 0..events.len(), batches: Vec::new() });
    };
    let mut batches = Vec::with_capacity(frames.len());
    for (i, f) in frames.iter().enumerate() {
        let end = frames.get(i + 1).map_or(events.len(), |n| first(n.t));
        batches.push((i, first(f.t)..end));
    }
    Ok(Synchronized { pre_frame: 0..first(f0.t), batches })
}

/// Labels each event real iff its shifted pixel is within Chebyshev
/// distance `proximity` of an edge pixel.
pub fn label_events(batch: &mut [Event], edges: &EdgeMap, shift: (f64, f64), proximity: u32) {
    let (w, h) = (edges.width as usize, edges.height as usize);
    // Summed-area table with a zero border row/column.
    let mut sat = vec![0u32; (w + 1) * (h + 1)];
    for y in 0..h {
        let mut row = 0;
        for x in 0..w {
            row += edges.mask[y * w + x] as u32;
            sat[(y + 1) * (w + 1) + x + 1] = sat[y * (w + 1) + x + 1] + row;
        }
    }
    let b = proximity as i64;
    for e in batch {
        let sx = (e.x as f64 + shift.0).round() as i64;
        let sy = (e.y as f64 + shift.1).round() as i64;
        let (x0, x1) = ((sx - b).max(0), (sx + b).min(w as i64 - 1));
        let (y0, y1) = ((sy - b).max(0), (sy + b).min(h as i64 - 1));
        let real = x0 <= x1 && y0 <= y1 && {
            let at = |x: i64, y: i64| sat[y as usize * (w + 1) + x as usize];
            at(x1 + 1, y1 + 1) + at(x0, y0) - at(x0, y1 + 1) - at(x1 + 1, y0) > 0
        };
        e.label = if real { Label::Real } else { Label::Noise };
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchReport {
    pub frame_index: usize,
    pub frame_t: i64,
    pub events: usize,
    pub edge_pixels: usize,
    /// `None` when the batch had no events or the frame had no edges.
    pub icp: Option<IcpResult>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelingOutput {
    pub stream: EventStream,
    pub pre_frame_events: usize,
    pub batches: Vec<BatchReport>,
}

/// Synchronize, detect edges, fit and label.
///
/// Events before the first frame stay unlabeled. Events of a frame without
/// edges are labeled noise.
pub fn kogtl_pipeline(stream: &EventStream, frames: &[ApsFrame], cfg: &LabelingConfig) -> Result<LabelingOutput> {
    if frames.is_empty() {
        return Err(Error::invalid("labeling needs at least one frame"));
    }
    let geometry = stream.geometry();
    if let Some(f) = frames.iter().find(|f| f.geometry() != geometry) {
        return Err(Error::invalid(format!(
            "frame at t={} is {}x{}, events are {}x{}",
            f.t, f.width, f.height, geometry.width, geometry.height
        )));
    }
    let sync = synchronize(stream.events(), frames, cfg.start_offset_us)?;
    let events = stream.events();
    let results = par::map(&sync.batches, |(i, range)| -> Result<(Vec<Event>, BatchReport)> {
        let frame = &frames[*i];
        let mut batch = events[range.clone()].to_vec();
        let edges = canny_edges(frame, cfg);
        let edge_pixels = edges.count();
        let mut report = BatchReport { frame_index: *i, frame_t: frame.t, events: batch.len(), edge_pixels, icp: None };
        if edge_pixels == 0 {
            batch.iter_mut().for_each(|e| e.label = Label::Noise);
        } else if !batch.is_empty() {
            let points: Vec<(f64, f64)> = batch.iter().map(|e| (e.x as f64, e.y as f64)).collect();
            let field = DistanceField::new(&edges);
            let fit = icp::icp_with_field(&points, &field, cfg)?;
            label_events(&mut batch, &edges, (fit.dx, fit.dy), cfg.proximity);
            report.icp = Some(fit);
        }
        Ok((batch, report))
    });
    let mut out = Vec::with_capacity(events.len());
    out.extend(events[sync.pre_frame.clone()].iter().map(|e| e.with_label(Label::Unknown)));
    let mut reports = Vec::with_capacity(results.len());
    for r in results {
        let (batch, report) = r?;
        out.extend(batch);
        reports.push(report);
    }
    Ok(LabelingOutput {
        stream: EventStream::new(out, geometry)?,
        pre_frame_events: sync.pre_frame.len(),
        batches: reports,
    })
}
