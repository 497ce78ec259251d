//! Event data model, stream container and validation.

mod io;

pub use io::{read_events, write_events, EventFormat};

use crate::error::{Error, Result};

/// Sign of the log-intensity change that triggered an event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Polarity {
    Off,
    On,
}

impl Polarity {
    pub fn as_i8(self) -> i8 {
        match self {
            Polarity::Off => -1,
            Polarity::On => 1,
        }
    }

    pub fn from_i8(v: i8) -> Option<Self> {
        match v {
            -1 => Some(Polarity::Off),
            1 => Some(Polarity::On),
            _ => None,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Polarity::Off => Polarity::On,
            Polarity::On => Polarity::Off,
        }
    }
}

/// Ground-truth class of an event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Label {
    Noise,
    Real,
    #[default]
    Unknown,
}

impl Label {
    /// Encoding shared by both file formats: 0 noise, 1 real, -1 unknown.
    pub fn as_i8(self) -> i8 {
        match self {
            Label::Noise => 0,
            Label::Real => 1,
            Label::Unknown => -1,
        }
    }

    pub fn from_i8(v: i8) -> Option<Self> {
        match v {
            0 => Some(Label::Noise),
            1 => Some(Label::Real),
            -1 => Some(Label::Unknown),
            _ => None,
        }
    }

    pub fn is_known(self) -> bool {
        self != Label::Unknown
    }
}

/// Output of any denoiser for a single event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Decision {
    Noise,
    Real,
}

impl Decision {
    pub fn is_real(self) -> bool {
        self == Decision::Real
    }

    pub fn as_u8(self) -> u8 {
        match self {
            Decision::Noise => 0,
            Decision::Real => 1,
        }
    }

    pub fn from_bool(real: bool) -> Self {
        if real {
            Decision::Real
        } else {
            Decision::Noise
        }
    }
}

/// A single sensor output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Event {
    /// Timestamp in microseconds.
    pub t: i64,
    pub x: u16,
    pub y: u16,
    pub p: Polarity,
    pub label: Label,
}

impl Event {
    pub fn new(t: i64, x: u16, y: u16, p: Polarity) -> Self {
        Event { t, x, y, p, label: Label::Unknown }
    }

    pub fn with_label(mut self, label: Label) -> Self {
        self.label = label;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SensorGeometry {
    pub width: u32,
    pub height: u32,
}

impl SensorGeometry {
    /// DAVIS346 resolution.
    pub const DAVIS346: SensorGeometry = SensorGeometry { width: 346, height: 260 };

    pub fn new(width: u32, height: u32) -> Result<Self> {
        if width == 0 || height == 0 || width > u16::MAX as u32 + 1 || height > u16::MAX as u32 + 1 {
            return Err(Error::invalid(format!("invalid sensor geometry {width}x{height}")));
        }
        Ok(SensorGeometry { width, height })
    }

    pub fn contains(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && x < self.width as i64 && y < self.height as i64
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    /// Row-major pixel index. Caller guarantees the pixel is in bounds.
    #[inline]
    pub fn index(&self, x: u16, y: u16) -> usize {
        y as usize * self.width as usize + x as usize
    }

    pub fn check(&self, e: &Event) -> Result<()> {
        if self.contains(e.x as i64, e.y as i64) {
            Ok(())
        } else {
            Err(Error::OutOfBounds {
                x: e.x as i64,
                y: e.y as i64,
                width: self.width,
                height: self.height,
            })
        }
    }
}

impl Default for SensorGeometry {
    fn default() -> Self {
        SensorGeometry::DAVIS346
    }
}

/// Events in arrival order. Timestamps never decrease.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventStream {
    events: Vec<Event>,
    geometry: SensorGeometry,
}

impl EventStream {
    pub fn new(events: Vec<Event>, geometry: SensorGeometry) -> Result<Self> {
        if let Some(index) = first_regression(&events) {
            return Err(Error::TimestampRegression {
                index,
                t: events[index].t,
                previous: events[index - 1].t,
            });
        }
        Ok(EventStream { events, geometry })
    }

    pub fn empty(geometry: SensorGeometry) -> Self {
        EventStream { events: Vec::new(), geometry }
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn into_events(self) -> Vec<Event> {
        self.events
    }

    pub fn geometry(&self) -> SensorGeometry {
        self.geometry
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Events with `t0 <= t < t1`, in original order.
    pub fn slice_by_time(&self, t0: i64, t1: i64) -> Result<EventStream> {
        let range = self.time_range(t0, t1)?;
        Ok(EventStream { events: self.events[range].to_vec(), geometry: self.geometry })
    }

    /// Index range of the events with `t0 <= t < t1`.
    pub fn time_range(&self, t0: i64, t1: i64) -> Result<std::ops::Range<usize>> {
        if t0 > t1 {
            return Err(Error::invalid(format!("slice start {t0} exceeds end {t1}")));
        }
        let start = self.events.partition_point(|e| e.t < t0);
        let end = self.events.partition_point(|e| e.t < t1);
        Ok(start..end.max(start))
    }

    /// Replaces every label. `labels` must be aligned with the events.
    pub fn with_labels(mut self, labels: &[Label]) -> Result<Self> {
        if labels.len() != self.events.len() {
            return Err(Error::invalid(format!(
                "{} labels for {} events",
                labels.len(),
                self.events.len()
            )));
        }
        for (e, &l) in self.events.iter_mut().zip(labels) {
            e.label = l;
        }
        Ok(self)
    }
}

fn first_regression(events: &[Event]) -> Option<usize> {
    events.windows(2).position(|w| w[1].t < w[0].t).map(|i| i + 1)
}

/// Invariant violations found by [`validate_stream`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub out_of_bounds: usize,
    /// Events timestamped earlier than some event that arrived before them.
    pub regressions: usize,
    pub first_out_of_bounds: Option<usize>,
    pub first_regression: Option<usize>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.out_of_bounds == 0 && self.regressions == 0
    }
}

/// Counts bounds and ordering violations. Violations are data, not errors.
pub fn validate_stream(events: &[Event], geometry: SensorGeometry) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut latest = i64::MIN;
    for (i, e) in events.iter().enumerate() {
        if !geometry.contains(e.x as i64, e.y as i64) {
            report.out_of_bounds += 1;
            report.first_out_of_bounds.get_or_insert(i);
        }
        if e.t < latest {
            report.regressions += 1;
            report.first_regression.get_or_insert(i);
        }
        latest = latest.max(e.t);
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(t: i64, x: u16, y: u16) -> Event {
        Event::new(t, x, y, Polarity::On)
    }

    #[test]
    fn regression_rejected_at_construction() {
        let err = EventStream::new(vec![ev(10, 0, 0), ev(5, 0, 0)], SensorGeometry::DAVIS346)
            .unwrap_err();
        assert!(matches!(err, Error::TimestampRegression { index: 1, .. }));
    }

    #[test]
    fn equal_timestamps_allowed() {
        assert!(EventStream::new(vec![ev(3, 0, 0), ev(3, 1, 1)], SensorGeometry::DAVIS346).is_ok());
    }

    #[test]
    fn validation_counts() {
        let g = SensorGeometry::new(10, 10).unwrap();
        assert!(validate_stream(&[ev(0, 1, 1), ev(4, 9, 9)], g).is_clean());
        let r = validate_stream(&[ev(0, 10, 1)], g);
        assert_eq!(r.out_of_bounds, 1);
        assert_eq!(r.first_out_of_bounds, Some(0));
    }

    #[test]
    fn slicing() {
        let g = SensorGeometry::DAVIS346;
        let s = EventStream::new((0..10).map(|i| ev(i * 10, 0, 0)).collect(), g).unwrap();
        assert_eq!(s.slice_by_time(0, i64::MAX).unwrap(), s);
        assert!(s.slice_by_time(30, 30).unwrap().is_empty());
        let mid = s.slice_by_time(15, 45).unwrap();
        assert_eq!(mid.events().iter().map(|e| e.t).collect::<Vec<_>>(), vec![20, 30, 40]);
        assert!(s.slice_by_time(5, 4).is_err());
    }
}
