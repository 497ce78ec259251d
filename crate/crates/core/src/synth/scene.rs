//! Scene description and its line-based `key = value` file format.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::event::{Polarity, SensorGeometry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Orientation {
    /// Edge parallel to the y axis, moving along x.
    Vertical,
    /// Edge parallel to the x axis, moving along y.
    Horizontal,
}

/// A straight edge translating at constant speed. Pixels whose coordinate
/// is below the edge position are covered.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeSpec {
    pub orientation: Orientation,
    /// Position at t = 0, in pixels.
    pub position: f64,
    /// Pixels per second.
    pub velocity: f64,
    /// Polarity of events emitted while the edge covers new pixels.
    pub polarity: Polarity,
}

impl EdgeSpec {
    pub fn position_at(&self, t_us: i64) -> f64 {
        self.position + self.velocity * t_us as f64 / 1e6
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub geometry: SensorGeometry,
    pub duration_us: i64,
    pub edges: Vec<EdgeSpec>,
    /// Standard deviation of real-event timestamp jitter.
    pub jitter_us: f64,
    /// Background-activity rate per pixel, events per second.
    pub noise_rate: f64,
    pub hot_pixels: usize,
    /// Firing rate of each hot pixel, events per second.
    pub hot_rate: f64,
    pub frame_period_us: i64,
    pub base_intensity: f64,
    pub contrast: f64,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            geometry: SensorGeometry { width: 64, height: 64 },
            duration_us: 1_000_000,
            edges: Vec::new(),
            jitter_us: 0.0,
            noise_rate: 0.0,
            hot_pixels: 0,
            hot_rate: 0.0,
            frame_period_us: 10_000,
            base_intensity: 128.0,
            contrast: 60.0,
            seed: 0,
        }
    }
}

/// Built-in illumination presets.
pub const PRESETS: [&str; 2] = ["light.750lux", "light.5lux"];

fn desk_edges() -> Vec<EdgeSpec> {
    use Orientation::*;
    vec![
        EdgeSpec { orientation: Vertical, position: 4.0, velocity: 150.0, polarity: Polarity::On },
        EdgeSpec { orientation: Vertical, position: 60.0, velocity: -130.0, polarity: Polarity::Off },
        EdgeSpec { orientation: Horizontal, position: 6.0, velocity: 170.0, polarity: Polarity::On },
    ]
}

impl SceneSpec {
    /// Desk-scale scene under a named illumination. Dimmer light means more
    /// background activity and looser real-event timing.
    pub fn preset(name: &str, seed: u64) -> Result<Self> {
        let (noise_rate, jitter_us, hot_pixels) = match name {
            "light.750lux" => (1.0, 300.0, 2),
            "light.5lux" => (4.0, 1_500.0, 6),
            _ => return Err(Error::Config(format!("unknown scene preset `{name}`"))),
        };
        Ok(SceneSpec {
            edges: desk_edges(),
            noise_rate,
            jitter_us,
            hot_pixels,
            hot_rate: 20.0,
            seed,
            ..SceneSpec::default()
        })
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.duration_us <= 0 {
            return fail(format!("duration must be positive, got {}", self.duration_us));
        }
        if self.frame_period_us <= 0 {
            return fail(format!("frame period must be positive, got {}", self.frame_period_us));
        }
        for (name, v) in [("noise_rate", self.noise_rate), ("hot_rate", self.hot_rate), ("jitter_us", self.jitter_us)] {
            if !(v >= 0.0 && v.is_finite()) {
                return fail(format!("{name} must be finite and non-negative, got {v}"));
            }
        }
        if self.edges.iter().any(|e| !e.position.is_finite() || !e.velocity.is_finite()) {
            return fail("edge position and velocity must be finite".into());
        }
        Ok(())
    }

    /// Serializes to the format read by [`parse_scene`].
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "width = {}", self.geometry.width);
        let _ = writeln!(s, "height = {}", self.geometry.height);
        let _ = writeln!(s, "duration_us = {}", self.duration_us);
        for e in &self.edges {
            let o = match e.orientation {
                Orientation::Vertical => "vertical",
                Orientation::Horizontal => "horizontal",
            };
            let p = match e.polarity {
                Polarity::On => "on",
                Polarity::Off => "off",
            };
            let _ = writeln!(s, "edge = {o}, {}, {}, {p}", e.position, e.velocity);
        }
        let _ = writeln!(s, "jitter_us = {}", self.jitter_us);
        let _ = writeln!(s, "noise_rate = {}", self.noise_rate);
        let _ = writeln!(s, "hot_pixels = {}", self.hot_pixels);
        let _ = writeln!(s, "hot_rate = {}", self.hot_rate);
        let _ = writeln!(s, "frame_period_us = {}", self.frame_period_us);
        let _ = writeln!(s, "base_intensity = {}", self.base_intensity);
        let _ = writeln!(s, "contrast = {}", self.contrast);
        let _ = writeln!(s, "seed = {}", self.seed);
        s
    }
}

fn parse_edge(v: &str) -> Result<EdgeSpec> {
    let parts: Vec<&str> = v.split(',').map(str::trim).collect();
    let bad = || Error::Config(format!("edge must be `orientation, position, velocity, polarity`, got `{v}`"));
    let [o, pos, vel, p] = parts.as_slice() else {
        return Err(bad());
    };
    let orientation = match *o {
        "vertical" => Orientation::Vertical,
        "horizontal" => Orientation::Horizontal,
        _ => return Err(bad()),
    };
    let polarity = match *p {
        "on" | "1" | "+1" => Polarity::On,
        "off" | "-1" => Polarity::Off,
        _ => return Err(bad()),
    };
    Ok(EdgeSpec {
        orientation,
        position: pos.parse().map_err(|_| bad())?,
        velocity: vel.parse().map_err(|_| bad())?,
        polarity,
    })
}

/// Parses a scene file. `preset = <name>` (first) loads a preset that later
/// keys override; each `edge = ...` line adds an edge, and the first one
/// replaces the preset's edges.
pub fn parse_scene(text: &str) -> Result<SceneSpec> {
    let mut scene = SceneSpec::default();
    let mut own_edges = false;
    let (mut width, mut height) = (scene.geometry.width, scene.geometry.height);
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
        let num = |v: &str| -> Result<f64> {
            v.parse::<f64>().map_err(|_| Error::Config(format!("line {}: `{k}` expects a number, got `{v}`", n + 1)))
        };
        let int = |v: &str| -> Result<i64> {
            v.parse::<i64>().map_err(|_| Error::Config(format!("line {}: `{k}` expects an integer, got `{v}`", n + 1)))
        };
        match k {
            "preset" => {
                let seed = scene.seed;
                scene = SceneSpec::preset(v, seed)?;
                width = scene.geometry.width;
                height = scene.geometry.height;
            }
            "width" => width = int(v)? as u32,
            "height" => height = int(v)? as u32,
            "duration_us" => scene.duration_us = int(v)?,
            "edge" => {
                if !own_edges {
                    scene.edges.clear();
                    own_edges = true;
                }
                scene.edges.push(parse_edge(v)?);
            }
            "jitter_us" => scene.jitter_us = num(v)?,
            "noise_rate" => scene.noise_rate = num(v)?,
            "hot_pixels" => scene.hot_pixels = int(v)? as usize,
            "hot_rate" => scene.hot_rate = num(v)?,
            "frame_period_us" => scene.frame_period_us = int(v)?,
            "base_intensity" => scene.base_intensity = num(v)?,
            "contrast" => scene.contrast = num(v)?,
            "seed" => scene.seed = int(v)? as u64,
            _ => return Err(Error::Config(format!("line {}: unknown scene key `{k}`", n + 1))),
        }
    }
    scene.geometry = SensorGeometry::new(width, height)?;
    scene.validate()?;
    Ok(scene)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        for name in PRESETS {
            let s = SceneSpec::preset(name, 9).unwrap();
            assert_eq!(parse_scene(&s.to_text()).unwrap(), s);
        }
    }

    #[test]
    fn preset_with_overrides() {
        let s = parse_scene("preset = light.5lux\nseed = 4\nnoise_rate = 0  # silence\n").unwrap();
        assert_eq!(s.noise_rate, 0.0);
        assert_eq!(s.seed, 4);
        assert_eq!(s.edges.len(), 3);
    }

    #[test]
    fn rejects_unknown_key_and_bad_edge() {
        assert!(parse_scene("colour = red").is_err());
        assert!(parse_scene("edge = diagonal, 1, 2, on").is_err());
        assert!(parse_scene("duration_us = 0").is_err());
    }
}
