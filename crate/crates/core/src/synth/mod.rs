//! Deterministic synthetic scenes: translating edges, background-activity
//! noise and hot pixels, with ground-truth labels and matching frames.

mod scene;

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};

pub use scene::{parse_scene, EdgeSpec, Orientation, SceneSpec, PRESETS};

use crate::autodiff::init_rng;
use crate::error::{Error, Result};
use crate::event::{Event, EventStream, Label, Polarity};
use crate::graph::{normalize_graph, GraphBuilder, VolumeSpec};
use crate::kogtl::ApsFrame;
use crate::transformer::TrainingSample;

/// Process that generated an event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventSource {
    /// Index into [`SceneSpec::edges`].
    Edge(usize),
    Background,
    HotPixel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Manifest {
    pub real: usize,
    pub noise: usize,
    pub hot: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedDataset {
    pub stream: EventStream,
    /// Generating process of each event, aligned with the stream.
    pub sources: Vec<EventSource>,
    pub frames: Vec<ApsFrame>,
    pub manifest: Manifest,
}

const US: f64 = 1e6;

fn poisson<R: Rng>(rng: &mut R, mean: f64) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).map(|p| p.sample(rng) as usize).unwrap_or(0)
}

/// `lambda * W * H * duration + hot_count * lambda_hot * duration`.
pub fn expected_noise_count(scene: &SceneSpec) -> f64 {
    let secs = scene.duration_us as f64 / US;
    scene.noise_rate * scene.geometry.pixel_count() as f64 * secs + scene.hot_pixels as f64 * scene.hot_rate * secs
}

/// Renders the intensity image at time `t`.
pub fn render_frame(scene: &SceneSpec, t: i64) -> ApsFrame {
    let (w, h) = (scene.geometry.width, scene.geometry.height);
    let mut data = vec![0u8; (w * h) as usize];
    for y in 0..h {
        for x in 0..w {
            let mut v = scene.base_intensity;
            for edge in &scene.edges {
                let coord = match edge.orientation {
                    Orientation::Vertical => x,
                    Orientation::Horizontal => y,
                };
                if (coord as f64) < edge.position_at(t) {
                    v += match edge.polarity {
                        Polarity::On => scene.contrast,
                        Polarity::Off => -scene.contrast,
                    };
                }
            }
            data[(y * w + x) as usize] = v.round().clamp(0.0, 255.0) as u8;
        }
    }
    ApsFrame::new(w, h, data, t).expect("frame size matches geometry")
}

/// Generates events and frames for `scene`. Identical specs give identical
/// output.
pub fn generate(scene: &SceneSpec) -> Result<GeneratedDataset> {
    scene.validate()?;
    let mut rng = init_rng(scene.seed);
    let duration = scene.duration_us;
    let (w, h) = (scene.geometry.width, scene.geometry.height);
    let jitter = (scene.jitter_us > 0.0)
        .then(|| Normal::new(0.0, scene.jitter_us))
        .transpose()
        .map_err(|e| Error::Config(format!("jitter: {e}")))?;
    let mut events: Vec<(Event, EventSource)> = Vec::new();

    for (k, edge) in scene.edges.iter().enumerate() {
        if edge.velocity == 0.0 {
            continue;
        }
        let (span, across) = match edge.orientation {
            Orientation::Vertical => (w, h),
            Orientation::Horizontal => (h, w),
        };
        // Moving forward covers pixels (the edge's polarity); moving back
        // uncovers them (the opposite polarity).
        let p = if edge.velocity > 0.0 { edge.polarity } else { edge.polarity.flipped() };
        for c in 0..span {
            let tc = (c as f64 - edge.position) / edge.velocity * US;
            if !(0.0..duration as f64).contains(&tc) {
                continue;
            }
            for a in 0..across {
                let mut t = tc;
                if let Some(n) = &jitter {
                    t += n.sample(&mut rng);
                }
                let t = (t.floor() as i64).clamp(0, duration - 1);
                let (x, y) = match edge.orientation {
                    Orientation::Vertical => (c, a),
                    Orientation::Horizontal => (a, c),
                };
                events.push((Event::new(t, x as u16, y as u16, p).with_label(Label::Real), EventSource::Edge(k)));
            }
        }
    }

    let pixels = scene.geometry.pixel_count();
    let count = poisson(&mut rng, scene.noise_rate * pixels as f64 * duration as f64 / US);
    for _ in 0..count {
        let i = rng.gen_range(0..pixels);
        let t = rng.gen_range(0..duration);
        let p = if rng.gen::<bool>() { Polarity::On } else { Polarity::Off };
        let (x, y) = ((i as u32 % w) as u16, (i as u32 / w) as u16);
        events.push((Event::new(t, x, y, p).with_label(Label::Noise), EventSource::Background));
    }

    if scene.hot_pixels > pixels {
        return Err(Error::Config(format!("{} hot pixels on a {pixels}-pixel sensor", scene.hot_pixels)));
    }
    for i in sample(&mut rng, pixels, scene.hot_pixels).into_iter() {
        let (x, y) = ((i as u32 % w) as u16, (i as u32 / w) as u16);
        let n = poisson(&mut rng, scene.hot_rate * duration as f64 / US);
        for _ in 0..n {
            let t = rng.gen_range(0..duration);
            events.push((Event::new(t, x, y, Polarity::On).with_label(Label::Noise), EventSource::HotPixel));
        }
    }

    events.sort_by_key(|(e, _)| e.t);
    let mut manifest = Manifest::default();
    for (_, s) in &events {
        match s {
            EventSource::Edge(_) => manifest.real += 1,
            EventSource::Background => manifest.noise += 1,
            EventSource::HotPixel => manifest.hot += 1,
        }
    }
    let (events, sources): (Vec<Event>, Vec<EventSource>) = events.into_iter().unzip();
    let frames = (0..)
        .map(|k| k * scene.frame_period_us)
        .take_while(|&t| t < duration)
        .map(|t| render_frame(scene, t))
        .collect();
    Ok(GeneratedDataset { stream: EventStream::new(events, scene.geometry)?, sources, frames, manifest })
}

/// Balanced graphs drawn from a labeled stream.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub samples: Vec<TrainingSample>,
    /// Stream index of each sample.
    pub indices: Vec<usize>,
}

/// Samples `per_class` real and `per_class` noise events without
/// replacement (seeded) and builds each one's graph from the full stream
/// prefix. Samples come back in stream order.
pub fn build_training_set(stream: &EventStream, spec: VolumeSpec, per_class: usize, seed: u64) -> Result<TrainingSet> {
    let events = stream.events();
    let real: Vec<usize> = (0..events.len()).filter(|&i| events[i].label == Label::Real).collect();
    let noise: Vec<usize> = (0..events.len()).filter(|&i| events[i].label == Label::Noise).collect();
    for (class, pool) in [("real", &real), ("noise", &noise)] {
        if pool.len() < per_class {
            return Err(Error::InsufficientSamples { class, wanted: per_class, available: pool.len() });
        }
    }
    let mut rng = init_rng(seed);
    let mut chosen: Vec<usize> = sample(&mut rng, real.len(), per_class).into_iter().map(|i| real[i]).collect();
    chosen.extend(sample(&mut rng, noise.len(), per_class).into_iter().map(|i| noise[i]));
    chosen.sort_unstable();

    let mut builder = GraphBuilder::new(stream.geometry(), spec)?;
    let mut samples = Vec::with_capacity(chosen.len());
    let mut next = chosen.iter().peekable();
    for (i, e) in events.iter().enumerate() {
        if next.peek().is_none() {
            break;
        }
        if next.peek() == Some(&&i) {
            next.next();
            let graph = normalize_graph(&builder.next_graph(e)?, &spec);
            samples.push(TrainingSample { graph, label: usize::from(e.label == Label::Real) });
        } else {
            builder.next_graph(e)?;
        }
    }
    Ok(TrainingSet { samples, indices: chosen })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::SensorGeometry;

    fn quiet_scene() -> SceneSpec {
        SceneSpec {
            geometry: SensorGeometry::new(16, 8).unwrap(),
            duration_us: 100_000,
            edges: vec![EdgeSpec { orientation: Orientation::Vertical, position: 0.5, velocity: 100.0, polarity: Polarity::On }],
            ..SceneSpec::default()
        }
    }

    #[test]
    fn noiseless_scene_is_all_real() {
        let d = generate(&quiet_scene()).unwrap();
        assert_eq!(d.manifest, Manifest { real: 10 * 8, noise: 0, hot: 0 });
        assert!(d.stream.events().iter().all(|e| e.label == Label::Real && e.p == Polarity::On));
    }

    #[test]
    fn expected_count_product() {
        let s = SceneSpec {
            geometry: SensorGeometry::new(10, 10).unwrap(),
            duration_us: 1_000_000,
            noise_rate: 1.0,
            ..SceneSpec::default()
        };
        assert_eq!(expected_noise_count(&s), 100.0);
    }

    #[test]
    fn frames_follow_edge() {
        let s = quiet_scene();
        let f = render_frame(&s, 50_000);
        // Edge at 0.5 + 100 px/s * 0.05 s = 5.5: columns 0..=5 covered.
        assert!(f.get(5, 0) > f.get(6, 0));
        assert_eq!(generate(&s).unwrap().frames.len(), 10);
    }

    #[test]
    fn training_set_is_balanced() {
        let mut s = quiet_scene();
        s.noise_rate = 50.0;
        let d = generate(&s).unwrap();
        let set = build_training_set(&d.stream, VolumeSpec::default(), 5, 1).unwrap();
        assert_eq!(set.samples.len(), 10);
        assert_eq!(set.samples.iter().filter(|x| x.label == 1).count(), 5);
        assert!(set.indices.windows(2).all(|w| w[0] < w[1]));
        assert!(matches!(
            build_training_set(&d.stream, VolumeSpec::default(), 1000, 1),
            Err(Error::InsufficientSamples { class: "real", .. })
        ));
    }
}
