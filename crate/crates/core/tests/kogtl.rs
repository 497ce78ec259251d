mod common;

use proptest::prelude::*;

use evdenoise::event::{Event, EventStream, Label, Polarity, SensorGeometry};
use evdenoise::kogtl::{
    canny_edges, icp_align, kogtl_pipeline, label_events, read_frames, synchronize, write_frame, ApsFrame, EdgeMap,
    LabelingConfig,
};
use evdenoise::synth::{generate, EdgeSpec, Orientation, SceneSpec};

use common::ev;

fn frame(t: i64) -> ApsFrame {
    ApsFrame::new(8, 8, vec![0; 64], t).unwrap()
}

fn edges_from(w: u32, h: u32, pixels: &[(i64, i64)]) -> EdgeMap {
    let mut mask = vec![false; (w * h) as usize];
    for &(x, y) in pixels {
        mask[(y * w as i64 + x) as usize] = true;
    }
    EdgeMap { width: w, height: h, mask, t: 0 }
}

fn scene(noise_rate: f64, jitter_us: f64, seed: u64) -> SceneSpec {
    SceneSpec {
        duration_us: 200_000,
        edges: vec![
            EdgeSpec { orientation: Orientation::Vertical, position: 8.0, velocity: 150.0, polarity: Polarity::On },
            EdgeSpec { orientation: Orientation::Horizontal, position: 10.0, velocity: 120.0, polarity: Polarity::Off },
        ],
        jitter_us,
        noise_rate,
        seed,
        ..SceneSpec::default()
    }
}

#[test]
fn synchronize_half_open_batches() {
    let events: Vec<Event> = [0, 9_999, 10_000].iter().map(|&t| ev(t, 0, 0)).collect();
    let s = synchronize(&events, &[frame(0), frame(10_000)], 0).unwrap();
    assert_eq!(s.batches, vec![(0, 0..2), (1, 2..3)]);
}

#[test]
fn events_before_first_frame_are_set_aside() {
    let events: Vec<Event> = [1, 2, 3].iter().map(|&t| ev(t, 0, 0)).collect();
    let s = synchronize(&events, &[frame(10)], 0).unwrap();
    assert_eq!(s.pre_frame, 0..3);
    assert_eq!(s.batches, vec![(0, 3..3)]);
    // The offset moves events at 1 and 2 before the frame at -5.
    let shifted = synchronize(&events, &[frame(-5)], 8).unwrap();
    assert_eq!(shifted.pre_frame, 0..2);
}

#[test]
fn synchronize_matches_time_slices() {
    let d = generate(&scene(3.0, 200.0, 1)).unwrap();
    let s = synchronize(d.stream.events(), &d.frames, 0).unwrap();
    assert_eq!(s.batches.len(), d.frames.len());
    for (k, (i, range)) in s.batches.iter().enumerate() {
        let t0 = d.frames[*i].t;
        let t1 = d.frames.get(i + 1).map_or(i64::MAX, |f| f.t);
        assert_eq!(k, *i);
        assert_eq!(*range, d.stream.time_range(t0, t1).unwrap());
    }
}

#[test]
fn unsorted_frames_and_empty_frame_list_fail() {
    assert!(synchronize(&[], &[frame(5), frame(1)], 0).is_err());
    let stream = EventStream::new(vec![ev(0, 1, 1)], SensorGeometry::new(8, 8).unwrap()).unwrap();
    assert!(kogtl_pipeline(&stream, &[], &LabelingConfig::default()).is_err());
    let wrong_size = ApsFrame::new(4, 4, vec![0; 16], 0).unwrap();
    assert!(kogtl_pipeline(&stream, &[wrong_size], &LabelingConfig::default()).is_err());
}

#[test]
fn constant_image_has_no_edges() {
    let f = ApsFrame::new(32, 20, vec![117; 640], 0).unwrap();
    assert_eq!(canny_edges(&f, &LabelingConfig::default()).count(), 0);
}

#[test]
fn vertical_step_gives_a_one_pixel_line() {
    let (w, h) = (32u32, 20u32);
    let data: Vec<u8> = (0..w * h).map(|i| if i % w < 15 { 40 } else { 200 }).collect();
    let e = canny_edges(&ApsFrame::new(w, h, data, 0).unwrap(), &LabelingConfig::default());
    for y in 0..h {
        let cols: Vec<u32> = (0..w).filter(|&x| e.is_edge(x, y)).collect();
        assert_eq!(cols.len(), 1, "row {y}: {cols:?}");
        assert!(cols[0] == 14 || cols[0] == 15);
    }
}

#[test]
fn bar_scene_edges_hug_the_true_boundary() {
    let s = SceneSpec {
        edges: vec![EdgeSpec { orientation: Orientation::Vertical, position: 30.4, velocity: 0.0, polarity: Polarity::On }],
        ..SceneSpec::default()
    };
    let f = evdenoise::synth::render_frame(&s, 0);
    let e = canny_edges(&f, &LabelingConfig::default());
    let rows_hit = (0..f.height)
        .filter(|&y| (0..f.width).any(|x| e.is_edge(x, y) && (x as f64 + 0.5 - 30.4).abs() <= 1.0 + 0.5))
        .count();
    assert!(rows_hit as f64 >= 0.95 * f.height as f64, "{rows_hit}/{}", f.height);
    assert!(e.pixels().all(|(x, _)| (x as f64 - 30.4).abs() <= 2.0));
}

/// Rectangle outline with a disc outline inside it.
fn outline() -> Vec<(i64, i64)> {
    let mut px = Vec::new();
    for i in 6..34 {
        px.extend([(i, 6), (i, 29)]);
    }
    for i in 6..30 {
        px.extend([(6, i), (33, i)]);
    }
    for k in 0..120 {
        let a = k as f64 / 120.0 * std::f64::consts::TAU;
        px.push(((20.0 + 6.0 * a.cos()).round() as i64, (17.0 + 6.0 * a.sin()).round() as i64));
    }
    px.sort_unstable();
    px.dedup();
    px
}

#[test]
fn icp_points_on_edges_stay_put() {
    let px = outline();
    let pts: Vec<(f64, f64)> = px.iter().map(|&(x, y)| (x as f64, y as f64)).collect();
    let r = icp_align(&pts, &edges_from(40, 36, &px), &LabelingConfig::default()).unwrap();
    assert_eq!((r.dx, r.dy, r.residual, r.iterations), (0.0, 0.0, 0.0, 1));
}

#[test]
fn icp_recovers_a_known_shift() {
    let px = outline();
    let pts: Vec<(f64, f64)> = px.iter().map(|&(x, y)| ((x + 3) as f64, (y - 2) as f64)).collect();
    let r = icp_align(&pts, &edges_from(40, 36, &px), &LabelingConfig::default()).unwrap();
    assert!((r.dx + 3.0).abs() < 0.1 && (r.dy - 2.0).abs() < 0.1, "{r:?}");
    assert!(r.residual < 1e-9);
    assert!(r.residual_history.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn icp_rejects_empty_inputs() {
    let cfg = LabelingConfig::default();
    assert!(icp_align(&[], &edges_from(4, 4, &[(1, 1)]), &cfg).is_err());
    assert!(icp_align(&[(1.0, 1.0)], &edges_from(4, 4, &[]), &cfg).is_err());
}

#[test]
fn proximity_boundary_is_chebyshev() {
    let edges = edges_from(20, 20, &[(10, 10)]);
    let mut batch = vec![ev(0, 10, 10), ev(0, 12, 12), ev(0, 13, 10), ev(0, 12, 8), ev(0, 7, 10)];
    label_events(&mut batch, &edges, (0.0, 0.0), 2);
    let got: Vec<Label> = batch.iter().map(|e| e.label).collect();
    assert_eq!(got, vec![Label::Real, Label::Real, Label::Noise, Label::Real, Label::Noise]);
    // The correction is applied before the test.
    let mut moved = vec![ev(0, 13, 10)];
    label_events(&mut moved, &edges, (-1.0, 0.0), 2);
    assert_eq!(moved[0].label, Label::Real);
}

#[test]
fn noise_free_scene_is_almost_all_real() {
    let d = generate(&scene(0.0, 300.0, 2)).unwrap();
    let out = kogtl_pipeline(&d.stream, &d.frames, &LabelingConfig::default()).unwrap();
    let labeled: Vec<&Event> = out.stream.events().iter().filter(|e| e.label.is_known()).collect();
    let real = labeled.iter().filter(|e| e.label == Label::Real).count();
    assert!(real as f64 >= 0.99 * labeled.len() as f64, "{real}/{}", labeled.len());
}

#[test]
fn noise_fraction_is_recovered() {
    let d = generate(&scene(0.5, 300.0, 3)).unwrap();
    let truth = d.manifest.noise as f64 / d.stream.len() as f64;
    let out = kogtl_pipeline(&d.stream, &d.frames, &LabelingConfig::default()).unwrap();
    let known: Vec<&Event> = out.stream.events().iter().filter(|e| e.label.is_known()).collect();
    let noise = known.iter().filter(|e| e.label == Label::Noise).count() as f64 / known.len() as f64;
    assert!((noise - truth).abs() <= 0.03, "labeled {noise:.4} vs true {truth:.4}");
    let agree = out.stream.events().iter().zip(d.stream.events()).filter(|(a, b)| a.label == b.label).count();
    assert!(agree as f64 >= 0.95 * d.stream.len() as f64);
}

#[test]
fn labeling_is_replayable() {
    let d = generate(&scene(2.0, 500.0, 4)).unwrap();
    let cfg = LabelingConfig::default();
    assert_eq!(kogtl_pipeline(&d.stream, &d.frames, &cfg).unwrap(), kogtl_pipeline(&d.stream, &d.frames, &cfg).unwrap());
}

#[test]
fn wider_window_never_demotes_real_events() {
    let d = generate(&scene(4.0, 800.0, 5)).unwrap();
    let mut previous: Option<Vec<Label>> = None;
    for b in 0..5 {
        let cfg = LabelingConfig { proximity: b, ..LabelingConfig::default() };
        let labels: Vec<Label> = kogtl_pipeline(&d.stream, &d.frames, &cfg).unwrap().stream.events().iter().map(|e| e.label).collect();
        if let Some(prev) = &previous {
            for (a, b) in prev.iter().zip(&labels) {
                assert!(!(*a == Label::Real && *b == Label::Noise));
            }
        }
        previous = Some(labels);
    }
}

#[test]
fn frames_round_trip_through_pgm_files() {
    let d = generate(&SceneSpec { duration_us: 30_000, ..scene(0.0, 0.0, 6) }).unwrap();
    let dir = tempfile::tempdir().unwrap();
    for f in &d.frames {
        write_frame(f, dir.path()).unwrap();
    }
    let back = read_frames(dir.path()).unwrap();
    assert_eq!(back.len(), d.frames.len());
    for (a, b) in back.iter().zip(&d.frames) {
        assert_eq!((a.t, a.width, a.height, &a.data), (b.t, b.width, b.height, &b.data));
    }
}

proptest! {
    #[test]
    fn labels_grow_with_the_window(
        edge_px in prop::collection::vec((0i64..24, 0i64..16), 1..10),
        events in prop::collection::vec((0u16..24, 0u16..16), 1..40),
        shift in (-2.0f64..2.0, -2.0f64..2.0),
    ) {
        let edges = edges_from(24, 16, &edge_px);
        let batch: Vec<Event> = events.iter().map(|&(x, y)| ev(0, x, y)).collect();
        let mut narrow = batch.clone();
        let mut wide = batch;
        label_events(&mut narrow, &edges, shift, 1);
        label_events(&mut wide, &edges, shift, 2);
        for (a, b) in narrow.iter().zip(&wide) {
            prop_assert!(!(a.label == Label::Real && b.label == Label::Noise));
        }
        // Brute-force Chebyshev check of the wide window.
        for e in &wide {
            let sx = (e.x as f64 + shift.0).round() as i64;
            let sy = (e.y as f64 + shift.1).round() as i64;
            let near = edge_px.iter().any(|&(x, y)| (x - sx).abs() <= 2 && (y - sy).abs() <= 2);
            prop_assert_eq!(e.label == Label::Real, near);
        }
    }
}
