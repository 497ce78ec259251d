use proptest::prelude::*;

use evdenoise::event::{read_events, validate_stream, write_events, Event, EventFormat, EventStream, Label, Polarity, SensorGeometry};
use evdenoise::synth::{generate, SceneSpec};

fn event_strategy() -> impl Strategy<Value = Vec<Event>> {
    prop::collection::vec(
        (
            prop_oneof![Just(0i64), Just(1i64 << 62), 0i64..(1 << 62)],
            any::<u16>(),
            any::<u16>(),
            any::<bool>(),
            prop_oneof![Just(Label::Real), Just(Label::Noise), Just(Label::Unknown)],
        ),
        0..60,
    )
    .prop_map(|raw| {
        let mut v: Vec<Event> = raw
            .into_iter()
            .map(|(t, x, y, on, l)| Event::new(t, x, y, if on { Polarity::On } else { Polarity::Off }).with_label(l))
            .collect();
        v.sort_by_key(|e| e.t);
        v
    })
}

fn full_geometry() -> SensorGeometry {
    SensorGeometry::new(u16::MAX as u32 + 1, u16::MAX as u32 + 1).unwrap()
}

proptest! {
    #[test]
    fn both_formats_round_trip(events in event_strategy()) {
        let dir = tempfile::tempdir().unwrap();
        let stream = EventStream::new(events, full_geometry()).unwrap();
        for (name, format) in [("e.csv", EventFormat::Csv), ("e.bin", EventFormat::Binary)] {
            let path = dir.path().join(name);
            write_events(&stream, &path, format).unwrap();
            prop_assert_eq!(EventFormat::from_path(&path), format);
            let back = read_events(&path, format, full_geometry()).unwrap();
            prop_assert_eq!(back.events(), stream.events());
        }
    }

    #[test]
    fn slices_concatenate(a in 0i64..300_000, b in 0i64..300_000, c in 0i64..300_000) {
        let mut ts = [a, b, c];
        ts.sort_unstable();
        let d = generate(&SceneSpec { duration_us: 300_000, ..SceneSpec::preset("light.750lux", 1).unwrap() }).unwrap();
        let s = &d.stream;
        let mut joined = s.slice_by_time(ts[0], ts[1]).unwrap().into_events();
        joined.extend(s.slice_by_time(ts[1], ts[2]).unwrap().into_events());
        let whole = s.slice_by_time(ts[0], ts[2]).unwrap();
        prop_assert_eq!(&joined, whole.events());
        let oracle: Vec<Event> = s.events().iter().filter(|e| e.t >= ts[0] && e.t < ts[2]).copied().collect();
        prop_assert_eq!(joined, oracle);
    }

    #[test]
    fn regression_count_matches_pairwise_scan(ts in prop::collection::vec(0i64..1_000, 0..40)) {
        let events: Vec<Event> = ts.iter().map(|&t| Event::new(t, 0, 0, Polarity::On)).collect();
        let report = validate_stream(&events, SensorGeometry::new(1, 1).unwrap());
        let brute = (0..events.len()).filter(|&i| (0..i).any(|j| events[j].t > events[i].t)).count();
        prop_assert_eq!(report.regressions, brute);
        prop_assert_eq!(report.out_of_bounds, 0);
    }
}

#[test]
fn slice_edges() {
    let d = generate(&SceneSpec { duration_us: 50_000, ..SceneSpec::preset("light.5lux", 2).unwrap() }).unwrap();
    let s = &d.stream;
    assert_eq!(s.slice_by_time(0, i64::MAX).unwrap(), *s);
    assert!(s.slice_by_time(7_000, 7_000).unwrap().is_empty());
    assert!(s.slice_by_time(2, 1).is_err());
}

#[test]
fn validation_reports_bounds_and_ordering() {
    let g = SensorGeometry::new(4, 4).unwrap();
    let ok = vec![Event::new(0, 0, 0, Polarity::On), Event::new(0, 3, 3, Polarity::Off)];
    assert!(validate_stream(&ok, g).is_clean());
    let bad = vec![Event::new(5, 4, 0, Polarity::On), Event::new(3, 1, 1, Polarity::On)];
    let r = validate_stream(&bad, g);
    assert_eq!((r.out_of_bounds, r.first_out_of_bounds, r.regressions, r.first_regression), (1, Some(0), 1, Some(1)));
    assert!(EventStream::new(bad, g).is_err());
}

#[test]
fn malformed_files_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let g = SensorGeometry::new(8, 8).unwrap();
    let cases: [(&str, &[u8]); 5] = [
        ("header.csv", b"time,x,y,p\n0,1,1,1\n"),
        ("polarity.csv", b"t_us,x,y,p\n0,1,1,0\n"),
        ("order.csv", b"t_us,x,y,p\n5,1,1,1\n4,1,1,1\n"),
        ("magic.bin", b"EVST0002"),
        ("short.bin", b"EVST0001\x00\x00\x00"),
    ];
    for (name, bytes) in cases {
        let path = dir.path().join(name);
        std::fs::write(&path, bytes).unwrap();
        assert!(read_events(&path, EventFormat::from_path(&path), g).is_err(), "{name}");
    }
    let labeled = dir.path().join("labeled.csv");
    std::fs::write(&labeled, "t_us,x,y,p,label\n0,1,2,-1,1\n3,4,5,1,-1\n").unwrap();
    let s = read_events(&labeled, EventFormat::Csv, g).unwrap();
    assert_eq!(s.events()[0], Event::new(0, 1, 2, Polarity::Off).with_label(Label::Real));
    assert_eq!(s.events()[1].label, Label::Unknown);
}
