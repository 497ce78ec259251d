mod common;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

use evdenoise::eventconv::{
    compute_means, compute_quantities, eventconv_forward, EventConvParams, MessageConfig, QuantitySet, Reference,
};
use evdenoise::graph::{NormalizedGraph, VolumeSpec};
use evdenoise::transformer::{DenoiseModel, TransformerConfig};

fn model(quantities: QuantitySet, reference: Reference, seed: u64) -> DenoiseModel {
    let message = MessageConfig { quantities, reference, ..MessageConfig::default() };
    DenoiseModel::new(VolumeSpec::default(), message, TransformerConfig::default(), seed).unwrap()
}

fn signature(m: &DenoiseModel, nodes: &[[f64; 3]]) -> Vec<f64> {
    let g = NormalizedGraph { nodes: nodes.to_vec() };
    let q = compute_quantities(&g, compute_means(&g), m.message.reference);
    let params = EventConvParams::resolve(&m.store, &m.message).unwrap();
    eventconv_forward(&q, &m.message.quantities, &params, &m.store).unwrap()
}

fn random_nodes(rng: &mut Xoshiro256PlusPlus, n: usize) -> Vec<[f64; 3]> {
    let mut v = vec![[0.5, 0.5, 0.95]];
    v.extend((1..n).map(|_| [rng.gen_range(0.05..0.95), rng.gen_range(0.05..0.95), rng.gen_range(0.05..0.95)]));
    v
}

#[test]
fn quantities_match_naive_definition() {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(1);
    for reference in [Reference::Mean, Reference::Interest] {
        for n in 1..=11 {
            let nodes = random_nodes(&mut rng, n);
            let g = NormalizedGraph { nodes: nodes.clone() };
            let got = compute_quantities(&g, compute_means(&g), reference);
            let want = common::quantities(&nodes, reference);
            for (a, b) in got.iter().zip(&want) {
                for k in 0..7 {
                    assert!((a[k] - b[k]).abs() < 1e-12);
                }
            }
        }
    }
}

#[test]
fn signature_matches_naive_sum_of_sigmoids() {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(2);
    for (i, set) in [QuantitySet::seven(), QuantitySet::three(), QuantitySet::four(), QuantitySet::six()].into_iter().enumerate() {
        let m = model(set, Reference::Mean, 10 + i as u64);
        for n in 1..=11 {
            let nodes = random_nodes(&mut rng, n);
            let got = signature(&m, &nodes);
            let want = common::signature(&m, &nodes);
            assert_eq!(got.len(), want.len());
            for (a, b) in got.iter().zip(&want) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn zero_weights_give_half_the_node_count() {
    let mut m = model(QuantitySet::seven(), Reference::Mean, 3);
    for p in m.store.iter_mut() {
        if p.name.starts_with("conv.") {
            p.value.data_mut().fill(0.0);
        }
    }
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(4);
    for n in 1..=11 {
        let h = signature(&m, &random_nodes(&mut rng, n));
        assert_eq!(h.len(), 28);
        assert!(h.iter().all(|&v| v == n as f64 / 2.0));
    }
}

#[test]
fn three_quantity_signature_ignores_other_weights() {
    let mut m = model(QuantitySet::three(), Reference::Mean, 5);
    let nodes = random_nodes(&mut Xoshiro256PlusPlus::seed_from_u64(6), 8);
    let before = signature(&m, &nodes);
    assert_eq!(before.len(), 12);
    assert!(m.store.find("conv.q4.w").is_none());

    // A seven-quantity store shares q1..q3 names; perturbing q4..q7 must not
    // move the three-quantity signature computed from the same store.
    let mut seven = model(QuantitySet::seven(), Reference::Mean, 5);
    for p in seven.store.iter_mut() {
        if ["conv.q1.", "conv.q2.", "conv.q3."].iter().any(|s| p.name.starts_with(s)) {
            let src = m.store.value(m.store.find(&p.name).unwrap()).clone();
            p.value = src;
        }
    }
    let cfg3 = MessageConfig { quantities: QuantitySet::three(), ..MessageConfig::default() };
    let params = EventConvParams::resolve(&seven.store, &cfg3).unwrap();
    let g = NormalizedGraph { nodes: nodes.clone() };
    let q = compute_quantities(&g, compute_means(&g), Reference::Mean);
    let a = eventconv_forward(&q, &cfg3.quantities, &params, &seven.store).unwrap();
    for p in seven.store.iter_mut() {
        if ["conv.q4.", "conv.q5.", "conv.q6.", "conv.q7."].iter().any(|s| p.name.starts_with(s)) {
            p.value.data_mut().iter_mut().for_each(|v| *v = *v * -3.0 + 7.0);
        }
    }
    let b = eventconv_forward(&q, &cfg3.quantities, &params, &seven.store).unwrap();
    assert_eq!(a, b);
    assert_eq!(a, before);
    m.store.iter_mut().for_each(|p| p.value.data_mut().fill(0.0));
}

#[test]
fn selector_must_match_parameters() {
    let m = model(QuantitySet::seven(), Reference::Mean, 7);
    let params = EventConvParams::resolve(&m.store, &m.message).unwrap();
    let g = NormalizedGraph { nodes: vec![[0.5, 0.5, 0.95]] };
    let q = compute_quantities(&g, compute_means(&g), Reference::Mean);
    assert!(eventconv_forward(&q, &QuantitySet::three(), &params, &m.store).is_err());
    assert!(EventConvParams::resolve(&model(QuantitySet::three(), Reference::Mean, 8).store, &m.message).is_err());
}

#[test]
fn variant_names_round_trip() {
    for s in ["3q", "4q", "6q", "7q", "q1+q7", "q2"] {
        assert_eq!(s.parse::<QuantitySet>().unwrap().to_string(), s);
    }
    assert_eq!("q7+q1+q1".parse::<QuantitySet>().unwrap().indices(), &[0, 6]);
    for bad in ["8q", "q0", "q8", "", "x1"] {
        assert!(bad.parse::<QuantitySet>().is_err(), "{bad}");
    }
    assert_eq!("interest".parse::<Reference>().unwrap(), Reference::Interest);
    assert!("centroid".parse::<Reference>().is_err());
}

#[test]
fn single_node_graph_has_zero_spread() {
    let g = NormalizedGraph { nodes: vec![[0.5, 0.5, 0.95]] };
    let q = compute_quantities(&g, compute_means(&g), Reference::Mean);
    assert_eq!(q, vec![[0.0; 7]]);
}

proptest! {
    #[test]
    fn signature_is_permutation_invariant(seed in 0u64..1_000, n in 2usize..11) {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
        let m = model(QuantitySet::seven(), Reference::Mean, seed);
        let nodes = random_nodes(&mut rng, n);
        let mut shuffled = nodes.clone();
        shuffled.shuffle(&mut rng);
        let (a, b) = (signature(&m, &nodes), signature(&m, &shuffled));
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn neighbor_permutation_keeps_interest_reference_signature(seed in 0u64..1_000, n in 3usize..11) {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
        let m = model(QuantitySet::seven(), Reference::Interest, seed);
        let nodes = random_nodes(&mut rng, n);
        let mut shuffled = nodes.clone();
        shuffled[1..].shuffle(&mut rng);
        let (a, b) = (signature(&m, &nodes), signature(&m, &shuffled));
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn signature_entries_lie_between_zero_and_node_count(seed in 0u64..1_000, n in 1usize..12) {
        let m = model(QuantitySet::seven(), Reference::Mean, seed);
        let nodes = random_nodes(&mut Xoshiro256PlusPlus::seed_from_u64(seed + 1), n);
        for v in signature(&m, &nodes) {
            prop_assert!(v > 0.0 && v < n as f64);
        }
    }
}
