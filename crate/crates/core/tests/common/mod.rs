//! Oracles shared by the integration tests. Everything here is written from
//! the textual definitions with plain loops, independent of the library's
//! tape, inference engine and recency store.
#![allow(dead_code)]

use evdenoise::autodiff::ParamStore;
use evdenoise::event::{Event, Label, Polarity};
use evdenoise::eventconv::Reference;
use evdenoise::graph::{Node, VolumeSpec};
use evdenoise::transformer::DenoiseModel;

pub fn ev(t: i64, x: u16, y: u16) -> Event {
    Event::new(t, x, y, Polarity::On)
}

pub fn labeled(t: i64, x: u16, y: u16, label: Label) -> Event {
    ev(t, x, y).with_label(label)
}

/// Neighbors of `events[i]` by definition: every earlier event in the window
/// and the preceding `T`, latest first (later arrival first on ties), capped.
pub fn brute_neighbors(events: &[Event], i: usize, spec: &VolumeSpec) -> Vec<Node> {
    let e = &events[i];
    let l = spec.half_extent as i64;
    let mut hits: Vec<(i64, usize)> = (0..i)
        .filter(|&j| {
            let o = &events[j];
            (o.x as i64 - e.x as i64).abs() <= l
                && (o.y as i64 - e.y as i64).abs() <= l
                && o.t <= e.t
                && e.t - o.t <= spec.depth_us
        })
        .map(|j| (events[j].t, j))
        .collect();
    hits.sort_by(|a, b| b.cmp(a));
    hits.truncate(spec.max_neighbors);
    hits.into_iter().map(|(_, j)| Node { x: events[j].x, y: events[j].y, t: events[j].t }).collect()
}

pub type Matrix = Vec<Vec<f64>>;

fn param(store: &ParamStore, name: &str) -> Matrix {
    let id = store.find(name).unwrap_or_else(|| panic!("missing parameter {name}"));
    let t = store.value(id);
    let (rows, cols) = (t.shape()[0], t.shape()[1]);
    (0..rows).map(|r| t.data()[r * cols..(r + 1) * cols].to_vec()).collect()
}

fn row(store: &ParamStore, name: &str) -> Vec<f64> {
    param(store, name).remove(0)
}

pub fn matmul(a: &Matrix, b: &Matrix) -> Matrix {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    let mut out = vec![vec![0.0; m]; n];
    for i in 0..n {
        for j in 0..m {
            for p in 0..k {
                out[i][j] += a[i][p] * b[p][j];
            }
        }
    }
    out
}

fn add(a: &Matrix, b: &Matrix) -> Matrix {
    a.iter().zip(b).map(|(x, y)| x.iter().zip(y).map(|(u, v)| u + v).collect()).collect()
}

pub fn softmax_row(v: &[f64]) -> Vec<f64> {
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = v.iter().map(|x| (x - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|x| x / s).collect()
}

/// Three-loop `softmax(Q K^T / sqrt(d)) V`.
pub fn attention(q: &Matrix, k: &Matrix, v: &Matrix) -> Matrix {
    let d = q[0].len() as f64;
    let mut out = vec![vec![0.0; v[0].len()]; q.len()];
    for i in 0..q.len() {
        let scores: Vec<f64> =
            (0..k.len()).map(|j| (0..q[i].len()).map(|c| q[i][c] * k[j][c]).sum::<f64>() / d.sqrt()).collect();
        let w = softmax_row(&scores);
        for j in 0..k.len() {
            for c in 0..v[0].len() {
                out[i][c] += w[j] * v[j][c];
            }
        }
    }
    out
}

fn layer_norm(x: &Matrix, gain: &[f64], bias: &[f64]) -> Matrix {
    x.iter()
        .map(|r| {
            let n = r.len() as f64;
            let mean = r.iter().sum::<f64>() / n;
            let var = r.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            r.iter().enumerate().map(|(c, v)| (v - mean) / (var + 1e-5).sqrt() * gain[c] + bias[c]).collect()
        })
        .collect()
}

fn mha(store: &ParamStore, prefix: &str, heads: usize, x: &Matrix) -> Matrix {
    let mut cat: Matrix = vec![Vec::new(); x.len()];
    for h in 0..heads {
        let q = matmul(x, &param(store, &format!("{prefix}.h{h}.q")));
        let k = matmul(x, &param(store, &format!("{prefix}.h{h}.k")));
        let v = matmul(x, &param(store, &format!("{prefix}.h{h}.v")));
        for (c, z) in cat.iter_mut().zip(attention(&q, &k, &v)) {
            c.extend(z);
        }
    }
    matmul(&cat, &param(store, &format!("{prefix}.o")))
}

fn ffn(store: &ParamStore, prefix: &str, x: &Matrix) -> Matrix {
    let b1 = row(store, &format!("{prefix}.b1"));
    let b2 = row(store, &format!("{prefix}.b2"));
    let mut hidden = matmul(x, &param(store, &format!("{prefix}.w1")));
    for r in &mut hidden {
        for (v, b) in r.iter_mut().zip(&b1) {
            *v = (*v + b).max(0.0);
        }
    }
    let mut out = matmul(&hidden, &param(store, &format!("{prefix}.w2")));
    for r in &mut out {
        for (v, b) in r.iter_mut().zip(&b2) {
            *v += b;
        }
    }
    out
}

fn norm(store: &ParamStore, prefix: &str, x: &Matrix) -> Matrix {
    layer_norm(x, &row(store, &format!("{prefix}.g")), &row(store, &format!("{prefix}.b")))
}

pub fn encoder_layer(store: &ParamStore, i: usize, heads: usize, x: &Matrix) -> Matrix {
    let p = format!("enc{i}");
    let y1 = add(x, &mha(store, &format!("{p}.mha"), heads, &norm(store, &format!("{p}.ln1"), x)));
    add(&y1, &ffn(store, &format!("{p}.ffn"), &norm(store, &format!("{p}.ln2"), &y1)))
}

/// Both attention blocks read the normed layer input; residuals chain.
pub fn decoder_layer(store: &ParamStore, i: usize, heads: usize, z: &Matrix) -> Matrix {
    let p = format!("dec{i}");
    let z1 = add(z, &mha(store, &format!("{p}.mha1"), heads, &norm(store, &format!("{p}.ln1"), z)));
    let z2 = add(&z1, &mha(store, &format!("{p}.mha2"), heads, &norm(store, &format!("{p}.ln2"), z)));
    add(&z2, &ffn(store, &format!("{p}.ffn"), &norm(store, &format!("{p}.ln3"), &z2)))
}

/// Per-node Q1..Q7 with two-pass statistics.
pub fn quantities(nodes: &[[f64; 3]], reference: Reference) -> Vec<[f64; 7]> {
    let m = nodes.len() as f64;
    let mean: Vec<f64> = (0..3).map(|d| nodes.iter().map(|n| n[d]).sum::<f64>() / m).collect();
    let std: Vec<f64> =
        (0..3).map(|d| (nodes.iter().map(|n| (n[d] - mean[d]).powi(2)).sum::<f64>() / m).sqrt()).collect();
    let origin = match reference {
        Reference::Mean => [mean[0], mean[1], mean[2]],
        Reference::Interest => nodes[0],
    };
    nodes
        .iter()
        .map(|n| {
            let d = [n[0] - origin[0], n[1] - origin[1], n[2] - origin[2]];
            [d[0], d[1], d[2], std[0], std[1], std[2], (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()]
        })
        .collect()
}

/// Signature laid out quantity-major, `h[slot * width + c]`.
pub fn signature(model: &DenoiseModel, nodes: &[[f64; 3]]) -> Vec<f64> {
    let q = quantities(nodes, model.message.reference);
    let mut h = Vec::new();
    for &k in model.message.quantities.indices() {
        let w = row(&model.store, &format!("conv.q{}.w", k + 1));
        let b = row(&model.store, &format!("conv.q{}.b", k + 1));
        for c in 0..w.len() {
            h.push(q.iter().map(|qj| 1.0 / (1.0 + (-(w[c] * qj[k] + b[c])).exp())).sum());
        }
    }
    h
}

pub fn logits_from_signature(model: &DenoiseModel, h: &[f64]) -> [f64; 2] {
    let cfg = &model.config;
    let heads = cfg.heads;
    let mut x: Matrix = h.chunks(cfg.dim).map(<[f64]>::to_vec).collect();
    for i in 0..cfg.encoder_layers {
        x = encoder_layer(&model.store, i, heads, &x);
    }
    for i in 0..cfg.decoder_layers {
        x = decoder_layer(&model.store, i, heads, &x);
    }
    let flat: Vec<f64> = x.concat();
    let w = param(&model.store, "head.w");
    let b = row(&model.store, "head.b");
    let mut out = [b[0], b[1]];
    for (i, v) in flat.iter().enumerate() {
        out[0] += v * w[i][0];
        out[1] += v * w[i][1];
    }
    out
}

pub fn logits(model: &DenoiseModel, nodes: &[[f64; 3]]) -> [f64; 2] {
    logits_from_signature(model, &signature(model, nodes))
}
