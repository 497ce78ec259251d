//! Tape-free forward pass for high-rate streaming inference.
//!
//! Parameters are copied into contiguous buffers once; every call reuses a
//! [`Workspace`] so classification does not allocate. Operation order mirrors
//! the tape so both routes agree to rounding.

use super::model::{DenoiseModel, FfnParams, LayerNormParams, MhaParams, ModelConfig};
use crate::autodiff::{mean_var, sigmoid, ParamStore, LAYER_NORM_EPS};
use crate::event::Decision;
use crate::eventconv::{means_of, quantities_into, MessageConfig, QUANTITY_COUNT};

/// Attention weights with every head's query, key and value projection
/// packed side by side: `d x 3*heads*d`, columns `[q_0..q_h, k_0..k_h, v_0..v_h]`.
#[derive(Debug, Clone)]
struct Mha {
    heads: usize,
    qkv: Vec<f64>,
    output: Vec<f64>,
}

#[derive(Debug, Clone)]
struct Norm {
    gain: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Debug, Clone)]
struct Ffn {
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: Vec<f64>,
}

#[derive(Debug, Clone)]
struct EncoderLayer {
    norm1: Norm,
    attention: Mha,
    norm2: Norm,
    ffn: Ffn,
}

#[derive(Debug, Clone)]
struct DecoderLayer {
    norm1: Norm,
    attention1: Mha,
    norm2: Norm,
    attention2: Mha,
    norm3: Norm,
    ffn: Ffn,
}

/// Immutable, shareable copy of a model's parameters laid out for inference.
#[derive(Debug, Clone)]
pub struct InferenceEngine {
    config: ModelConfig,
    message: MessageConfig,
    conv_weights: Vec<f64>,
    conv_biases: Vec<f64>,
    encoder: Vec<EncoderLayer>,
    decoder: Vec<DecoderLayer>,
    head_weight: Vec<f64>,
    head_bias: Vec<f64>,
}

/// Scratch buffers for one inference thread.
#[derive(Debug, Clone, Default)]
pub struct Workspace {
    quantities: Vec<[f64; QUANTITY_COUNT]>,
    x: Vec<f64>,
    normed: Vec<f64>,
    residual: Vec<f64>,
    qkv: Vec<f64>,
    scores: Vec<f64>,
    concat: Vec<f64>,
    attn: Vec<f64>,
    hidden: Vec<f64>,
}

fn copy(store: &ParamStore, id: crate::autodiff::ParamId) -> Vec<f64> {
    store.value(id).data().to_vec()
}

fn mha(store: &ParamStore, p: &MhaParams, d: usize) -> Mha {
    let heads = p.query.len();
    let width = 3 * heads * d;
    let mut qkv = vec![0.0; d * width];
    for (block, ids) in [&p.query, &p.key, &p.value].into_iter().enumerate() {
        for (h, &id) in ids.iter().enumerate() {
            let w = store.value(id).data();
            let col = (block * heads + h) * d;
            for r in 0..d {
                qkv[r * width + col..r * width + col + d].copy_from_slice(&w[r * d..(r + 1) * d]);
            }
        }
    }
    Mha { heads, qkv, output: copy(store, p.output) }
}

fn norm(store: &ParamStore, p: &LayerNormParams) -> Norm {
    Norm { gain: copy(store, p.gain), bias: copy(store, p.bias) }
}

fn ffn(store: &ParamStore, p: &FfnParams) -> Ffn {
    Ffn { w1: copy(store, p.w1), b1: copy(store, p.b1), w2: copy(store, p.w2), b2: copy(store, p.b2) }
}

/// `out = a (m x k) * b (k x n)`.
fn matmul(a: &[f64], m: usize, k: usize, b: &[f64], n: usize, out: &mut [f64]) {
    // Literal widths let the default model's loops unroll.
    match (k, n) {
        (4, 4) => matmul_kernel(a, m, 4, b, 4, out),
        (8, 4) => matmul_kernel(a, m, 8, b, 4, out),
        (4, 16) => matmul_kernel(a, m, 4, b, 16, out),
        (16, 4) => matmul_kernel(a, m, 16, b, 4, out),
        (4, 24) => matmul_kernel(a, m, 4, b, 24, out),
        _ => matmul_kernel(a, m, k, b, n, out),
    }
}

#[inline(always)]
fn matmul_kernel(a: &[f64], m: usize, k: usize, b: &[f64], n: usize, out: &mut [f64]) {
    let out = &mut out[..m * n];
    out.iter_mut().for_each(|v| *v = 0.0);
    for (a_row, o_row) in a[..m * k].chunks_exact(k).zip(out.chunks_exact_mut(n)) {
        for (&av, b_row) in a_row.iter().zip(b[..k * n].chunks_exact(n)) {
            for (o, &bv) in o_row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    }
}

/// Scaled dot-product attention of head `h` from `ws.qkv` into its slot of `ws.concat`.
#[inline(always)]
fn attend_head(ws: &mut Workspace, s: usize, d: usize, heads: usize, h: usize) {
    let scale = 1.0 / (d as f64).sqrt();
    let width = heads * d;
    let stride = 3 * width;
    let (qo, ko, vo) = (h * d, width + h * d, 2 * width + h * d);
    let qkv = &ws.qkv[..s * stride];
    for (i, row) in ws.scores[..s * s].chunks_exact_mut(s).enumerate() {
        let qi = &qkv[i * stride + qo..i * stride + qo + d];
        for (j, r) in row.iter_mut().enumerate() {
            let kj = &qkv[j * stride + ko..j * stride + ko + d];
            let mut acc = 0.0;
            for (a, b) in qi.iter().zip(kj) {
                acc += a * b;
            }
            *r = acc * scale;
        }
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
        let out = &mut ws.concat[i * width + h * d..i * width + (h + 1) * d];
        out.iter_mut().for_each(|v| *v = 0.0);
        for (j, &a) in row.iter().enumerate() {
            for (o, &vv) in out.iter_mut().zip(&qkv[j * stride + vo..j * stride + vo + d]) {
                *o += a * vv;
            }
        }
    }
}

fn layer_norm(x: &[f64], rows: usize, cols: usize, p: &Norm, out: &mut [f64]) {
    match cols {
        4 => layer_norm_kernel(x, rows, 4, p, out),
        _ => layer_norm_kernel(x, rows, cols, p, out),
    }
}

#[inline(always)]
fn layer_norm_kernel(x: &[f64], rows: usize, cols: usize, p: &Norm, out: &mut [f64]) {
    for r in 0..rows {
        let row = &x[r * cols..(r + 1) * cols];
        let (mean, var) = mean_var(row);
        let s = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        for c in 0..cols {
            out[r * cols + c] = (row[c] - mean) * s * p.gain[c] + p.bias[c];
        }
    }
}

impl InferenceEngine {
    pub fn new(model: &DenoiseModel) -> Self {
        let store = &model.store;
        let layout = &model.layout;
        let d = model.config.dim;
        let mut conv_weights = Vec::new();
        let mut conv_biases = Vec::new();
        for (w, b) in layout.conv.weights.iter().zip(&layout.conv.biases) {
            conv_weights.extend_from_slice(store.value(*w).data());
            conv_biases.extend_from_slice(store.value(*b).data());
        }
        InferenceEngine {
            config: model.config,
            message: model.message.clone(),
            conv_weights,
            conv_biases,
            encoder: layout
                .encoder
                .iter()
                .map(|l| EncoderLayer {
                    norm1: norm(store, &l.norm1),
                    attention: mha(store, &l.attention, d),
                    norm2: norm(store, &l.norm2),
                    ffn: ffn(store, &l.ffn),
                })
                .collect(),
            decoder: layout
                .decoder
                .iter()
                .map(|l| DecoderLayer {
                    norm1: norm(store, &l.norm1),
                    attention1: mha(store, &l.attention1, d),
                    norm2: norm(store, &l.norm2),
                    attention2: mha(store, &l.attention2, d),
                    norm3: norm(store, &l.norm3),
                    ffn: ffn(store, &l.ffn),
                })
                .collect(),
            head_weight: copy(store, layout.head.weight),
            head_bias: copy(store, layout.head.bias),
        }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn workspace(&self) -> Workspace {
        let c = &self.config;
        let tokens = c.seq_len * c.dim;
        Workspace {
            quantities: Vec::with_capacity(16),
            x: vec![0.0; tokens],
            normed: vec![0.0; tokens],
            residual: vec![0.0; tokens],
            qkv: vec![0.0; 3 * tokens * c.heads],
            scores: vec![0.0; c.seq_len * c.seq_len],
            concat: vec![0.0; tokens * c.heads],
            attn: vec![0.0; tokens],
            hidden: vec![0.0; c.seq_len * c.ff_dim],
        }
    }

    /// Graph signature `h` (quantity-major) into `ws.x`.
    fn signature(&self, ws: &mut Workspace, nodes: &[[f64; 3]]) {
        let wdt = self.message.width;
        quantities_into(nodes, means_of(nodes), self.message.reference, &mut ws.quantities);
        let h = &mut ws.x[..self.message.signature_len()];
        h.iter_mut().for_each(|v| *v = 0.0);
        for (slot, &k) in self.message.quantities.indices().iter().enumerate() {
            let w = &self.conv_weights[slot * wdt..(slot + 1) * wdt];
            let b = &self.conv_biases[slot * wdt..(slot + 1) * wdt];
            let out = &mut h[slot * wdt..(slot + 1) * wdt];
            for q in &ws.quantities {
                for c in 0..wdt {
                    out[c] += sigmoid(w[c] * q[k] + b[c]);
                }
            }
        }
    }

    /// Multi-head attention of `ws.normed` into `ws.attn`.
    fn attention(&self, ws: &mut Workspace, p: &Mha) {
        let (s, d) = (self.config.seq_len, self.config.dim);
        let stride = 3 * p.heads * d;
        matmul(&ws.normed, s, d, &p.qkv, stride, &mut ws.qkv);
        for h in 0..p.heads {
            match d {
                4 => attend_head(ws, s, 4, p.heads, h),
                _ => attend_head(ws, s, d, p.heads, h),
            }
        }
        matmul(&ws.concat, s, p.heads * d, &p.output, d, &mut ws.attn);
    }

    /// `ws.attn = FFN(ws.normed)`.
    fn ffn(&self, ws: &mut Workspace, p: &Ffn) {
        let (s, d, f) = (self.config.seq_len, self.config.dim, self.config.ff_dim);
        matmul(&ws.normed, s, d, &p.w1, f, &mut ws.hidden);
        for r in 0..s {
            for (h, b) in ws.hidden[r * f..(r + 1) * f].iter_mut().zip(&p.b1) {
                *h = (*h + b).max(0.0);
            }
        }
        matmul(&ws.hidden, s, f, &p.w2, d, &mut ws.attn);
        for r in 0..s {
            for (o, b) in ws.attn[r * d..(r + 1) * d].iter_mut().zip(&p.b2) {
                *o += b;
            }
        }
    }

    fn add_into(dst: &mut [f64], src: &[f64]) {
        for (d, s) in dst.iter_mut().zip(src) {
            *d += *s;
        }
    }

    /// Logits for normalized node features (node 0 is the interest node).
    pub fn logits(&self, ws: &mut Workspace, nodes: &[[f64; 3]]) -> [f64; 2] {
        let (s, d) = (self.config.seq_len, self.config.dim);
        let n = s * d;
        self.signature(ws, nodes);
        for layer in &self.encoder {
            layer_norm(&ws.x, s, d, &layer.norm1, &mut ws.normed);
            self.attention(ws, &layer.attention);
            Self::add_into(&mut ws.x[..n], &ws.attn[..n]);
            layer_norm(&ws.x, s, d, &layer.norm2, &mut ws.normed);
            self.ffn(ws, &layer.ffn);
            Self::add_into(&mut ws.x[..n], &ws.attn[..n]);
        }
        for layer in &self.decoder {
            ws.residual[..n].copy_from_slice(&ws.x[..n]);
            layer_norm(&ws.residual, s, d, &layer.norm1, &mut ws.normed);
            self.attention(ws, &layer.attention1);
            Self::add_into(&mut ws.x[..n], &ws.attn[..n]);
            layer_norm(&ws.residual, s, d, &layer.norm2, &mut ws.normed);
            self.attention(ws, &layer.attention2);
            Self::add_into(&mut ws.x[..n], &ws.attn[..n]);
            layer_norm(&ws.x, s, d, &layer.norm3, &mut ws.normed);
            self.ffn(ws, &layer.ffn);
            Self::add_into(&mut ws.x[..n], &ws.attn[..n]);
        }
        let mut logits = [0.0; 2];
        for (i, &v) in ws.x[..n].iter().enumerate() {
            logits[0] += v * self.head_weight[2 * i];
            logits[1] += v * self.head_weight[2 * i + 1];
        }
        [logits[0] + self.head_bias[0], logits[1] + self.head_bias[1]]
    }

    /// Real only when the real logit strictly exceeds the noise logit.
    pub fn decide(&self, ws: &mut Workspace, nodes: &[[f64; 3]]) -> Decision {
        let l = self.logits(ws, nodes);
        Decision::from_bool(l[1] > l[0])
    }

    /// `(p_noise, p_real)`.
    pub fn probabilities(&self, ws: &mut Workspace, nodes: &[[f64; 3]]) -> [f64; 2] {
        let l = self.logits(ws, nodes);
        let max = l[0].max(l[1]);
        let (a, b) = ((l[0] - max).exp(), (l[1] - max).exp());
        [a / (a + b), b / (a + b)]
    }
}
