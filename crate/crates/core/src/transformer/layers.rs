//! Tape-recorded transformer blocks and their tensor-level wrappers.

use super::model::{DecoderLayerParams, DenoiseModel, EncoderLayerParams, FfnParams, LayerNormParams, MhaParams};
use crate::autodiff::{ParamStore, Tape, Tensor, Var, LAYER_NORM_EPS};
use crate::error::{Error, Result};
use crate::eventconv::eventconv_tape;
use crate::graph::NormalizedGraph;

/// `softmax(Q K^T / sqrt(d_q)) V`, softmax over each row.
pub fn attention_tape(tape: &mut Tape, q: Var, k: Var, v: Var) -> Result<Var> {
    let (tq, tk, tv) = (tape.value(q), tape.value(k), tape.value(v));
    if tq.cols() != tk.cols() || tk.rows() != tv.rows() {
        return Err(Error::ShapeMismatch { op: "attention", left: tq.shape().to_vec(), right: tk.shape().to_vec() });
    }
    let dq = tq.cols() as f64;
    let kt = tape.transpose(k)?;
    let scores = tape.matmul(q, kt)?;
    let scores = tape.scale(scores, 1.0 / dq.sqrt());
    let weights = tape.softmax(scores, 1)?;
    tape.matmul(weights, v)
}

/// Per-head projections, attention, concatenation and output projection.
pub fn multi_head_tape(tape: &mut Tape, store: &ParamStore, p: &MhaParams, x: Var) -> Result<Var> {
    let mut heads = Vec::with_capacity(p.query.len());
    for h in 0..p.query.len() {
        let wq = tape.param(store, p.query[h]);
        let wk = tape.param(store, p.key[h]);
        let wv = tape.param(store, p.value[h]);
        let q = tape.matmul(x, wq)?;
        let k = tape.matmul(x, wk)?;
        let v = tape.matmul(x, wv)?;
        heads.push(attention_tape(tape, q, k, v)?);
    }
    let cat = tape.concat(&heads, 1)?;
    let wo = tape.param(store, p.output);
    tape.matmul(cat, wo)
}

fn norm_tape(tape: &mut Tape, store: &ParamStore, p: &LayerNormParams, x: Var) -> Result<Var> {
    let g = tape.param(store, p.gain);
    let b = tape.param(store, p.bias);
    tape.layer_norm(x, g, b, LAYER_NORM_EPS)
}

/// `max(0, x W1 + b1) W2 + b2`.
fn ffn_tape(tape: &mut Tape, store: &ParamStore, p: &FfnParams, x: Var) -> Result<Var> {
    let w1 = tape.param(store, p.w1);
    let b1 = tape.param(store, p.b1);
    let w2 = tape.param(store, p.w2);
    let b2 = tape.param(store, p.b2);
    let hidden = tape.matmul(x, w1)?;
    let hidden = tape.add(hidden, b1)?;
    let hidden = tape.relu(hidden);
    let out = tape.matmul(hidden, w2)?;
    tape.add(out, b2)
}

pub fn encoder_layer_tape(tape: &mut Tape, store: &ParamStore, p: &EncoderLayerParams, h: Var) -> Result<Var> {
    let n1 = norm_tape(tape, store, &p.norm1, h)?;
    let attn = multi_head_tape(tape, store, &p.attention, n1)?;
    let y1 = tape.add(attn, h)?;
    let n2 = norm_tape(tape, store, &p.norm2, y1)?;
    let ff = ffn_tape(tape, store, &p.ffn, n2)?;
    tape.add(ff, y1)
}

/// Both attention blocks read the layer-normed layer input; the second
/// residual adds onto the first block's output.
pub fn decoder_layer_tape(tape: &mut Tape, store: &ParamStore, p: &DecoderLayerParams, z: Var) -> Result<Var> {
    let n1 = norm_tape(tape, store, &p.norm1, z)?;
    let a1 = multi_head_tape(tape, store, &p.attention1, n1)?;
    let z1 = tape.add(a1, z)?;
    let n2 = norm_tape(tape, store, &p.norm2, z)?;
    let a2 = multi_head_tape(tape, store, &p.attention2, n2)?;
    let z2 = tape.add(a2, z1)?;
    let n3 = norm_tape(tape, store, &p.norm3, z2)?;
    let ff = ffn_tape(tape, store, &p.ffn, n3)?;
    tape.add(ff, z2)
}

/// Logits (`1 x 2`) from an `m x 3` node-feature variable.
pub fn forward_tape(tape: &mut Tape, model: &DenoiseModel, nodes: Var) -> Result<Var> {
    let tokens = eventconv_tape(tape, &model.store, &model.layout.conv, model.message.reference, nodes)?;
    logits_from_tokens_tape(tape, model, tokens)
}

/// Logits from the `q x wdt` signature rows.
pub fn logits_from_tokens_tape(tape: &mut Tape, model: &DenoiseModel, tokens: Var) -> Result<Var> {
    let cfg = &model.config;
    let mut x = tape.reshape(tokens, &[cfg.seq_len, cfg.dim])?;
    for layer in &model.layout.encoder {
        x = encoder_layer_tape(tape, &model.store, layer, x)?;
    }
    for layer in &model.layout.decoder {
        x = decoder_layer_tape(tape, &model.store, layer, x)?;
    }
    let flat = tape.reshape(x, &[1, cfg.flat_len()])?;
    let w = tape.param(&model.store, model.layout.head.weight);
    let b = tape.param(&model.store, model.layout.head.bias);
    let logits = tape.matmul(flat, w)?;
    tape.add(logits, b)
}

pub fn nodes_tensor(g: &NormalizedGraph) -> Tensor {
    Tensor::matrix(g.node_count(), 3, g.nodes.iter().flatten().copied().collect())
}

/// Logits for a normalized graph, evaluated on a fresh tape.
pub fn graph_logits(model: &DenoiseModel, g: &NormalizedGraph) -> Result<[f64; 2]> {
    let mut tape = Tape::new();
    let nodes = tape.input(nodes_tensor(g));
    let logits = forward_tape(&mut tape, model, nodes)?;
    let d = tape.value(logits).data();
    Ok([d[0], d[1]])
}

pub fn attention(q: &Tensor, k: &Tensor, v: &Tensor) -> Result<Tensor> {
    let mut tape = Tape::new();
    let (q, k, v) = (tape.input(q.clone()), tape.input(k.clone()), tape.input(v.clone()));
    let z = attention_tape(&mut tape, q, k, v)?;
    Ok(tape.value(z).clone())
}

pub fn multi_head(x: &Tensor, store: &ParamStore, p: &MhaParams) -> Result<Tensor> {
    let mut tape = Tape::new();
    let x = tape.input(x.clone());
    let out = multi_head_tape(&mut tape, store, p, x)?;
    Ok(tape.value(out).clone())
}

pub fn encoder_forward(tokens: &Tensor, store: &ParamStore, layers: &[EncoderLayerParams]) -> Result<Tensor> {
    let mut tape = Tape::new();
    let mut x = tape.input(tokens.clone());
    for layer in layers {
        x = encoder_layer_tape(&mut tape, store, layer, x)?;
    }
    Ok(tape.value(x).clone())
}

pub fn decoder_forward(encoded: &Tensor, store: &ParamStore, layers: &[DecoderLayerParams]) -> Result<Tensor> {
    let mut tape = Tape::new();
    let mut z = tape.input(encoded.clone());
    for layer in layers {
        z = decoder_layer_tape(&mut tape, store, layer, z)?;
    }
    Ok(tape.value(z).clone())
}

/// `(p_noise, p_real)` for a graph signature of length `S * D`.
pub fn classify(h: &[f64], model: &DenoiseModel) -> Result<[f64; 2]> {
    let cfg = &model.config;
    if h.len() != cfg.flat_len() {
        return Err(Error::ShapeMismatch { op: "classify", left: vec![h.len()], right: vec![cfg.flat_len()] });
    }
    let mut tape = Tape::new();
    let tokens = tape.input(Tensor::matrix(cfg.seq_len, cfg.dim, h.to_vec()));
    let logits = logits_from_tokens_tape(&mut tape, model, tokens)?;
    let probs = tape.softmax(logits, 1)?;
    let d = tape.value(probs).data();
    Ok([d[0], d[1]])
}
