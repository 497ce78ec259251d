//! EventConv: per-node messages summarized into a fixed-length graph signature.
//!
//! Every node contributes seven quantities measured against the graph's mean
//! node features:
//!
//! | id | quantity                                   |
//! |----|--------------------------------------------|
//! | Q1 | `x_j - x_ref`                              |
//! | Q2 | `y_j - y_ref`                              |
//! | Q3 | `t_j - t_ref`                              |
//! | Q4 | population standard deviation of x         |
//! | Q5 | population standard deviation of y         |
//! | Q6 | population standard deviation of t         |
//! | Q7 | `sqrt(Q1^2 + Q2^2 + Q3^2)`                 |
//!
//! The reference point is the graph mean by default. Each selected quantity
//! `k` goes through its own affine map `w_k * q + b_k` (width `wdt`) and a
//! sigmoid, and the results are summed over nodes:
//! `h[k, c] = sum_j sigmoid(w_k[c] * Q_kj + b_k[c])`.

use std::fmt;
use std::str::FromStr;

use rand_xoshiro::Xoshiro256PlusPlus;

use crate::autodiff::{sigmoid, ParamId, ParamStore, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::graph::NormalizedGraph;

pub const QUANTITY_COUNT: usize = 7;

/// Subset of the seven message quantities, stored as sorted zero-based indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct QuantitySet {
    selected: Vec<usize>,
}

impl QuantitySet {
    /// Q1, Q2, Q3.
    pub fn three() -> Self {
        QuantitySet { selected: vec![0, 1, 2] }
    }

    /// Q1, Q2, Q3, Q7.
    pub fn four() -> Self {
        QuantitySet { selected: vec![0, 1, 2, 6] }
    }

    /// Q1 through Q6.
    pub fn six() -> Self {
        QuantitySet { selected: (0..6).collect() }
    }

    /// All seven quantities.
    pub fn seven() -> Self {
        QuantitySet { selected: (0..7).collect() }
    }

    /// Arbitrary non-empty subset of zero-based quantity indices (experimental).
    pub fn from_indices(indices: &[usize]) -> Result<Self> {
        let mut selected = indices.to_vec();
        selected.sort_unstable();
        selected.dedup();
        if selected.is_empty() || selected.iter().any(|&i| i >= QUANTITY_COUNT) {
            return Err(Error::invalid(format!("invalid quantity subset {indices:?}")));
        }
        Ok(QuantitySet { selected })
    }

    pub fn indices(&self) -> &[usize] {
        &self.selected
    }

    pub fn count(&self) -> usize {
        self.selected.len()
    }

    pub fn contains(&self, index: usize) -> bool {
        self.selected.contains(&index)
    }

    pub fn is_standard_variant(&self) -> bool {
        [Self::three(), Self::four(), Self::six(), Self::seven()].contains(self)
    }
}

impl Default for QuantitySet {
    fn default() -> Self {
        Self::seven()
    }
}

impl fmt::Display for QuantitySet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if *self == Self::three() {
            f.write_str("3q")
        } else if *self == Self::four() {
            f.write_str("4q")
        } else if *self == Self::six() {
            f.write_str("6q")
        } else if *self == Self::seven() {
            f.write_str("7q")
        } else {
            let parts: Vec<String> = self.selected.iter().map(|i| format!("q{}", i + 1)).collect();
            f.write_str(&parts.join("+"))
        }
    }
}

impl FromStr for QuantitySet {
    type Err = Error;

    /// Accepts `3q`, `4q`, `6q`, `7q` or a `+`-separated list such as `q1+q7`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "3q" => Ok(Self::three()),
            "4q" => Ok(Self::four()),
            "6q" => Ok(Self::six()),
            "7q" => Ok(Self::seven()),
            other => {
                let idx = other
                    .split('+')
                    .map(|p| {
                        p.trim()
                            .strip_prefix('q')
                            .and_then(|n| n.parse::<usize>().ok())
                            .filter(|n| (1..=QUANTITY_COUNT).contains(n))
                            .map(|n| n - 1)
                            .ok_or_else(|| Error::invalid(format!("unknown message variant `{other}`")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Self::from_indices(&idx)
            }
        }
    }
}

/// Point that Q1-Q3 and Q7 are measured from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Reference {
    #[default]
    Mean,
    Interest,
}

impl FromStr for Reference {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Reference::Mean),
            "interest" => Ok(Reference::Interest),
            other => Err(Error::invalid(format!("unknown message reference `{other}`"))),
        }
    }
}

impl fmt::Display for Reference {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Reference::Mean => "mean",
            Reference::Interest => "interest",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MessageConfig {
    pub quantities: QuantitySet,
    /// Channel width `wdt` of every quantity's affine map.
    pub width: usize,
    pub reference: Reference,
}

impl Default for MessageConfig {
    fn default() -> Self {
        MessageConfig { quantities: QuantitySet::seven(), width: 4, reference: Reference::Mean }
    }
}

impl MessageConfig {
    pub fn signature_len(&self) -> usize {
        self.quantities.count() * self.width
    }
}

/// Parameter handles of an EventConv layer, aligned with the selected quantities.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventConvParams {
    pub quantities: QuantitySet,
    pub width: usize,
    pub weights: Vec<ParamId>,
    pub biases: Vec<ParamId>,
}

impl EventConvParams {
    /// Registers `conv.q{k}.w` and `conv.q{k}.b` (each `1 x wdt`) for every selected quantity.
    pub fn register(store: &mut ParamStore, cfg: &MessageConfig, rng: &mut Xoshiro256PlusPlus) -> Result<Self> {
        if cfg.width == 0 {
            return Err(Error::invalid("message width must be at least 1"));
        }
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for &k in cfg.quantities.indices() {
            weights.push(store.add_uniform(format!("conv.q{}.w", k + 1), &[1, cfg.width], 1, rng)?);
            biases.push(store.add_uniform(format!("conv.q{}.b", k + 1), &[1, cfg.width], 1, rng)?);
        }
        Ok(EventConvParams { quantities: cfg.quantities.clone(), width: cfg.width, weights, biases })
    }

    /// Looks the handles up by name in an existing store.
    pub fn resolve(store: &ParamStore, cfg: &MessageConfig) -> Result<Self> {
        let find = |name: String| store.find(&name).ok_or_else(|| Error::Checkpoint(format!("missing parameter `{name}`")));
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for &k in cfg.quantities.indices() {
            weights.push(find(format!("conv.q{}.w", k + 1))?);
            biases.push(find(format!("conv.q{}.b", k + 1))?);
        }
        Ok(EventConvParams { quantities: cfg.quantities.clone(), width: cfg.width, weights, biases })
    }

    fn check(&self, selector: &QuantitySet) -> Result<()> {
        if *selector != self.quantities || self.weights.len() != selector.count() || self.biases.len() != selector.count() {
            return Err(Error::invalid(format!(
                "EventConv parameters are for variant {} but selector is {}",
                self.quantities, selector
            )));
        }
        Ok(())
    }
}

/// Means of x, y and t over all nodes, interest node included.
pub fn compute_means(g: &NormalizedGraph) -> [f64; 3] {
    means_of(&g.nodes)
}

pub fn means_of(nodes: &[[f64; 3]]) -> [f64; 3] {
    let n = nodes.len() as f64;
    let mut s = [0.0; 3];
    for node in nodes {
        for d in 0..3 {
            s[d] += node[d];
        }
    }
    [s[0] / n, s[1] / n, s[2] / n]
}

/// Per-node quantities Q1..Q7 (`m x 7`).
pub fn compute_quantities(g: &NormalizedGraph, means: [f64; 3], reference: Reference) -> Vec<[f64; QUANTITY_COUNT]> {
    let mut out = Vec::with_capacity(g.node_count());
    quantities_into(&g.nodes, means, reference, &mut out);
    out
}

pub fn quantities_into(nodes: &[[f64; 3]], means: [f64; 3], reference: Reference, out: &mut Vec<[f64; QUANTITY_COUNT]>) {
    out.clear();
    let n = nodes.len() as f64;
    let mut var = [0.0; 3];
    for node in nodes {
        for d in 0..3 {
            let dv = node[d] - means[d];
            var[d] += dv * dv;
        }
    }
    let std = [(var[0] / n).sqrt(), (var[1] / n).sqrt(), (var[2] / n).sqrt()];
    let origin = match reference {
        Reference::Mean => means,
        Reference::Interest => nodes[0],
    };
    for node in nodes {
        let dx = node[0] - origin[0];
        let dy = node[1] - origin[1];
        let dt = node[2] - origin[2];
        out.push([dx, dy, dt, std[0], std[1], std[2], (dx * dx + dy * dy + dt * dt).sqrt()]);
    }
}

/// Graph signature `h`, quantity-major (`h[k * wdt + c]`).
pub fn eventconv_forward(
    quantities: &[[f64; QUANTITY_COUNT]],
    selector: &QuantitySet,
    params: &EventConvParams,
    store: &ParamStore,
) -> Result<Vec<f64>> {
    params.check(selector)?;
    let wdt = params.width;
    let mut h = vec![0.0; selector.count() * wdt];
    for (slot, &k) in selector.indices().iter().enumerate() {
        let w = store.value(params.weights[slot]).data();
        let b = store.value(params.biases[slot]).data();
        let out = &mut h[slot * wdt..(slot + 1) * wdt];
        for q in quantities {
            for c in 0..wdt {
                out[c] += sigmoid(w[c] * q[k] + b[c]);
            }
        }
    }
    Ok(h)
}

/// Records EventConv on a tape from an `m x 3` node-feature variable.
///
/// Returns the signature reshaped to `q x wdt`, one row per selected quantity.
pub fn eventconv_tape(
    tape: &mut Tape,
    store: &ParamStore,
    params: &EventConvParams,
    reference: Reference,
    nodes: Var,
) -> Result<Var> {
    let m = tape.value(nodes).rows();
    let means = tape.mean(nodes, 0)?;
    let origin = match reference {
        Reference::Mean => means,
        Reference::Interest => tape.slice_rows(nodes, 0, 1)?,
    };
    let diff = tape.sub(nodes, origin)?;
    let centered = tape.sub(nodes, means)?;
    let sq = tape.mul(centered, centered)?;
    let var = tape.mean(sq, 0)?;
    let std = tape.sqrt(var);
    let ones = tape.input(Tensor::filled(&[m, 1], 1.0));
    let std_rows = tape.matmul(ones, std)?;
    let diff_sq = tape.mul(diff, diff)?;
    let dist_sq = tape.sum(diff_sq, 1)?;
    let dist = tape.sqrt(dist_sq);
    let q = tape.concat(&[diff, std_rows, dist], 1)?;
    let mut rows = Vec::with_capacity(params.quantities.count());
    for (slot, &k) in params.quantities.indices().iter().enumerate() {
        let col = tape.slice_cols(q, k, 1)?;
        let w = tape.param(store, params.weights[slot]);
        let b = tape.param(store, params.biases[slot]);
        let pre = tape.matmul(col, w)?;
        let pre = tape.add(pre, b)?;
        let act = tape.sigmoid(pre);
        rows.push(tape.sum(act, 0)?);
    }
    tape.concat(&rows, 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::init_rng;

    fn graph(nodes: Vec<[f64; 3]>) -> NormalizedGraph {
        NormalizedGraph { nodes }
    }

    #[test]
    fn variant_parsing() {
        assert_eq!("3q".parse::<QuantitySet>().unwrap(), QuantitySet::three());
        assert_eq!("q1+q2+q3+q7".parse::<QuantitySet>().unwrap(), QuantitySet::four());
        assert_eq!(QuantitySet::four().to_string(), "4q");
        assert_eq!(QuantitySet::from_indices(&[6, 0]).unwrap().to_string(), "q1+q7");
        assert!("q8".parse::<QuantitySet>().is_err());
        assert!(QuantitySet::from_indices(&[]).is_err());
    }

    #[test]
    fn single_node_quantities_vanish() {
        let g = graph(vec![[0.5, 0.5, 0.95]]);
        let means = compute_means(&g);
        assert_eq!(means, [0.5, 0.5, 0.95]);
        assert_eq!(compute_quantities(&g, means, Reference::Mean), vec![[0.0; 7]]);
    }

    #[test]
    fn symmetric_pair() {
        let g = graph(vec![[0.05, 0.5, 0.5], [0.95, 0.5, 0.5]]);
        let means = compute_means(&g);
        assert!((means[0] - 0.5).abs() < 1e-15);
        let q = compute_quantities(&g, means, Reference::Mean);
        let d = 0.45;
        for (j, sign) in [(0usize, -1.0), (1, 1.0)] {
            assert!((q[j][0] - sign * d).abs() < 1e-15);
            assert!((q[j][3] - d).abs() < 1e-15);
            assert!((q[j][6] - d).abs() < 1e-15);
            assert_eq!(q[j][4], 0.0);
        }
    }

    #[test]
    fn single_node_signature_is_sigmoid_of_bias() {
        let cfg = MessageConfig::default();
        let mut store = ParamStore::new();
        let params = EventConvParams::register(&mut store, &cfg, &mut init_rng(3)).unwrap();
        let g = graph(vec![[0.5, 0.5, 0.95]]);
        let q = compute_quantities(&g, compute_means(&g), Reference::Mean);
        let h = eventconv_forward(&q, &cfg.quantities, &params, &store).unwrap();
        for (slot, b) in params.biases.iter().enumerate() {
            for c in 0..cfg.width {
                assert_eq!(h[slot * cfg.width + c], sigmoid(store.value(*b).data()[c]));
            }
        }
    }

    #[test]
    fn zero_params_give_half_node_count() {
        let cfg = MessageConfig::default();
        let mut store = ParamStore::new();
        let params = EventConvParams::register(&mut store, &cfg, &mut init_rng(3)).unwrap();
        store.iter_mut().for_each(|p| p.value.data_mut().iter_mut().for_each(|v| *v = 0.0));
        let g = graph(vec![[0.1, 0.2, 0.3], [0.4, 0.5, 0.6], [0.9, 0.1, 0.95]]);
        let q = compute_quantities(&g, compute_means(&g), Reference::Mean);
        let h = eventconv_forward(&q, &cfg.quantities, &params, &store).unwrap();
        assert_eq!(h.len(), 28);
        assert!(h.iter().all(|&v| v == 1.5));
    }

    #[test]
    fn selector_mismatch_is_rejected() {
        let cfg = MessageConfig::default();
        let mut store = ParamStore::new();
        let params = EventConvParams::register(&mut store, &cfg, &mut init_rng(3)).unwrap();
        let q = vec![[0.0; 7]];
        assert!(eventconv_forward(&q, &QuantitySet::three(), &params, &store).is_err());
    }

    #[test]
    fn tape_matches_direct() {
        let cfg = MessageConfig { quantities: QuantitySet::four(), width: 3, reference: Reference::Interest };
        let mut store = ParamStore::new();
        let params = EventConvParams::register(&mut store, &cfg, &mut init_rng(9)).unwrap();
        let g = graph(vec![[0.5, 0.5, 0.95], [0.2, 0.7, 0.4], [0.95, 0.05, 0.6], [0.3, 0.3, 0.9]]);
        let q = compute_quantities(&g, compute_means(&g), cfg.reference);
        let h = eventconv_forward(&q, &cfg.quantities, &params, &store).unwrap();
        let mut tape = Tape::new();
        let flat: Vec<f64> = g.nodes.iter().flatten().copied().collect();
        let nodes = tape.input(Tensor::matrix(4, 3, flat));
        let out = eventconv_tape(&mut tape, &store, &params, cfg.reference, nodes).unwrap();
        assert_eq!(tape.value(out).shape(), &[4, 3]);
        for (a, b) in tape.value(out).data().iter().zip(&h) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
