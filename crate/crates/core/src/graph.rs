//! Local-volume event graphs.
//!
//! For each arriving event the classifier looks at the most recent events in
//! a `(2L+1) x (2L+1)` pixel window over the preceding `T` microseconds. A
//! per-pixel ring buffer of recent timestamps ([`RecencyStore`]) answers that
//! query online. Every neighbor gets one directed edge to the event of
//! interest, so a graph is just the interest node plus its neighbor list.

use crate::error::{Error, Result};
use crate::event::{Event, SensorGeometry};

/// Lower and upper bounds of normalized node features.
pub const FEATURE_MIN: f64 = 0.05;
pub const FEATURE_MAX: f64 = 0.95;
const FEATURE_SPAN: f64 = FEATURE_MAX - FEATURE_MIN;

/// Shape of the spatiotemporal window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VolumeSpec {
    /// Spatial half-extent `L`; the window is `(2L+1) x (2L+1)` pixels.
    pub half_extent: u16,
    /// Temporal depth `T` in microseconds.
    pub depth_us: i64,
    /// Maximum neighbor count `N_max`.
    pub max_neighbors: usize,
}

impl Default for VolumeSpec {
    fn default() -> Self {
        VolumeSpec { half_extent: 2, depth_us: 50_000, max_neighbors: 10 }
    }
}

impl VolumeSpec {
    pub fn new(half_extent: u16, depth_us: i64, max_neighbors: usize) -> Result<Self> {
        if depth_us <= 0 {
            return Err(Error::invalid(format!("temporal depth must be positive, got {depth_us}")));
        }
        Ok(VolumeSpec { half_extent, depth_us, max_neighbors })
    }

    pub fn window_side(&self) -> usize {
        2 * self.half_extent as usize + 1
    }
}

/// Raw node features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Node {
    pub x: u16,
    pub y: u16,
    pub t: i64,
}

impl From<&Event> for Node {
    fn from(e: &Event) -> Self {
        Node { x: e.x, y: e.y, t: e.t }
    }
}

/// A neighbor candidate with its arrival sequence number for tie-breaking.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Neighbor {
    pub node: Node,
    pub seq: u64,
}

/// Per-pixel ring buffers of the most recent `(timestamp, arrival seq)` pairs.
#[derive(Debug, Clone)]
pub struct RecencyStore {
    geometry: SensorGeometry,
    capacity: usize,
    slots: Vec<(i64, u64)>,
    // Position the next insert writes to, per pixel.
    head: Vec<u16>,
    len: Vec<u16>,
    next_seq: u64,
    last_t: i64,
}

impl RecencyStore {
    pub fn new(geometry: SensorGeometry, capacity: usize) -> Result<Self> {
        if capacity == 0 || capacity > u16::MAX as usize {
            return Err(Error::invalid(format!("ring capacity must be in 1..=65535, got {capacity}")));
        }
        let pixels = geometry.pixel_count();
        Ok(RecencyStore {
            geometry,
            capacity,
            slots: vec![(0, 0); pixels * capacity],
            head: vec![0; pixels],
            len: vec![0; pixels],
            next_seq: 0,
            last_t: i64::MIN,
        })
    }

    /// Store sized for `spec` (ring capacity `K = max(N_max, 1)`).
    pub fn for_volume(geometry: SensorGeometry, spec: &VolumeSpec) -> Result<Self> {
        Self::new(geometry, spec.max_neighbors.max(1))
    }

    pub fn geometry(&self) -> SensorGeometry {
        self.geometry
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn clear(&mut self) {
        self.head.iter_mut().for_each(|h| *h = 0);
        self.len.iter_mut().for_each(|l| *l = 0);
        self.next_seq = 0;
        self.last_t = i64::MIN;
    }

    /// Records `e` as the newest entry at its pixel, evicting the oldest if full.
    pub fn insert(&mut self, e: &Event) -> Result<()> {
        self.geometry.check(e)?;
        let pixel = self.geometry.index(e.x, e.y);
        let pos = self.head[pixel] as usize;
        self.slots[pixel * self.capacity + pos] = (e.t, self.next_seq);
        self.head[pixel] = ((pos + 1) % self.capacity) as u16;
        if (self.len[pixel] as usize) < self.capacity {
            self.len[pixel] += 1;
        }
        self.next_seq += 1;
        self.last_t = self.last_t.max(e.t);
        Ok(())
    }

    /// Entries at a pixel, newest first.
    pub fn pixel_history(&self, x: u16, y: u16) -> impl Iterator<Item = (i64, u64)> + '_ {
        let pixel = self.geometry.index(x, y);
        let (head, len, cap) = (self.head[pixel] as usize, self.len[pixel] as usize, self.capacity);
        let base = pixel * cap;
        (0..len).map(move |i| self.slots[base + (head + cap - 1 - i) % cap])
    }

    /// The `N_max` most recent stored events inside the volume of `e`.
    ///
    /// `e` itself must not have been inserted yet. Ordering is by descending
    /// timestamp, later arrival first on ties.
    pub fn query_neighborhood(&self, e: &Event, spec: &VolumeSpec) -> Vec<Node> {
        let mut buf = Vec::new();
        self.query_into(e, spec, &mut buf);
        buf.into_iter().map(|n| n.node).collect()
    }

    /// Allocation-reusing form of [`query_neighborhood`](Self::query_neighborhood).
    pub fn query_into(&self, e: &Event, spec: &VolumeSpec, out: &mut Vec<Neighbor>) {
        out.clear();
        if spec.max_neighbors == 0 {
            return;
        }
        let l = spec.half_extent as i64;
        let (w, h) = (self.geometry.width as i64, self.geometry.height as i64);
        let x0 = (e.x as i64 - l).max(0);
        let x1 = (e.x as i64 + l).min(w - 1);
        let y0 = (e.y as i64 - l).max(0);
        let y1 = (e.y as i64 + l).min(h - 1);
        let oldest = e.t - spec.depth_us;
        for y in y0..=y1 {
            for x in x0..=x1 {
                let (x, y) = (x as u16, y as u16);
                for (t, seq) in self.pixel_history(x, y) {
                    if t < oldest {
                        break;
                    }
                    if t <= e.t {
                        out.push(Neighbor { node: Node { x, y, t }, seq });
                    }
                }
            }
        }
        let by_recency = |a: &Neighbor, b: &Neighbor| b.node.t.cmp(&a.node.t).then(b.seq.cmp(&a.seq));
        if out.len() > spec.max_neighbors {
            out.select_nth_unstable_by(spec.max_neighbors - 1, by_recency);
            out.truncate(spec.max_neighbors);
        }
        out.sort_unstable_by(by_recency);
    }
}

/// The event of interest and its neighbors, each with an edge toward it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventGraph {
    pub interest: Node,
    pub neighbors: Vec<Node>,
}

impl EventGraph {
    pub fn node_count(&self) -> usize {
        self.neighbors.len() + 1
    }

    /// Edges as `(source, target)` node indices; node 0 is the interest node.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> {
        (1..self.node_count()).map(|j| (j, 0))
    }
}

/// Builds the graph for `e` from the output of a neighborhood query.
pub fn build_graph(e: &Event, neighbors: &[Node], spec: &VolumeSpec) -> EventGraph {
    let n = neighbors.len().min(spec.max_neighbors);
    EventGraph { interest: Node::from(e), neighbors: neighbors[..n].to_vec() }
}

/// Node features affinely mapped into `[0.05, 0.95]`; node 0 is the interest node.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedGraph {
    pub nodes: Vec<[f64; 3]>,
}

impl NormalizedGraph {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn interest(&self) -> [f64; 3] {
        self.nodes[0]
    }
}

#[inline]
fn affine(value: i64, low: i64, span: i64) -> f64 {
    if span == 0 {
        0.5
    } else {
        let f = (value - low) as f64 / span as f64;
        FEATURE_MIN * (1.0 - f) + FEATURE_MAX * f
    }
}

#[inline]
pub fn normalize_node(node: &Node, interest: &Node, spec: &VolumeSpec) -> [f64; 3] {
    let l = spec.half_extent as i64;
    [
        affine(node.x as i64, interest.x as i64 - l, 2 * l),
        affine(node.y as i64, interest.y as i64 - l, 2 * l),
        affine(node.t, interest.t - spec.depth_us, spec.depth_us),
    ]
}

/// Maps x and y from `[c - L, c + L]` and t from `[t_i - T, t_i]` into `[0.05, 0.95]`.
pub fn normalize_graph(g: &EventGraph, spec: &VolumeSpec) -> NormalizedGraph {
    let mut nodes = Vec::with_capacity(g.node_count());
    nodes.push(normalize_node(&g.interest, &g.interest, spec));
    nodes.extend(g.neighbors.iter().map(|n| normalize_node(n, &g.interest, spec)));
    NormalizedGraph { nodes }
}

/// Inverse of [`normalize_node`], rounded back to integer features.
pub fn denormalize_node(features: [f64; 3], interest: &Node, spec: &VolumeSpec) -> (i64, i64, i64) {
    let l = spec.half_extent as i64;
    let inv = |v: f64, low: i64, span: i64| -> i64 {
        if span == 0 {
            low
        } else {
            low + ((v - FEATURE_MIN) / FEATURE_SPAN * span as f64).round() as i64
        }
    };
    (
        inv(features[0], interest.x as i64 - l, 2 * l),
        inv(features[1], interest.y as i64 - l, 2 * l),
        inv(features[2], interest.t - spec.depth_us, spec.depth_us),
    )
}

/// Streams events through a [`RecencyStore`], producing one graph per event.
///
/// Each event is queried before it is inserted, so it never neighbors itself.
#[derive(Debug, Clone)]
pub struct GraphBuilder {
    store: RecencyStore,
    spec: VolumeSpec,
    scratch: Vec<Neighbor>,
}

impl GraphBuilder {
    pub fn new(geometry: SensorGeometry, spec: VolumeSpec) -> Result<Self> {
        Ok(GraphBuilder { store: RecencyStore::for_volume(geometry, &spec)?, spec, scratch: Vec::new() })
    }

    pub fn spec(&self) -> &VolumeSpec {
        &self.spec
    }

    pub fn reset(&mut self) {
        self.store.clear();
    }

    pub fn next_graph(&mut self, e: &Event) -> Result<EventGraph> {
        self.store.geometry().check(e)?;
        self.store.query_into(e, &self.spec, &mut self.scratch);
        let graph = EventGraph {
            interest: Node::from(e),
            neighbors: self.scratch.iter().map(|n| n.node).collect(),
        };
        self.store.insert(e)?;
        Ok(graph)
    }

    /// Writes the normalized node features of `e`'s graph into `out` and
    /// returns the node count.
    pub fn next_normalized_into(&mut self, e: &Event, out: &mut Vec<[f64; 3]>) -> Result<usize> {
        self.store.geometry().check(e)?;
        self.store.query_into(e, &self.spec, &mut self.scratch);
        let interest = Node::from(e);
        out.clear();
        out.push(normalize_node(&interest, &interest, &self.spec));
        out.extend(self.scratch.iter().map(|n| normalize_node(&n.node, &interest, &self.spec)));
        self.store.insert(e)?;
        Ok(out.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::Polarity;

    fn ev(t: i64, x: u16, y: u16) -> Event {
        Event::new(t, x, y, Polarity::On)
    }

    fn geometry() -> SensorGeometry {
        SensorGeometry::new(32, 24).unwrap()
    }

    #[test]
    fn insert_and_evict() {
        let mut store = RecencyStore::new(geometry(), 3).unwrap();
        store.insert(&ev(5, 1, 1)).unwrap();
        assert_eq!(store.pixel_history(1, 1).count(), 1);
        for t in 6..=8 {
            store.insert(&ev(t, 1, 1)).unwrap();
        }
        let ts: Vec<i64> = store.pixel_history(1, 1).map(|(t, _)| t).collect();
        assert_eq!(ts, vec![8, 7, 6]);
        assert!(store.insert(&ev(9, 32, 0)).is_err());
    }

    #[test]
    fn empty_store_has_no_neighbors() {
        let store = RecencyStore::new(geometry(), 10).unwrap();
        assert!(store.query_neighborhood(&ev(100, 5, 5), &VolumeSpec::default()).is_empty());
    }

    #[test]
    fn cap_keeps_latest_ten() {
        let spec = VolumeSpec::default();
        let mut store = RecencyStore::for_volume(geometry(), &spec).unwrap();
        for i in 0..12 {
            store.insert(&ev(1000 + i * 10, 4 + (i % 5) as u16, 4)).unwrap();
        }
        let nb = store.query_neighborhood(&ev(2000, 6, 5), &spec);
        assert_eq!(nb.len(), 10);
        let ts: Vec<i64> = nb.iter().map(|n| n.t).collect();
        assert_eq!(ts, (2..12).rev().map(|i| 1000 + i * 10).collect::<Vec<_>>());
    }

    #[test]
    fn window_bounds_are_inclusive() {
        let spec = VolumeSpec::new(1, 100, 10).unwrap();
        let mut store = RecencyStore::for_volume(geometry(), &spec).unwrap();
        store.insert(&ev(0, 4, 4)).unwrap(); // exactly t_i - T
        store.insert(&ev(50, 6, 6)).unwrap(); // corner
        store.insert(&ev(60, 7, 5)).unwrap(); // outside in x
        let nb = store.query_neighborhood(&ev(100, 5, 5), &spec);
        assert_eq!(nb, vec![Node { x: 6, y: 6, t: 50 }, Node { x: 4, y: 4, t: 0 }]);
    }

    #[test]
    fn ties_prefer_later_arrival() {
        let spec = VolumeSpec::new(2, 100, 1).unwrap();
        let mut store = RecencyStore::for_volume(geometry(), &spec).unwrap();
        store.insert(&ev(10, 3, 3)).unwrap();
        store.insert(&ev(10, 4, 3)).unwrap();
        let nb = store.query_neighborhood(&ev(10, 3, 4), &spec);
        assert_eq!(nb, vec![Node { x: 4, y: 3, t: 10 }]);
    }

    #[test]
    fn graph_shapes() {
        let spec = VolumeSpec::default();
        let e = ev(10, 3, 3);
        let g = build_graph(&e, &[], &spec);
        assert_eq!(g.node_count(), 1);
        assert_eq!(g.edges().count(), 0);
        let g = build_graph(&e, &[Node { x: 3, y: 3, t: 9 }], &spec);
        assert_eq!(g.node_count(), 2);
        assert_eq!(g.edges().collect::<Vec<_>>(), vec![(1, 0)]);
    }

    #[test]
    fn normalization_corners() {
        let spec = VolumeSpec::default();
        let e = ev(100_000, 10, 10);
        let g = build_graph(&e, &[Node { x: 8, y: 12, t: 50_000 }], &spec);
        let n = normalize_graph(&g, &spec);
        assert_eq!(n.nodes[0], [0.5, 0.5, 0.95]);
        let c = n.nodes[1];
        assert!((c[0] - 0.05).abs() < 1e-15 && (c[1] - 0.95).abs() < 1e-15 && (c[2] - 0.05).abs() < 1e-15);
    }

    #[test]
    fn zero_extent_maps_to_center() {
        let spec = VolumeSpec::new(0, 10, 4).unwrap();
        let e = ev(20, 1, 1);
        let n = normalize_graph(&build_graph(&e, &[Node { x: 1, y: 1, t: 15 }], &spec), &spec);
        assert_eq!(n.nodes[1][0], 0.5);
        assert_eq!(denormalize_node(n.nodes[1], &Node::from(&e), &spec), (1, 1, 15));
    }

    #[test]
    fn builder_queries_before_insert() {
        let mut b = GraphBuilder::new(geometry(), VolumeSpec::default()).unwrap();
        let g = b.next_graph(&ev(0, 3, 3)).unwrap();
        assert!(g.neighbors.is_empty());
        let g = b.next_graph(&ev(1, 3, 3)).unwrap();
        assert_eq!(g.neighbors, vec![Node { x: 3, y: 3, t: 0 }]);
    }
}
