//! Per-event working-set accounting for the graph classifier.

use crate::graph::VolumeSpec;

/// Comparison figure for a frame-based CNN denoiser: a 25x25 patch with two
/// polarity channels and two time surfaces.
pub const CNN_PATCH_ELEMENTS: usize = 25 * 25 * 2 * 2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MemoryEstimate {
    /// `(2L + 1)^2`.
    pub window_pixels: usize,
    pub max_neighbors: usize,
    /// `(2L + 1)^2 * N_g`.
    pub elements: usize,
    pub bytes: usize,
    pub comparison_elements: usize,
    /// `comparison_elements / elements`.
    pub ratio: f64,
    pub parameters: usize,
    pub parameter_bytes: usize,
    /// Bytes of the recency store for the given sensor, if one was supplied.
    pub store_bytes: Option<usize>,
}

/// Working set of one classification: each window pixel keeps at most
/// `N_g` timestamps.
pub fn memory_estimate(spec: &VolumeSpec, parameters: usize, sensor_pixels: Option<usize>) -> MemoryEstimate {
    let side = spec.window_side();
    let window_pixels = side * side;
    let elements = window_pixels * spec.max_neighbors;
    MemoryEstimate {
        window_pixels,
        max_neighbors: spec.max_neighbors,
        elements,
        bytes: elements * std::mem::size_of::<i64>(),
        comparison_elements: CNN_PATCH_ELEMENTS,
        ratio: CNN_PATCH_ELEMENTS as f64 / elements as f64,
        parameters,
        parameter_bytes: parameters * std::mem::size_of::<f64>(),
        store_bytes: sensor_pixels.map(|p| p * spec.max_neighbors * std::mem::size_of::<(i64, u64)>()),
    }
}
