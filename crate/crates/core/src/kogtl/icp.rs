//! Exact Euclidean distance transform and translation-only ICP.

use super::{EdgeMap, IcpResult, LabelingConfig};
use crate::error::{Error, Result};

const FAR: f64 = 1e20;

/// Nearest edge pixel for every pixel of an edge map.
#[derive(Debug, Clone)]
pub struct DistanceField {
    width: usize,
    height: usize,
    /// Squared distance to the nearest edge pixel.
    dist_sq: Vec<f64>,
    /// Flat index of that edge pixel.
    site: Vec<usize>,
}

/// 1-D squared-distance transform of sampled `f` (lower envelope of
/// parabolas), returning values and argmins.
fn envelope(f: &[f64], d: &mut [f64], arg: &mut [usize], v: &mut Vec<usize>, z: &mut Vec<f64>) {
    let n = f.len();
    v.clear();
    z.clear();
    let first = match (0..n).find(|&q| f[q] < FAR) {
        Some(q) => q,
        None => {
            d.iter_mut().for_each(|x| *x = FAR);
            return;
        }
    };
    v.push(first);
    z.push(f64::NEG_INFINITY);
    for q in first + 1..n {
        if f[q] >= FAR {
            continue;
        }
        loop {
            let p = *v.last().unwrap();
            let s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
            if s <= *z.last().unwrap() {
                v.pop();
                z.pop();
                if v.is_empty() {
                    v.push(q);
                    z.push(f64::NEG_INFINITY);
                    break;
                }
            } else {
                v.push(q);
                z.push(s);
                break;
            }
        }
    }
    let mut k = 0;
    for (q, (dq, aq)) in d.iter_mut().zip(arg.iter_mut()).enumerate() {
        while k + 1 < z.len() && z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let dx = q as f64 - p as f64;
        *dq = dx * dx + f[p];
        *aq = p;
    }
}

impl DistanceField {
    pub fn new(edges: &EdgeMap) -> Self {
        let (w, h) = (edges.width as usize, edges.height as usize);
        let mut col_d = vec![FAR; w * h];
        let mut col_site = vec![0usize; w * h];
        let (mut v, mut z) = (Vec::new(), Vec::new());
        let mut f = vec![0.0; h];
        let mut d = vec![0.0; h];
        let mut arg = vec![0usize; h];
        for x in 0..w {
            for (y, fy) in f.iter_mut().enumerate() {
                *fy = if edges.mask[y * w + x] { 0.0 } else { FAR };
            }
            envelope(&f, &mut d, &mut arg, &mut v, &mut z);
            for y in 0..h {
                col_d[y * w + x] = d[y];
                col_site[y * w + x] = arg[y];
            }
        }
        let mut dist_sq = vec![FAR; w * h];
        let mut site = vec![0usize; w * h];
        let mut f = vec![0.0; w];
        let mut d = vec![0.0; w];
        let mut arg = vec![0usize; w];
        for y in 0..h {
            f.copy_from_slice(&col_d[y * w..(y + 1) * w]);
            envelope(&f, &mut d, &mut arg, &mut v, &mut z);
            for x in 0..w {
                dist_sq[y * w + x] = d[x];
                let sx = arg[x];
                site[y * w + x] = col_site[y * w + sx] * w + sx;
            }
        }
        DistanceField { width: w, height: h, dist_sq, site }
    }

    pub fn is_empty(&self) -> bool {
        self.dist_sq.iter().all(|&d| d >= FAR)
    }

    /// Euclidean distance from pixel `(x, y)` to the nearest edge pixel.
    pub fn distance(&self, x: usize, y: usize) -> f64 {
        self.dist_sq[y * self.width + x].sqrt()
    }

    /// Nearest edge pixel to pixel `(x, y)`.
    pub fn nearest(&self, x: usize, y: usize) -> (usize, usize) {
        let s = self.site[y * self.width + x];
        (s % self.width, s / self.width)
    }

    /// Nearest edge pixel to a real-valued point, chosen among the sites of
    /// the (clamped) pixels surrounding it.
    pub fn nearest_to(&self, px: f64, py: f64) -> (f64, f64) {
        let cx = |v: f64| (v.max(0.0) as usize).min(self.width - 1);
        let cy = |v: f64| (v.max(0.0) as usize).min(self.height - 1);
        let mut best = (f64::INFINITY, 0.0, 0.0);
        for (x, y) in [
            (cx(px.floor()), cy(py.floor())),
            (cx(px.ceil()), cy(py.floor())),
            (cx(px.floor()), cy(py.ceil())),
            (cx(px.ceil()), cy(py.ceil())),
        ] {
            let (sx, sy) = self.nearest(x, y);
            let (sx, sy) = (sx as f64, sy as f64);
            let d = (sx - px).powi(2) + (sy - py).powi(2);
            if d < best.0 {
                best = (d, sx, sy);
            }
        }
        (best.1, best.2)
    }
}

/// Root-mean-square distance of inlier correspondences and the mean offset
/// towards their edges, for `points` moved by `(dx, dy)`.
fn correspond(field: &DistanceField, points: &[(f64, f64)], dx: f64, dy: f64, max_dist: f64) -> Option<(f64, f64, f64)> {
    let (mut sq, mut ox, mut oy, mut n) = (0.0, 0.0, 0.0, 0usize);
    for &(x, y) in points {
        let (px, py) = (x + dx, y + dy);
        let (ex, ey) = field.nearest_to(px, py);
        let d2 = (ex - px).powi(2) + (ey - py).powi(2);
        if d2 > max_dist * max_dist {
            continue;
        }
        sq += d2;
        ox += ex - px;
        oy += ey - py;
        n += 1;
    }
    (n > 0).then(|| ((sq / n as f64).sqrt(), ox / n as f64, oy / n as f64))
}

/// Translation that moves `points` onto `edges`.
///
/// Each iteration pairs every point with its nearest edge pixel and moves by
/// the mean offset. Points farther than `icp_max_distance` from any edge are
/// ignored. Iteration stops when the update is below tolerance, when a step
/// would raise the residual, or at the iteration cap. A corner of the lattice
/// cell around the result replaces it when its residual is no larger.
pub fn icp_align(points: &[(f64, f64)], edges: &EdgeMap, cfg: &LabelingConfig) -> Result<IcpResult> {
    if points.is_empty() {
        return Err(Error::invalid("ICP needs at least one point"));
    }
    let field = DistanceField::new(edges);
    if field.is_empty() {
        return Err(Error::invalid("ICP needs a non-empty edge map"));
    }
    icp_with_field(points, &field, cfg)
}

pub(crate) fn icp_with_field(points: &[(f64, f64)], field: &DistanceField, cfg: &LabelingConfig) -> Result<IcpResult> {
    let (mut dx, mut dy) = (0.0, 0.0);
    let mut history = Vec::new();
    let Some((mut residual, mut ux, mut uy)) = correspond(field, points, 0.0, 0.0, cfg.icp_max_distance) else {
        return Ok(IcpResult { dx, dy, residual: f64::NAN, iterations: 0, converged: false, residual_history: history });
    };
    history.push(residual);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.icp_max_iterations {
        iterations += 1;
        let step = ux.hypot(uy);
        match correspond(field, points, dx + ux, dy + uy, cfg.icp_max_distance) {
            Some((r, nx, ny)) if r <= residual => {
                dx += ux;
                dy += uy;
                residual = r;
                ux = nx;
                uy = ny;
                history.push(r);
            }
            _ => {
                converged = step < cfg.icp_tolerance;
                break;
            }
        }
        if step < cfg.icp_tolerance {
            converged = true;
            break;
        }
    }
    // Points and edges sit on the pixel lattice, where point-to-point ICP can
    // settle between pixels; a corner of the surrounding lattice cell wins if
    // it fits at least as well.
    if dx.fract() != 0.0 || dy.fract() != 0.0 {
        let mut best: Option<(f64, f64, f64)> = None;
        for cx in [dx.floor(), dx.ceil()] {
            for cy in [dy.floor(), dy.ceil()] {
                if let Some((r, _, _)) = correspond(field, points, cx, cy, cfg.icp_max_distance) {
                    if r <= residual && best.is_none_or(|b| r < b.0) {
                        best = Some((r, cx, cy));
                    }
                }
            }
        }
        if let Some((r, cx, cy)) = best {
            dx = cx;
            dy = cy;
            residual = r;
            history.push(r);
        }
    }
    Ok(IcpResult { dx, dy, residual, iterations, converged, residual_history: history })
}
