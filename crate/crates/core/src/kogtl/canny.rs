//! Canny edge detection over 8-bit frames.

use super::{ApsFrame, EdgeMap, LabelingConfig};

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return vec![1.0];
    }
    let radius = (3.0 * sigma).ceil() as i64;
    let mut k: Vec<f64> = (-radius..=radius).map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp()).collect();
    let total: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= total);
    k
}

#[inline]
fn clamp(v: i64, hi: usize) -> usize {
    v.clamp(0, hi as i64 - 1) as usize
}

/// Separable Gaussian blur with replicated borders.
pub fn gaussian_blur(data: &[f64], width: usize, height: usize, sigma: f64) -> Vec<f64> {
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as i64;
    let mut tmp = vec![0.0; data.len()];
    for y in 0..height {
        for x in 0..width {
            let mut acc = 0.0;
            for (i, w) in k.iter().enumerate() {
                acc += w * data[y * width + clamp(x as i64 + i as i64 - r, width)];
            }
            tmp[y * width + x] = acc;
        }
    }
    let mut out = vec![0.0; data.len()];
    for y in 0..height {
        for x in 0..width {
            let mut acc = 0.0;
            for (i, w) in k.iter().enumerate() {
                acc += w * tmp[clamp(y as i64 + i as i64 - r, height) * width + x];
            }
            out[y * width + x] = acc;
        }
    }
    out
}

/// Sobel gradients `(gx, gy)` with replicated borders.
pub fn sobel(data: &[f64], width: usize, height: usize) -> (Vec<f64>, Vec<f64>) {
    let at = |x: i64, y: i64| data[clamp(y, height) * width + clamp(x, width)];
    let mut gx = vec![0.0; data.len()];
    let mut gy = vec![0.0; data.len()];
    for y in 0..height as i64 {
        for x in 0..width as i64 {
            let i = y as usize * width + x as usize;
            gx[i] = (at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x - 1, y) + at(x - 1, y + 1));
            gy[i] = (at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x, y - 1) + at(x + 1, y - 1));
        }
    }
    (gx, gy)
}

/// Blur, Sobel, non-maximum suppression and double-threshold hysteresis.
pub fn canny_edges(frame: &ApsFrame, cfg: &LabelingConfig) -> EdgeMap {
    let (w, h) = (frame.width as usize, frame.height as usize);
    let src: Vec<f64> = frame.data.iter().map(|&v| v as f64).collect();
    let blurred = gaussian_blur(&src, w, h, cfg.canny_sigma);
    let (gx, gy) = sobel(&blurred, w, h);
    let mag: Vec<f64> = gx.iter().zip(&gy).map(|(a, b)| a.hypot(*b)).collect();
    let max = mag.iter().copied().fold(0.0, f64::max);
    let mut mask = vec![false; w * h];
    if max <= 1e-9 {
        return EdgeMap { width: frame.width, height: frame.height, mask, t: frame.t };
    }

    // Thin to local maxima along the quantized gradient direction. A pixel
    // must be >= its predecessor and > its successor, so plateaus of two
    // equal pixels keep exactly one.
    let m = |x: i64, y: i64| {
        if x < 0 || y < 0 || x >= w as i64 || y >= h as i64 {
            0.0
        } else {
            mag[y as usize * w + x as usize]
        }
    };
    let mut thin = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let v = mag[i];
            if v <= 0.0 {
                continue;
            }
            let angle = gy[i].atan2(gx[i]).to_degrees().rem_euclid(180.0);
            let (dx, dy) = if !(22.5..157.5).contains(&angle) {
                (1, 0)
            } else if angle < 67.5 {
                (1, 1)
            } else if angle < 112.5 {
                (0, 1)
            } else {
                (-1, 1)
            };
            let (xi, yi) = (x as i64, y as i64);
            if v >= m(xi - dx, yi - dy) && v > m(xi + dx, yi + dy) {
                thin[i] = v;
            }
        }
    }

    let high = cfg.canny_high * max;
    let low = cfg.canny_low * max;
    let mut stack: Vec<usize> = Vec::new();
    for (i, &v) in thin.iter().enumerate() {
        if v >= high && v > 0.0 {
            mask[i] = true;
            stack.push(i);
        }
    }
    while let Some(i) = stack.pop() {
        let (x, y) = ((i % w) as i64, (i / w) as i64);
        for ny in y - 1..=y + 1 {
            for nx in x - 1..=x + 1 {
                if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if !mask[j] && thin[j] >= low && thin[j] > 0.0 {
                    mask[j] = true;
                    stack.push(j);
                }
            }
        }
    }
    EdgeMap { width: frame.width, height: frame.height, mask, t: frame.t }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_normalized_and_symmetric() {
        let k = gaussian_kernel(1.4);
        assert_eq!(k.len(), 11);
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for i in 0..k.len() {
            assert_eq!(k[i], k[k.len() - 1 - i]);
        }
    }

    #[test]
    fn sobel_on_ramp() {
        let (w, h) = (5, 5);
        let data: Vec<f64> = (0..w * h).map(|i| (i % w) as f64).collect();
        let (gx, gy) = sobel(&data, w, h);
        assert_eq!(gx[2 * w + 2], 8.0);
        assert_eq!(gy[2 * w + 2], 0.0);
    }
}
