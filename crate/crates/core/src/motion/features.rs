//! Minimum-eigenvalue ("good features to track") corner detection.

use crate::image::{GrayImage, ImageError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureParams {
    pub max_count: usize,
    /// Fraction of the strongest response a corner must reach.
    pub quality: f32,
    pub min_distance: f32,
    /// Side of the structure-tensor summation window.
    pub block_size: usize,
}

impl Default for FeatureParams {
    fn default() -> Self {
        Self { max_count: 200, quality: 0.01, min_distance: 8.0, block_size: 3 }
    }
}

/// Smaller eigenvalue of the gradient structure tensor at every pixel.
/// Pixels whose window touches the border get zero response.
pub fn min_eigen_response(img: &GrayImage, block_size: usize) -> GrayImage {
    let (w, h) = (img.width(), img.height());
    let mut ixx = vec![0f32; w * h];
    let mut ixy = vec![0f32; w * h];
    let mut iyy = vec![0f32; w * h];
    for y in 1..h.saturating_sub(1) {
        for x in 1..w.saturating_sub(1) {
            let p = |dx: isize, dy: isize| img.at((x as isize + dx) as usize, (y as isize + dy) as usize);
            // Sobel, scaled to gray levels per pixel
            let gx = ((p(1, -1) + 2.0 * p(1, 0) + p(1, 1)) - (p(-1, -1) + 2.0 * p(-1, 0) + p(-1, 1))) / 8.0;
            let gy = ((p(-1, 1) + 2.0 * p(0, 1) + p(1, 1)) - (p(-1, -1) + 2.0 * p(0, -1) + p(1, -1))) / 8.0;
            let i = y * w + x;
            ixx[i] = gx * gx;
            ixy[i] = gx * gy;
            iyy[i] = gy * gy;
        }
    }
    let r = (block_size / 2) as isize;
    let margin = (r + 1) as usize;
    GrayImage::from_fn(w, h, |x, y| {
        if x < margin || y < margin || x + margin >= w || y + margin >= h {
            return 0.0;
        }
        let (mut a, mut b, mut c) = (0f32, 0f32, 0f32);
        for dy in -r..=r {
            for dx in -r..=r {
                let i = (y as isize + dy) as usize * w + (x as isize + dx) as usize;
                a += ixx[i];
                b += ixy[i];
                c += iyy[i];
            }
        }
        let half_tr = (a + c) / 2.0;
        let disc = (((a - c) / 2.0).powi(2) + b * b).sqrt();
        (half_tr - disc).max(0.0)
    })
}

/// Corners ranked by response, thinned so no two lie closer than
/// `min_distance`, at most `max_count`. Positions are array coordinates.
pub fn detect_features(img: &GrayImage, params: &FeatureParams) -> Result<Vec<[f32; 2]>, ImageError> {
    if img.is_empty() {
        return Err(ImageError::Empty);
    }
    let resp = min_eigen_response(img, params.block_size);
    let max = resp.data().iter().copied().fold(0f32, f32::max);
    if !(max > 1e-6) {
        return Ok(Vec::new());
    }
    let thresh = max * params.quality;
    let (w, h) = (img.width(), img.height());
    let mut candidates: Vec<(f32, usize, usize)> = Vec::new();
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let v = resp.at(x, y);
            if v < thresh || v <= 0.0 {
                continue;
            }
            let is_max = (-1isize..=1).all(|dy| {
                (-1isize..=1).all(|dx| resp.at((x as isize + dx) as usize, (y as isize + dy) as usize) <= v)
            });
            if is_max {
                candidates.push((v, x, y));
            }
        }
    }
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.2.cmp(&b.2)).then(a.1.cmp(&b.1)));

    let cell = params.min_distance.max(1.0);
    let gw = (w as f32 / cell).ceil() as usize + 1;
    let gh = (h as f32 / cell).ceil() as usize + 1;
    let mut grid: Vec<Vec<[f32; 2]>> = vec![Vec::new(); gw * gh];
    let min_d2 = params.min_distance * params.min_distance;
    let mut out = Vec::new();
    for (_, x, y) in candidates {
        if out.len() >= params.max_count {
            break;
        }
        let p = [x as f32, y as f32];
        let (cx, cy) = ((p[0] / cell) as usize, (p[1] / cell) as usize);
        let mut ok = true;
        'search: for gy in cy.saturating_sub(1)..=(cy + 1).min(gh - 1) {
            for gx in cx.saturating_sub(1)..=(cx + 1).min(gw - 1) {
                for q in &grid[gy * gw + gx] {
                    let d2 = (q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2);
                    if d2 < min_d2 {
                        ok = false;
                        break 'search;
                    }
                }
            }
        }
        if ok {
            grid[cy * gw + cx].push(p);
            out.push(p);
        }
    }
    Ok(out)
}
