//! Pyramidal Lucas-Kanade sparse optical flow.

use crate::image::{GrayImage, ImageError};
use crate::par::{self, Execution};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowParams {
    /// Half-width of the square integration window (10 gives 21x21).
    pub win_radius: usize,
    /// Total pyramid levels including the full-resolution one.
    pub levels: usize,
    pub max_iterations: usize,
    /// Stop once the update is shorter than this (pixels).
    pub epsilon: f32,
    /// Minimum eigenvalue of the window-averaged gradient matrix.
    pub min_eigen: f32,
    /// Mean absolute intensity residual above which a point is lost.
    pub max_residual: f32,
}

impl Default for FlowParams {
    fn default() -> Self {
        Self { win_radius: 10, levels: 3, max_iterations: 30, epsilon: 0.01, min_eigen: 1e-2, max_residual: 20.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTrackResult {
    pub prev_points: Vec<[f32; 2]>,
    pub cur_points: Vec<[f32; 2]>,
    pub status: Vec<bool>,
}

impl FeatureTrackResult {
    pub fn matched(&self) -> impl Iterator<Item = ([f32; 2], [f32; 2])> + '_ {
        self.prev_points
            .iter()
            .zip(&self.cur_points)
            .zip(&self.status)
            .filter(|(_, &ok)| ok)
            .map(|((p, c), _)| (*p, *c))
    }
}

struct Level {
    img: GrayImage,
    gx: GrayImage,
    gy: GrayImage,
}

fn scharr(img: &GrayImage) -> (GrayImage, GrayImage) {
    let (w, h) = (img.width(), img.height());
    let p = |x: usize, y: usize, dx: isize, dy: isize| img.at_clamped(x as isize + dx, y as isize + dy);
    let gx = GrayImage::from_fn(w, h, |x, y| {
        (3.0 * (p(x, y, 1, -1) - p(x, y, -1, -1))
            + 10.0 * (p(x, y, 1, 0) - p(x, y, -1, 0))
            + 3.0 * (p(x, y, 1, 1) - p(x, y, -1, 1)))
            / 32.0
    });
    let gy = GrayImage::from_fn(w, h, |x, y| {
        (3.0 * (p(x, y, -1, 1) - p(x, y, -1, -1))
            + 10.0 * (p(x, y, 0, 1) - p(x, y, 0, -1))
            + 3.0 * (p(x, y, 1, 1) - p(x, y, 1, -1)))
            / 32.0
    });
    (gx, gy)
}

fn build_levels(img: &GrayImage, levels: usize, with_gradients: bool) -> Vec<Level> {
    img.pyramid(levels)
        .into_iter()
        .map(|img| {
            let (gx, gy) = if with_gradients {
                scharr(&img)
            } else {
                (GrayImage::new(0, 0, vec![]), GrayImage::new(0, 0, vec![]))
            };
            Level { img, gx, gy }
        })
        .collect()
}

fn inside(img: &GrayImage, p: [f32; 2]) -> bool {
    p[0] >= 0.0 && p[1] >= 0.0 && p[0] <= (img.width() - 1) as f32 && p[1] <= (img.height() - 1) as f32
}

fn track_point(prev: &[Level], cur: &[Level], p: [f32; 2], params: &FlowParams) -> Option<[f32; 2]> {
    let r = params.win_radius as isize;
    let n = ((2 * r + 1) * (2 * r + 1)) as f32;
    let mut guess = [0f32; 2];
    let mut template: Vec<(f32, f32, f32)> = Vec::with_capacity(n as usize);
    for lvl in (0..prev.len()).rev() {
        let scale = (1u32 << lvl) as f32;
        let (pi, ci) = (&prev[lvl], &cur[lvl]);
        let pl = [p[0] / scale, p[1] / scale];

        template.clear();
        let (mut gxx, mut gxy, mut gyy) = (0f32, 0f32, 0f32);
        for dy in -r..=r {
            for dx in -r..=r {
                let (x, y) = (pl[0] + dx as f32, pl[1] + dy as f32);
                let ix = pi.gx.bilinear(x, y);
                let iy = pi.gy.bilinear(x, y);
                template.push((pi.img.bilinear(x, y), ix, iy));
                gxx += ix * ix;
                gxy += ix * iy;
                gyy += iy * iy;
            }
        }
        let half_tr = (gxx + gyy) / 2.0;
        let min_eig = half_tr - (((gxx - gyy) / 2.0).powi(2) + gxy * gxy).sqrt();
        if min_eig / n < params.min_eigen {
            return None;
        }
        let det = gxx * gyy - gxy * gxy;

        let mut v = [0f32; 2];
        for _ in 0..params.max_iterations {
            let q = [pl[0] + guess[0] + v[0], pl[1] + guess[1] + v[1]];
            if q[0] < -(r as f32) || q[1] < -(r as f32)
                || q[0] > (ci.img.width() as isize + r) as f32
                || q[1] > (ci.img.height() as isize + r) as f32
            {
                return None;
            }
            let (mut bx, mut by) = (0f32, 0f32);
            let mut k = 0;
            for dy in -r..=r {
                for dx in -r..=r {
                    let j = ci.img.bilinear(q[0] + dx as f32, q[1] + dy as f32);
                    let (i, ix, iy) = template[k];
                    let diff = i - j;
                    bx += diff * ix;
                    by += diff * iy;
                    k += 1;
                }
            }
            let eta = [(gyy * bx - gxy * by) / det, (gxx * by - gxy * bx) / det];
            v[0] += eta[0];
            v[1] += eta[1];
            if eta[0].hypot(eta[1]) < params.epsilon {
                break;
            }
        }
        let total = [guess[0] + v[0], guess[1] + v[1]];
        guess = if lvl > 0 { [2.0 * total[0], 2.0 * total[1]] } else { total };
    }

    let q = [p[0] + guess[0], p[1] + guess[1]];
    if !q[0].is_finite() || !q[1].is_finite() || !inside(&cur[0].img, q) {
        return None;
    }
    let mut err = 0f32;
    for dy in -r..=r {
        for dx in -r..=r {
            let a = prev[0].img.bilinear(p[0] + dx as f32, p[1] + dy as f32);
            let b = cur[0].img.bilinear(q[0] + dx as f32, q[1] + dy as f32);
            err += (a - b).abs();
        }
    }
    if err / n > params.max_residual {
        return None;
    }
    Some(q)
}

/// Tracks `points` from `prev` into `cur`. Lost points keep their previous
/// position in `cur_points` and have `status = false`.
pub fn track_features(
    prev: &GrayImage,
    cur: &GrayImage,
    points: &[[f32; 2]],
    params: &FlowParams,
    exec: Execution,
) -> Result<FeatureTrackResult, ImageError> {
    if (prev.width(), prev.height()) != (cur.width(), cur.height()) {
        return Err(ImageError::DimensionMismatch((prev.width(), prev.height()), (cur.width(), cur.height())));
    }
    if prev.is_empty() {
        return Err(ImageError::Empty);
    }
    let prev_levels = build_levels(prev, params.levels, true);
    let cur_levels = build_levels(cur, prev_levels.len(), false);
    let tracked = par::map_slice(exec, points, |&p| {
        if !inside(prev, p) {
            return None;
        }
        track_point(&prev_levels, &cur_levels, p, params)
    });
    let mut cur_points = Vec::with_capacity(points.len());
    let mut status = Vec::with_capacity(points.len());
    for (p, t) in points.iter().zip(tracked) {
        cur_points.push(t.unwrap_or(*p));
        status.push(t.is_some());
    }
    Ok(FeatureTrackResult { prev_points: points.to_vec(), cur_points, status })
}
