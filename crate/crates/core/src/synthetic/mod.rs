//! Deterministic rendered sequences with ground truth, a scripted camera and
//! a detector noise model.
//!
//! World coordinates are the image coordinates of frame 1. Each frame's
//! camera pose `P_k` maps image coordinates to world coordinates and is the
//! composition of per-frame similarity steps `S_k(p) = s R(theta) p + t`,
//! so image content moves by `S_k^-1` between frames. Objects are
//! axis-aligned textured rectangles whose centers follow their world paths
//! through `P_k^-1` and whose sizes shrink by the cumulative camera scale.

mod presets;
mod render;
mod spec;

pub use presets::{preset, PRESET_NAMES};
pub use render::{generate, write_sequence, GeneratedSequence, ObjectState};
pub use spec::{CameraSegment, MotionPath, NoiseModel, ObjectSpec, Occluder, ScenarioSpec, SpecError, Texture};

use crate::image::GrayImage;
use crate::rng::splitmix64;

/// Smooth lattice noise in `[0, 1]` with unit lattice spacing.
pub fn value_noise(seed: u64, x: f64, y: f64) -> f64 {
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = smoothstep(x - x0);
    let fy = smoothstep(y - y0);
    let (ix, iy) = (x0 as i64, y0 as i64);
    let v = |dx: i64, dy: i64| lattice(seed, ix + dx, iy + dy);
    let top = v(0, 0) + (v(1, 0) - v(0, 0)) * fx;
    let bottom = v(0, 1) + (v(1, 1) - v(0, 1)) * fx;
    top + (bottom - top) * fy
}

fn smoothstep(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

fn lattice(seed: u64, ix: i64, iy: i64) -> f64 {
    let h = splitmix64(seed ^ (ix as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (iy as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F));
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Two-octave value noise in `[0, 255]`, lattice spacing `scale` pixels.
pub fn value_noise_gray(width: usize, height: usize, seed: u64, scale: f64) -> GrayImage {
    GrayImage::from_fn(width, height, |x, y| {
        let (u, v) = ((x as f64 + 0.5) / scale, (y as f64 + 0.5) / scale);
        let n = 0.65 * value_noise(seed, u, v) + 0.35 * value_noise(seed ^ 0xA5A5, 2.3 * u, 2.3 * v);
        (255.0 * n) as f32
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noise_is_bounded_and_continuous() {
        let mut prev = value_noise(9, 0.0, 3.3);
        for i in 1..2000 {
            let x = i as f64 * 0.01;
            let v = value_noise(9, x, 3.3);
            assert!((0.0..=1.0).contains(&v));
            assert!((v - prev).abs() < 0.05);
            prev = v;
        }
        assert_eq!(value_noise(9, 4.0, 5.0), lattice(9, 4, 5));
    }

    #[test]
    fn gray_noise_is_textured() {
        let g = value_noise_gray(64, 64, 1, 5.0);
        let (lo, hi) = g.data().iter().fold((f32::MAX, f32::MIN), |(a, b), &v| (a.min(v), b.max(v)));
        assert!(lo >= 0.0 && hi <= 255.0 && hi - lo > 100.0);
    }
}
