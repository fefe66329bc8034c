//! Camera motion between consecutive frames and its application to track
//! states with a uniform (aspect-preserving) scale.

mod affine;
mod features;
mod flow;

pub use affine::{
    constrain_scale, estimate_affine, fit_affine, AffineEstimate, AffineFallback, AffineTransform2D, PointPair,
    RansacParams,
};
pub use features::{detect_features, min_eigen_response, FeatureParams};
pub use flow::{track_features, FeatureTrackResult, FlowParams};

use crate::image::GrayImage;
use crate::kalman::{KalmanState, StateCovariance};
use crate::par::Execution;

/// Maps a Kalman state through a scale-constrained camera transform.
///
/// Center and planar velocity go through `A`, height and its velocity are
/// multiplied by the uniform scale, and the aspect entries are left alone,
/// so the aspect ratio is carried over bit for bit.
pub fn apply_to_track(m: &AffineTransform2D, state: &KalmanState) -> KalmanState {
    let (s, _) = m.column_scales();
    let a = &m.linear;
    let mut t = StateCovariance::identity();
    for base in [0usize, 4] {
        t[(base, base)] = a[0][0];
        t[(base, base + 1)] = a[0][1];
        t[(base + 1, base)] = a[1][0];
        t[(base + 1, base + 1)] = a[1][1];
        t[(base + 3, base + 3)] = s;
    }
    let mut mean = state.mean;
    let c = m.apply([state.mean[0], state.mean[1]]);
    let v = m.apply_linear([state.mean[4], state.mean[5]]);
    mean[0] = c[0];
    mean[1] = c[1];
    mean[3] = state.mean[3] * s;
    mean[4] = v[0];
    mean[5] = v[1];
    mean[7] = state.mean[7] * s;
    let cov = t * state.covariance * t.transpose();
    KalmanState { mean, covariance: (cov + cov.transpose()) * 0.5 }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotionParams {
    pub features: FeatureParams,
    pub flow: FlowParams,
    pub ransac: RansacParams,
    /// Integer factor the gray frames are shrunk by before feature work.
    pub downscale: usize,
}

impl Default for MotionParams {
    fn default() -> Self {
        Self {
            features: FeatureParams::default(),
            flow: FlowParams::default(),
            ransac: RansacParams::default(),
            downscale: 2,
        }
    }
}

/// Result of one frame-to-frame camera motion estimate.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct CameraMotion {
    /// Raw affine fit in full-resolution image coordinates.
    pub raw: AffineTransform2D,
    /// Uniform-scale version applied to tracks.
    pub constrained: AffineTransform2D,
    pub features: usize,
    pub tracked: usize,
    pub inlier_ratio: f64,
    pub fallback: Option<AffineFallback>,
}

impl CameraMotion {
    pub fn identity() -> Self {
        Self {
            raw: AffineTransform2D::IDENTITY,
            constrained: AffineTransform2D::IDENTITY,
            features: 0,
            tracked: 0,
            inlier_ratio: 0.0,
            fallback: None,
        }
    }
}

/// Array coordinates in a frame shrunk by `factor` to continuous
/// full-resolution coordinates (pixel centers at `i + 0.5`).
fn to_full_res(p: [f32; 2], factor: usize) -> [f64; 2] {
    let f = factor as f64;
    [(p[0] as f64 + 0.5) * f, (p[1] as f64 + 0.5) * f]
}

/// Estimates the transform taking frame `prev` coordinates to frame `cur`
/// coordinates. Both inputs are already-downscaled gray frames.
pub fn estimate_camera_motion(
    prev: &GrayImage,
    cur: &GrayImage,
    params: &MotionParams,
    seed: u64,
    exec: Execution,
) -> CameraMotion {
    let points = match detect_features(prev, &params.features) {
        Ok(p) => p,
        Err(_) => return CameraMotion::identity(),
    };
    if points.is_empty() {
        return CameraMotion { fallback: Some(AffineFallback::TooFewPairs), ..CameraMotion::identity() };
    }
    let tracked = match track_features(prev, cur, &points, &params.flow, exec) {
        Ok(t) => t,
        Err(_) => return CameraMotion::identity(),
    };
    let pairs: Vec<PointPair> = tracked
        .matched()
        .map(|(p, c)| (to_full_res(p, params.downscale), to_full_res(c, params.downscale)))
        .collect();
    let ransac = RansacParams { seed, ..params.ransac };
    let est = estimate_affine(&pairs, &ransac);
    CameraMotion {
        raw: est.transform,
        constrained: constrain_scale(&est.transform),
        features: points.len(),
        tracked: pairs.len(),
        inlier_ratio: est.inlier_ratio,
        fallback: est.fallback,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BoundingBox;
    use crate::kalman::{initiate, predict};

    #[test]
    fn identity_leaves_state() {
        let s = predict(&initiate([50., 60., 0.5, 20.]).unwrap());
        assert_eq!(apply_to_track(&AffineTransform2D::IDENTITY, &s), s);
    }

    #[test]
    fn uniform_scale_preserves_aspect_bits() {
        let s = initiate([50., 60., 0.5, 20.]).unwrap();
        let m = AffineTransform2D::similarity(1.2, 0.0, [0.0, 0.0]);
        let out = apply_to_track(&m, &s);
        assert_eq!(out.mean[2].to_bits(), 0.5f64.to_bits());
        assert!((out.mean[3] - 24.0).abs() < 1e-12);
        assert!((out.mean[0] - 60.0).abs() < 1e-12);
    }

    #[test]
    fn translation_moves_center_only() {
        let s = initiate([50., 60., 0.5, 20.]).unwrap();
        let m = AffineTransform2D::new([[1., 0.], [0., 1.]], [10., 0.]);
        let out = apply_to_track(&m, &s);
        let before = BoundingBox::from_cxcyah(s.measurement());
        let after = BoundingBox::from_cxcyah(out.measurement());
        assert_eq!(after.left, before.left + 10.0);
        assert_eq!((after.width, after.height), (before.width, before.height));
        assert_eq!(out.covariance, s.covariance);
    }

    #[test]
    fn rotation_rotates_velocity() {
        let mut s = initiate([0., 0., 1.0, 10.]).unwrap();
        s.mean[4] = 1.0;
        let m = AffineTransform2D::similarity(1.0, std::f64::consts::FRAC_PI_2, [0., 0.]);
        let out = apply_to_track(&m, &s);
        assert!(out.mean[4].abs() < 1e-12 && (out.mean[5] - 1.0).abs() < 1e-12);
    }
}
