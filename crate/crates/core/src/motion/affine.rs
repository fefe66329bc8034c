use crate::rng::XorShift64Star;
use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use serde::Serialize;

/// 2x3 affine map `p -> A p + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AffineTransform2D {
    /// Row-major `[[a00, a01], [a10, a11]]`.
    pub linear: [[f64; 2]; 2],
    pub translation: [f64; 2],
}

impl Default for AffineTransform2D {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl AffineTransform2D {
    pub const IDENTITY: Self = Self { linear: [[1.0, 0.0], [0.0, 1.0]], translation: [0.0, 0.0] };

    pub fn new(linear: [[f64; 2]; 2], translation: [f64; 2]) -> Self {
        Self { linear, translation }
    }

    /// `p -> s R(theta) p + t`.
    pub fn similarity(scale: f64, theta_rad: f64, t: [f64; 2]) -> Self {
        let (s, c) = theta_rad.sin_cos();
        Self::new([[scale * c, -scale * s], [scale * s, scale * c]], t)
    }

    pub fn matrix(&self) -> Matrix2<f64> {
        Matrix2::new(self.linear[0][0], self.linear[0][1], self.linear[1][0], self.linear[1][1])
    }

    pub fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        let a = &self.linear;
        [
            a[0][0] * p[0] + a[0][1] * p[1] + self.translation[0],
            a[1][0] * p[0] + a[1][1] * p[1] + self.translation[1],
        ]
    }

    pub fn apply_linear(&self, v: [f64; 2]) -> [f64; 2] {
        let a = &self.linear;
        [a[0][0] * v[0] + a[0][1] * v[1], a[1][0] * v[0] + a[1][1] * v[1]]
    }

    pub fn determinant(&self) -> f64 {
        self.linear[0][0] * self.linear[1][1] - self.linear[0][1] * self.linear[1][0]
    }

    /// `self` after `other`: `p -> self(other(p))`.
    pub fn compose(&self, other: &Self) -> Self {
        let m = self.matrix() * other.matrix();
        let t = self.matrix() * Vector2::from(other.translation) + Vector2::from(self.translation);
        Self::new([[m[(0, 0)], m[(0, 1)]], [m[(1, 0)], m[(1, 1)]]], [t[0], t[1]])
    }

    pub fn inverse(&self) -> Option<Self> {
        let inv = self.matrix().try_inverse()?;
        let t = -(inv * Vector2::from(self.translation));
        Some(Self::new([[inv[(0, 0)], inv[(0, 1)]], [inv[(1, 0)], inv[(1, 1)]]], [t[0], t[1]]))
    }

    /// Column norms `(|A e1|, |A e2|)`, the per-axis scale factors.
    pub fn column_scales(&self) -> (f64, f64) {
        let a = &self.linear;
        (a[0][0].hypot(a[1][0]), a[0][1].hypot(a[1][1]))
    }

    /// Largest absolute difference over all six parameters.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let mut d: f64 = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                d = d.max((self.linear[i][j] - other.linear[i][j]).abs());
            }
            d = d.max((self.translation[i] - other.translation[i]).abs());
        }
        d
    }
}

/// Why an estimate fell back to the identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum AffineFallback {
    TooFewPairs,
    Collinear,
    TooFewInliers,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AffineEstimate {
    pub transform: AffineTransform2D,
    pub inliers: usize,
    pub inlier_ratio: f64,
    pub fallback: Option<AffineFallback>,
}

impl AffineEstimate {
    fn identity(fallback: AffineFallback) -> Self {
        Self { transform: AffineTransform2D::IDENTITY, inliers: 0, inlier_ratio: 0.0, fallback: Some(fallback) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RansacParams {
    pub iterations: usize,
    /// Reprojection distance in pixels.
    pub inlier_threshold: f64,
    pub seed: u64,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self { iterations: 100, inlier_threshold: 3.0, seed: 0x5F7A_C0DE }
    }
}

/// A correspondence `src -> dst`.
pub type PointPair = ([f64; 2], [f64; 2]);

fn residual(m: &AffineTransform2D, (src, dst): &PointPair) -> f64 {
    let p = m.apply(*src);
    (p[0] - dst[0]).hypot(p[1] - dst[1])
}

/// Least-squares affine fit over the given pairs, solved on centered
/// coordinates. `None` when the source points are (near) collinear.
pub fn fit_affine(pairs: &[PointPair]) -> Option<AffineTransform2D> {
    if pairs.len() < 3 {
        return None;
    }
    let n = pairs.len() as f64;
    let (mut sx, mut sy, mut dx, mut dy) = (0.0, 0.0, 0.0, 0.0);
    for (s, d) in pairs {
        sx += s[0];
        sy += s[1];
        dx += d[0];
        dy += d[1];
    }
    let (sx, sy, dx, dy) = (sx / n, sy / n, dx / n, dy / n);
    let mut cov = Matrix2::zeros();
    let mut rhs_x = Vector2::zeros();
    let mut rhs_y = Vector2::zeros();
    for (s, d) in pairs {
        let u = Vector2::new(s[0] - sx, s[1] - sy);
        cov += u * u.transpose();
        rhs_x += u * (d[0] - dx);
        rhs_y += u * (d[1] - dy);
    }
    if is_degenerate(&cov) {
        return None;
    }
    let inv = cov.try_inverse()?;
    let row_x = inv * rhs_x;
    let row_y = inv * rhs_y;
    let linear = [[row_x[0], row_x[1]], [row_y[0], row_y[1]]];
    let t = [dx - row_x[0] * sx - row_x[1] * sy, dy - row_y[0] * sx - row_y[1] * sy];
    Some(AffineTransform2D::new(linear, t))
}

fn is_degenerate(cov: &Matrix2<f64>) -> bool {
    let tr = cov.trace();
    let det = cov.determinant();
    // smallest eigenvalue relative to the largest
    let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
    let lmax = tr / 2.0 + disc;
    let lmin = tr / 2.0 - disc;
    !(lmax > 0.0) || lmin <= 1e-9 * lmax
}

/// Exact affine through three correspondences.
fn affine_from_three(p: [&PointPair; 3]) -> Option<AffineTransform2D> {
    let m = Matrix3::new(
        p[0].0[0], p[0].0[1], 1.0, //
        p[1].0[0], p[1].0[1], 1.0, //
        p[2].0[0], p[2].0[1], 1.0,
    );
    let area = m.determinant();
    if area.abs() < 1e-6 {
        return None;
    }
    let lu = m.lu();
    let bx = lu.solve(&Vector3::new(p[0].1[0], p[1].1[0], p[2].1[0]))?;
    let by = lu.solve(&Vector3::new(p[0].1[1], p[1].1[1], p[2].1[1]))?;
    Some(AffineTransform2D::new([[bx[0], bx[1]], [by[0], by[1]]], [bx[2], by[2]]))
}

/// RANSAC over 3-point samples followed by least-squares refits on the
/// consensus set. The final refits tighten the inlier threshold to a robust
/// multiple of the median residual, capped at the RANSAC threshold.
pub fn estimate_affine(pairs: &[PointPair], params: &RansacParams) -> AffineEstimate {
    if pairs.len() < 3 {
        return AffineEstimate::identity(AffineFallback::TooFewPairs);
    }
    let all_src: Vec<PointPair> = pairs.iter().map(|(s, _)| (*s, *s)).collect();
    if fit_affine(&all_src).is_none() {
        return AffineEstimate::identity(AffineFallback::Collinear);
    }

    let mut rng = XorShift64Star::new(params.seed);
    let mut best: Option<(usize, AffineTransform2D)> = None;
    let n = pairs.len();
    for _ in 0..params.iterations {
        let i = rng.below(n);
        let mut j = rng.below(n - 1);
        if j >= i {
            j += 1;
        }
        let mut k = rng.below(n - 2);
        for taken in [i.min(j), i.max(j)] {
            if k >= taken {
                k += 1;
            }
        }
        let Some(model) = affine_from_three([&pairs[i], &pairs[j], &pairs[k]]) else {
            continue;
        };
        let count = pairs.iter().filter(|p| residual(&model, p) <= params.inlier_threshold).count();
        if best.as_ref().is_none_or(|(c, _)| count > *c) {
            best = Some((count, model));
        }
    }
    let Some((count, mut model)) = best else {
        return AffineEstimate::identity(AffineFallback::Collinear);
    };
    if count < 3 {
        return AffineEstimate::identity(AffineFallback::TooFewInliers);
    }

    let mut threshold = params.inlier_threshold;
    for _ in 0..4 {
        let inliers: Vec<PointPair> = pairs.iter().filter(|p| residual(&model, p) <= threshold).copied().collect();
        let Some(refit) = fit_affine(&inliers) else {
            break;
        };
        model = refit;
        let mut res: Vec<f64> = inliers.iter().map(|p| residual(&model, p)).collect();
        res.sort_by(f64::total_cmp);
        let sigma = 1.4826 * res[res.len() / 2];
        threshold = (3.0 * sigma).clamp(1e-6, params.inlier_threshold);
    }
    let final_count = pairs.iter().filter(|p| residual(&model, p) <= threshold).count();
    if final_count < 3 {
        return AffineEstimate::identity(AffineFallback::TooFewInliers);
    }
    AffineEstimate {
        transform: model,
        inliers: final_count,
        inlier_ratio: final_count as f64 / n as f64,
        fallback: None,
    }
}

/// Replaces the two axis scales with the larger one so that boxes scale
/// uniformly: `A' = A diag(s/sx, s/sy)` with `s = max(sx, sy)`.
pub fn constrain_scale(m: &AffineTransform2D) -> AffineTransform2D {
    let (sx, sy) = m.column_scales();
    if !(sx > 0.0 && sy > 0.0) || !sx.is_finite() || !sy.is_finite() {
        return AffineTransform2D::IDENTITY;
    }
    let s = sx.max(sy);
    let (fx, fy) = (s / sx, s / sy);
    let a = &m.linear;
    AffineTransform2D::new(
        [[a[0][0] * fx, a[0][1] * fy], [a[1][0] * fx, a[1][1] * fy]],
        m.translation,
    )
}
