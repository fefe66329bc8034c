//! Axis-aligned boxes in pixel coordinates.
//!
//! A box `(left, top, width, height)` covers the continuous region
//! `[left, left + width) x [top, top + height)`; pixel `(x, y)` has its
//! center at `(x + 0.5, y + 0.5)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("box has negative size ({width} x {height})")]
    NegativeSize { width: f64, height: f64 },
    #[error("box has non-finite coordinates")]
    NonFinite,
    #[error("box height must be positive for the (cx, cy, a, h) form, got {0}")]
    DegenerateHeight(f64),
}

/// Box stored as top-left corner plus size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub left: f64,
    pub top: f64,
    pub width: f64,
    pub height: f64,
}

impl BoundingBox {
    /// Checked constructor; rejects negative sizes and non-finite values.
    pub fn new(left: f64, top: f64, width: f64, height: f64) -> Result<Self, GeometryError> {
        if ![left, top, width, height].iter().all(|v| v.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        if width < 0.0 || height < 0.0 {
            return Err(GeometryError::NegativeSize { width, height });
        }
        Ok(Self { left, top, width, height })
    }

    /// Unchecked constructor for internally produced boxes.
    pub const fn tlwh(left: f64, top: f64, width: f64, height: f64) -> Self {
        Self { left, top, width, height }
    }

    pub fn right(&self) -> f64 {
        self.left + self.width
    }

    pub fn bottom(&self) -> f64 {
        self.top + self.height
    }

    pub fn area(&self) -> f64 {
        self.width.max(0.0) * self.height.max(0.0)
    }

    pub fn center(&self) -> (f64, f64) {
        (self.left + self.width / 2.0, self.top + self.height / 2.0)
    }

    /// Zero-area boxes are representable but never carry appearance.
    pub fn is_degenerate(&self) -> bool {
        !(self.width > 0.0 && self.height > 0.0)
    }

    /// `(center-x, center-y, aspect w/h, height)`.
    pub fn to_cxcyah(&self) -> Result<[f64; 4], GeometryError> {
        if !(self.height > 0.0) || !self.height.is_finite() {
            return Err(GeometryError::DegenerateHeight(self.height));
        }
        let (cx, cy) = self.center();
        Ok([cx, cy, self.width / self.height, self.height])
    }

    pub fn from_cxcyah(m: [f64; 4]) -> Self {
        let [cx, cy, a, h] = m;
        let w = a * h;
        Self::tlwh(cx - w / 2.0, cy - h / 2.0, w, h)
    }

    /// Intersection with the image rectangle `[0, width) x [0, height)`.
    pub fn clamp_to(&self, width: f64, height: f64) -> Self {
        let l = self.left.clamp(0.0, width);
        let t = self.top.clamp(0.0, height);
        let r = self.right().clamp(0.0, width);
        let b = self.bottom().clamp(0.0, height);
        Self::tlwh(l, t, (r - l).max(0.0), (b - t).max(0.0))
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Self {
        Self::tlwh(self.left + dx, self.top + dy, self.width, self.height)
    }
}

/// Intersection over union; zero when the union is empty.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let iw = (a.right().min(b.right()) - a.left.max(b.left)).max(0.0);
    let ih = (a.bottom().min(b.bottom()) - a.top.max(b.top)).max(0.0);
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}
