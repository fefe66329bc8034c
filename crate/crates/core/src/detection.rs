//! Per-frame detector output.

use crate::geometry::BoundingBox;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DetectionError {
    #[error("detection score {0} outside [0, 1]")]
    ScoreOutOfRange(f64),
    #[error("embedding norm {0} is not 1")]
    EmbeddingNotUnit(f64),
}

/// Unit-norm appearance vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding(Vec<f64>);

impl Embedding {
    /// Normalizes `v`; `None` for a zero or non-finite vector.
    pub fn normalized(v: Vec<f64>) -> Option<Self> {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(n.is_finite() && n > 0.0) {
            return None;
        }
        Some(Self(v.into_iter().map(|x| x / n).collect()))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    /// 1-based frame index.
    pub frame: u32,
    pub bbox: BoundingBox,
    pub score: f64,
    pub class_id: i32,
    pub embedding: Option<Embedding>,
}

impl Detection {
    pub fn new(frame: u32, bbox: BoundingBox, score: f64, class_id: i32) -> Result<Self, DetectionError> {
        if !(0.0..=1.0).contains(&score) {
            return Err(DetectionError::ScoreOutOfRange(score));
        }
        Ok(Self { frame, bbox, score, class_id, embedding: None })
    }

    pub fn with_embedding(mut self, embedding: Embedding) -> Result<Self, DetectionError> {
        let n = embedding.norm();
        if (n - 1.0).abs() > 1e-6 {
            return Err(DetectionError::EmbeddingNotUnit(n));
        }
        self.embedding = Some(embedding);
        Ok(self)
    }
}
