//! Similarity fusion, cost matrices, and optimal assignment for the two
//! association stages.

mod hungarian;

pub use hungarian::hungarian;

use crate::appearance::{embedding_similarity, hist_similarity, patch_similarity, ColorHistogram, Patch};
use crate::config::TrackerConfig;
use crate::detection::Embedding;
use crate::geometry::{iou, BoundingBox};
use crate::par::{self, Execution};

/// Marker for a pair that must never be matched.
pub const FORBIDDEN: f64 = f64::INFINITY;

/// Dense `rows x cols` cost matrix (tracks x detections).
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), rows * cols, "cost matrix shape");
        Self { rows, cols, values }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged cost matrix");
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.cols + c]
    }

    pub fn is_forbidden(&self, r: usize, c: usize) -> bool {
        !self.get(r, c).is_finite()
    }
}

/// Matches plus the leftovers on each side; together they partition the
/// rows and columns.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Assignment {
    pub matches: Vec<(usize, usize)>,
    pub unmatched_tracks: Vec<usize>,
    pub unmatched_detections: Vec<usize>,
}

impl Assignment {
    pub fn total_cost(&self, cost: &CostMatrix) -> f64 {
        self.matches.iter().map(|&(r, c)| cost.get(r, c)).sum()
    }
}

/// Solves and then demotes matches whose similarity `1 - cost` is below
/// `min_similarity`.
pub fn associate(cost: &CostMatrix, min_similarity: f64) -> Assignment {
    let mut a = hungarian(cost);
    let (keep, drop): (Vec<_>, Vec<_>) =
        a.matches.iter().partition(|&&(r, c)| 1.0 - cost.get(r, c) >= min_similarity);
    for (r, c) in drop {
        a.unmatched_tracks.push(r);
        a.unmatched_detections.push(c);
    }
    a.matches = keep;
    a.unmatched_tracks.sort_unstable();
    a.unmatched_detections.sort_unstable();
    a
}

/// First-stage similarity: IoU times embedding similarity, or IoU alone
/// when either side has no embedding.
pub fn fuse_first(iou: f64, embed_sim: Option<f64>) -> f64 {
    match embed_sim {
        Some(e) => iou * e,
        None => iou,
    }
}

/// Second-stage similarity: IoU x histogram similarity x scaled-MSE similarity.
pub fn fuse_second(iou: f64, hist_sim: f64, mse_sim: f64) -> f64 {
    iou * hist_sim * mse_sim
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    First,
    Second,
}

/// What the cost builder needs to know about a track.
#[derive(Debug, Clone, Copy)]
pub struct TrackCue<'a> {
    pub bbox: BoundingBox,
    pub class_id: i32,
    pub histogram: Option<&'a ColorHistogram>,
    pub patch: Option<&'a Patch>,
    pub embedding: Option<&'a Embedding>,
}

/// What the cost builder needs to know about a detection.
#[derive(Debug, Clone, Copy)]
pub struct DetectionCue<'a> {
    pub bbox: BoundingBox,
    pub class_id: i32,
    pub histogram: Option<&'a ColorHistogram>,
    pub patch: Option<&'a Patch>,
    pub embedding: Option<&'a Embedding>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageMatrix {
    pub cost: CostMatrix,
    /// Entries whose similarity used an embedding comparison.
    pub embedding_evaluations: usize,
}

/// Builds `1 - fused similarity`, forbidding cross-class pairs and pairs
/// below the stage's IoU gate. The second stage fuses histogram and MSE
/// cues only when `traditional_second_assoc` is set.
pub fn build_stage_matrix(
    tracks: &[TrackCue<'_>],
    detections: &[DetectionCue<'_>],
    stage: Stage,
    cfg: &TrackerConfig,
    exec: Execution,
) -> StageMatrix {
    let (rows, cols) = (tracks.len(), detections.len());
    let gate = match stage {
        Stage::First => cfg.iou_gate_first,
        Stage::Second => cfg.iou_gate_second,
    };
    let entries = par::map_range(exec, rows * cols, |k| {
        let (t, d) = (&tracks[k / cols], &detections[k % cols]);
        if t.class_id != d.class_id {
            return (FORBIDDEN, false);
        }
        let overlap = iou(&t.bbox, &d.bbox);
        if overlap < gate || overlap <= 0.0 {
            return (FORBIDDEN, false);
        }
        let (sim, used_embedding) = match stage {
            Stage::First => match (t.embedding, d.embedding) {
                (Some(a), Some(b)) => (fuse_first(overlap, Some(embedding_similarity(a.as_slice(), b.as_slice()))), true),
                _ => (fuse_first(overlap, None), false),
            },
            Stage::Second if cfg.traditional_second_assoc => {
                let h = match (t.histogram, d.histogram) {
                    (Some(a), Some(b)) => hist_similarity(a, b),
                    _ => 0.0,
                };
                let m = match (t.patch, d.patch) {
                    (Some(a), Some(b)) => patch_similarity(a, b),
                    _ => 0.0,
                };
                (fuse_second(overlap, h, m), false)
            }
            Stage::Second => (overlap, false),
        };
        ((1.0 - sim).clamp(0.0, 1.0), used_embedding)
    });
    let embedding_evaluations = entries.iter().filter(|e| e.1).count();
    StageMatrix {
        cost: CostMatrix::new(rows, cols, entries.into_iter().map(|e| e.0).collect()),
        embedding_evaluations,
    }
}
