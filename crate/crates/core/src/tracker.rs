//! Per-frame tracking loop: confidence split, camera-motion compensation,
//! two association stages, track lifecycle and the two initiation paths.

use crate::appearance::{
    color_histogram, embedding_similarity, extract_crop, handcrafted_embedding, AppearanceMemory, ColorHistogram,
    Patch,
};
use crate::association::{associate, build_stage_matrix, Assignment, DetectionCue, Stage, TrackCue};
use crate::config::TrackerConfig;
use crate::detection::{Detection, Embedding};
use crate::geometry::BoundingBox;
use crate::image::{GrayImage, RawImage};
use crate::kalman::{self, KalmanError};
use crate::motion::{apply_to_track, estimate_camera_motion, CameraMotion, MotionParams};
use crate::par::{self, Execution};
use crate::rng;
use crate::track::{Track, TrackStatus};
use serde::Serialize;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrackerError {
    #[error("frame {got} does not follow frame {previous}")]
    OutOfOrder { previous: u32, got: u32 },
    #[error("detection for frame {got} passed to frame {expected}")]
    WrongFrame { expected: u32, got: u32 },
    #[error("no image for frame {0}")]
    MissingImage(u32),
    #[error("frame {frame}: {source}")]
    Kalman { frame: u32, source: KalmanError },
    #[error("frame {frame}: {message}")]
    Frame { frame: u32, message: String },
}

/// Where detection embeddings come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EmbeddingSource {
    /// No embeddings: the first association is IoU only.
    Off,
    /// Use `Detection::embedding` as supplied (e.g. from an embedding file).
    Provided,
    /// Grid color-histogram descriptor computed from each crop.
    #[default]
    HandCrafted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackerOptions {
    pub execution: Execution,
    pub embeddings: EmbeddingSource,
    pub motion: MotionParams,
}

impl Default for TrackerOptions {
    fn default() -> Self {
        Self { execution: Execution::Parallel, embeddings: EmbeddingSource::HandCrafted, motion: MotionParams::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrackOutput {
    pub track_id: u64,
    pub class_id: i32,
    pub bbox: BoundingBox,
    pub score: f64,
}

/// A track's state after prediction and camera compensation, before
/// association.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictedBox {
    pub track_id: u64,
    pub class_id: i32,
    pub status: TrackStatus,
    pub bbox: BoundingBox,
    pub aspect_before_mc: f64,
    pub aspect_after_mc: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct FrameDiagnostics {
    pub n_high: usize,
    pub n_low: usize,
    pub n_matched_first: usize,
    pub n_matched_second: usize,
    pub n_new_high: usize,
    pub n_new_low: usize,
    pub n_removed: usize,
    /// Cost entries of the first stage that consulted an embedding.
    pub first_stage_embedding_evaluations: usize,
    pub motion: Option<CameraMotion>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrameResult {
    pub frame: u32,
    /// Tracks matched or started in this frame, ordered by id.
    pub outputs: Vec<TrackOutput>,
    pub diagnostics: FrameDiagnostics,
    pub predictions: Vec<PredictedBox>,
}

struct DetFeatures {
    histogram: Option<ColorHistogram>,
    patch: Option<Patch>,
    embedding: Option<Embedding>,
}

pub struct Tracker {
    cfg: TrackerConfig,
    options: TrackerOptions,
    tracks: Vec<Track>,
    next_id: u64,
    last_frame: Option<u32>,
    prev_gray: Option<GrayImage>,
    removed: Vec<u64>,
}

const RANSAC_SEED: u64 = 0x5F7A_C0DE;

impl Tracker {
    pub fn new(cfg: TrackerConfig, options: TrackerOptions) -> Self {
        Self { cfg, options, tracks: Vec::new(), next_id: 1, last_frame: None, prev_gray: None, removed: Vec::new() }
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.cfg
    }

    /// Active and lost tracks.
    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    /// Ids of removed tracks in removal order.
    pub fn removed_ids(&self) -> &[u64] {
        &self.removed
    }

    fn features(&self, image: Option<&RawImage>, dets: &[Detection]) -> Vec<DetFeatures> {
        let cfg = &self.cfg;
        let source = self.options.embeddings;
        par::map_slice(self.options.execution, dets, |d| {
            let crop = image.and_then(|img| extract_crop(img, &d.bbox));
            let histogram = crop.as_ref().map(|c| color_histogram(c, cfg.hist_bins_per_channel));
            let patch = crop.as_ref().and_then(|c| Patch::from_crop(c, cfg.mse_patch_size));
            let embedding = match source {
                EmbeddingSource::Off => None,
                EmbeddingSource::Provided => d.embedding.clone(),
                EmbeddingSource::HandCrafted => crop.as_ref().and_then(handcrafted_embedding),
            };
            DetFeatures { histogram, patch, embedding }
        })
    }

    fn estimate_motion(&mut self, frame: u32, image: Option<&RawImage>) -> Option<CameraMotion> {
        if !self.cfg.mc_enabled {
            return None;
        }
        let image = image?;
        let gray = image.to_gray().downscale(self.cfg.mc_downscale);
        let motion = match &self.prev_gray {
            Some(prev) if prev.width() == gray.width() && prev.height() == gray.height() => {
                let params = MotionParams { downscale: self.cfg.mc_downscale, ..self.options.motion.clone() };
                let seed = rng::mix(RANSAC_SEED, &[frame as u64]);
                estimate_camera_motion(prev, &gray, &params, seed, self.options.execution)
            }
            _ => CameraMotion::identity(),
        };
        self.prev_gray = Some(gray);
        Some(motion)
    }

    fn cues<'a>(tracks: &'a [Track], idx: &[usize]) -> Vec<TrackCue<'a>> {
        idx.iter()
            .map(|&i| {
                let t = &tracks[i];
                TrackCue {
                    bbox: t.state_box(),
                    class_id: t.class_id,
                    histogram: t.appearance.histogram.as_ref(),
                    patch: t.appearance.patch.as_ref(),
                    embedding: t.appearance.embedding.as_ref(),
                }
            })
            .collect()
    }

    fn det_cues<'a>(dets: &'a [Detection], feats: &'a [DetFeatures], idx: &[usize]) -> Vec<DetectionCue<'a>> {
        idx.iter()
            .map(|&i| DetectionCue {
                bbox: dets[i].bbox,
                class_id: dets[i].class_id,
                histogram: feats[i].histogram.as_ref(),
                patch: feats[i].patch.as_ref(),
                embedding: feats[i].embedding.as_ref(),
            })
            .collect()
    }

    fn run_stage(
        &self,
        track_idx: &[usize],
        det_idx: &[usize],
        dets: &[Detection],
        feats: &[DetFeatures],
        stage: Stage,
        has_image: bool,
    ) -> (Assignment, usize) {
        // Without a frame there are no pixel cues; the second stage degrades to IoU.
        let cfg = if has_image {
            self.cfg.clone()
        } else {
            TrackerConfig { traditional_second_assoc: false, ..self.cfg.clone() }
        };
        let matrix = build_stage_matrix(
            &Self::cues(&self.tracks, track_idx),
            &Self::det_cues(dets, feats, det_idx),
            stage,
            &cfg,
            self.options.execution,
        );
        let min_sim = match stage {
            Stage::First => self.cfg.min_fused_sim_first,
            Stage::Second => self.cfg.min_fused_sim_second,
        };
        (associate(&matrix.cost, min_sim), matrix.embedding_evaluations)
    }

    fn start_track(&mut self, frame: u32, det: &Detection, feats: &DetFeatures) -> Option<TrackOutput> {
        let m = det.bbox.to_cxcyah().ok()?;
        let kalman = kalman::initiate(m).ok()?;
        let mut appearance = AppearanceMemory::default();
        appearance.update(feats.histogram.clone(), feats.patch.clone(), feats.embedding.as_ref(), 0.0);
        let track_id = self.next_id;
        self.next_id += 1;
        self.tracks.push(Track {
            track_id,
            class_id: det.class_id,
            status: TrackStatus::Active,
            kalman,
            last_frame: frame,
            miss_count: 0,
            appearance,
            history: vec![(frame, det.bbox)],
        });
        Some(TrackOutput { track_id, class_id: det.class_id, bbox: det.bbox, score: det.score })
    }

    /// Processes one frame. `image` may be omitted, in which case camera
    /// motion is taken as identity and no appearance cues are available.
    pub fn step(
        &mut self,
        frame: u32,
        image: Option<&RawImage>,
        detections: Vec<Detection>,
    ) -> Result<FrameResult, TrackerError> {
        if let Some(previous) = self.last_frame {
            if frame <= previous {
                return Err(TrackerError::OutOfOrder { previous, got: frame });
            }
        }
        if let Some(d) = detections.iter().find(|d| d.frame != frame) {
            return Err(TrackerError::WrongFrame { expected: frame, got: d.frame });
        }
        self.last_frame = Some(frame);
        let mut diag = FrameDiagnostics::default();

        let feats = self.features(image, &detections);
        let (high, low): (Vec<usize>, Vec<usize>) =
            (0..detections.len()).partition(|&i| detections[i].score > self.cfg.tau);
        diag.n_high = high.len();
        diag.n_low = low.len();

        // predict, then compensate camera motion
        diag.motion = self.estimate_motion(frame, image);
        let mut predictions = Vec::with_capacity(self.tracks.len());
        for t in &mut self.tracks {
            if t.status != TrackStatus::Active {
                t.kalman.mean[7] = 0.0;
            }
            t.kalman = kalman::predict(&t.kalman);
            let aspect_before_mc = t.kalman.mean[2];
            if let Some(m) = &diag.motion {
                t.kalman = apply_to_track(&m.constrained, &t.kalman);
            }
            predictions.push(PredictedBox {
                track_id: t.track_id,
                class_id: t.class_id,
                status: t.status,
                bbox: t.state_box(),
                aspect_before_mc,
                aspect_after_mc: t.kalman.mean[2],
            });
        }

        // first association: every live track against high detections
        let all_tracks: Vec<usize> = (0..self.tracks.len()).collect();
        let (first, emb_evals) = self.run_stage(&all_tracks, &high, &detections, &feats, Stage::First, image.is_some());
        diag.first_stage_embedding_evaluations = emb_evals;
        let mut matched: Vec<(usize, usize)> = first.matches.iter().map(|&(r, c)| (all_tracks[r], high[c])).collect();
        diag.n_matched_first = matched.len();
        let remaining_tracks: Vec<usize> = first.unmatched_tracks.iter().map(|&r| all_tracks[r]).collect();
        let high_remain: Vec<usize> = first.unmatched_detections.iter().map(|&c| high[c]).collect();

        // second association: leftover tracks against low detections
        let (second, _) = self.run_stage(&remaining_tracks, &low, &detections, &feats, Stage::Second, image.is_some());
        diag.n_matched_second = second.matches.len();
        matched.extend(second.matches.iter().map(|&(r, c)| (remaining_tracks[r], low[c])));
        let low_remain: Vec<usize> = second.unmatched_detections.iter().map(|&c| low[c]).collect();

        let mut outputs = Vec::new();
        let mut is_matched = vec![false; self.tracks.len()];
        let momentum = self.cfg.embedding_ema_momentum;
        for &(ti, di) in &matched {
            is_matched[ti] = true;
            let det = &detections[di];
            let t = &mut self.tracks[ti];
            if let Ok(m) = det.bbox.to_cxcyah() {
                t.kalman = kalman::update(&t.kalman, m).map_err(|source| TrackerError::Kalman { frame, source })?;
            }
            t.status = TrackStatus::Active;
            t.miss_count = 0;
            t.last_frame = frame;
            t.appearance.update(
                feats[di].histogram.clone(),
                feats[di].patch.clone(),
                feats[di].embedding.as_ref(),
                momentum,
            );
            t.history.push((frame, det.bbox));
            outputs.push(TrackOutput { track_id: t.track_id, class_id: t.class_id, bbox: det.bbox, score: det.score });
        }

        // lifecycle of unmatched tracks
        let grace = self.cfg.grace_frames;
        for (t, &m) in self.tracks.iter_mut().zip(&is_matched) {
            if !m {
                t.miss_count += 1;
                t.status = if t.miss_count >= grace { TrackStatus::Removed } else { TrackStatus::Lost };
            }
        }
        let before = self.tracks.len();
        let removed = &mut self.removed;
        self.tracks.retain(|t| {
            if t.status == TrackStatus::Removed {
                removed.push(t.track_id);
                false
            } else {
                true
            }
        });
        diag.n_removed = before - self.tracks.len();

        // new tracks from unmatched high detections
        for &di in &high_remain {
            if let Some(o) = self.start_track(frame, &detections[di], &feats[di]) {
                outputs.push(o);
                diag.n_new_high += 1;
            }
        }

        // new tracks from unmatched low detections that look like this
        // frame's confident detections of the same class
        if self.cfg.low_init_enabled {
            for &di in &low_remain {
                let d = &detections[di];
                let refs: Vec<usize> = high.iter().copied().filter(|&h| detections[h].class_id == d.class_id).collect();
                let accept = refs.is_empty() || {
                    let best = feats[di].embedding.as_ref().map_or(0.0, |e| {
                        refs.iter()
                            .filter_map(|&h| feats[h].embedding.as_ref())
                            .map(|r| embedding_similarity(e.as_slice(), r.as_slice()))
                            .fold(0.0, f64::max)
                    });
                    best > self.cfg.rho
                };
                if accept {
                    if let Some(o) = self.start_track(frame, d, &feats[di]) {
                        outputs.push(o);
                        diag.n_new_low += 1;
                    }
                }
            }
        }

        outputs.sort_by_key(|o| o.track_id);
        Ok(FrameResult { frame, outputs, diagnostics: diag, predictions })
    }
}

/// Random access to the frames of a sequence (1-based).
pub trait FrameSource {
    fn frame_count(&self) -> u32;
    fn frame(&self, index: u32) -> Result<RawImage, TrackerError>;
}

impl FrameSource for [RawImage] {
    fn frame_count(&self) -> u32 {
        self.len() as u32
    }

    fn frame(&self, index: u32) -> Result<RawImage, TrackerError> {
        index
            .checked_sub(1)
            .and_then(|i| self.get(i as usize))
            .cloned()
            .ok_or(TrackerError::MissingImage(index))
    }
}

impl FrameSource for Vec<RawImage> {
    fn frame_count(&self) -> u32 {
        self.as_slice().frame_count()
    }

    fn frame(&self, index: u32) -> Result<RawImage, TrackerError> {
        self.as_slice().frame(index)
    }
}

pub type DetectionsByFrame = BTreeMap<u32, Vec<Detection>>;

/// Runs a fresh tracker over every frame of `frames`, in order.
pub fn run_sequence<S: FrameSource + ?Sized>(
    frames: &S,
    detections: &DetectionsByFrame,
    cfg: &TrackerConfig,
    options: &TrackerOptions,
) -> Result<Vec<FrameResult>, TrackerError> {
    let n = frames.frame_count();
    if let Some((&f, _)) = detections.iter().find(|(&f, d)| !d.is_empty() && (f == 0 || f > n)) {
        return Err(TrackerError::MissingImage(f));
    }
    let mut tracker = Tracker::new(cfg.clone(), options.clone());
    let mut out = Vec::with_capacity(n as usize);
    for k in 1..=n {
        let img = frames.frame(k)?;
        let dets = detections.get(&k).cloned().unwrap_or_default();
        out.push(tracker.step(k, Some(&img), dets)?);
    }
    Ok(out)
}

/// Frame-level diagnostics summed over a run.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RunSummary {
    pub frames: usize,
    pub outputs: usize,
    pub tracks: usize,
    pub n_high: usize,
    pub n_low: usize,
    pub n_matched_first: usize,
    pub n_matched_second: usize,
    pub n_new_high: usize,
    pub n_new_low: usize,
    pub n_removed: usize,
    pub motion_fallbacks: usize,
}

impl RunSummary {
    pub fn from_results(results: &[FrameResult]) -> Self {
        let mut s = RunSummary { frames: results.len(), ..Default::default() };
        let mut max_id = 0;
        for r in results {
            let d = &r.diagnostics;
            s.outputs += r.outputs.len();
            s.n_high += d.n_high;
            s.n_low += d.n_low;
            s.n_matched_first += d.n_matched_first;
            s.n_matched_second += d.n_matched_second;
            s.n_new_high += d.n_new_high;
            s.n_new_low += d.n_new_low;
            s.n_removed += d.n_removed;
            s.motion_fallbacks += d.motion.as_ref().map_or(0, |m| m.fallback.is_some() as usize);
            max_id = r.outputs.iter().map(|o| o.track_id).fold(max_id, u64::max);
        }
        s.tracks = max_id as usize;
        s
    }
}
