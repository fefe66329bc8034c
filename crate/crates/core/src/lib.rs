//! Multi-object tracking by detection for aerial footage.
//!
//! Detections are split by confidence and associated in two stages: every
//! track against confident detections using overlap and appearance
//! embeddings, then the leftovers against weak detections using overlap,
//! color histograms and patch error. Track predictions are carried through
//! the estimated camera motion with a uniform scale so box aspect ratios
//! survive compensation, and weak detections can start tracks when they
//! resemble confident ones. The crate also ships a CLEAR/identity metrics
//! evaluator and a seeded generator of rendered test sequences.

pub mod ablation;
pub mod appearance;
pub mod association;
pub mod cli;
pub mod config;
pub mod detection;
pub mod geometry;
pub mod image;
pub mod io;
pub mod kalman;
pub mod kv;
pub mod metrics;
pub mod motion;
pub mod par;
pub mod rng;
pub mod synthetic;
pub mod track;
pub mod tracker;

pub use config::TrackerConfig;
pub use detection::{Detection, Embedding};
pub use geometry::{iou, BoundingBox};
pub use tracker::{run_sequence, FrameResult, Tracker, TrackerOptions};
