//! Tracker configuration and its flat text form.

use crate::kv::{self, KvError};
use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown config key `{key}` (line {line})")]
    UnknownKey { key: String, line: usize },
    #[error("config sections are not supported (line {0})")]
    UnexpectedSection(usize),
    #[error("invalid value for `{key}`: {reason}")]
    Invalid { key: &'static str, reason: String },
    #[error(transparent)]
    Syntax(#[from] KvError),
    #[error("cannot read config {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// Every tunable of the tracker.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackerConfig {
    /// Detections with score strictly above `tau` are high confidence.
    pub tau: f64,
    /// Embedding similarity a low-confidence detection must exceed to start a track.
    pub rho: f64,
    /// Consecutive misses after which a lost track is removed.
    pub grace_frames: u32,
    pub hist_bins_per_channel: usize,
    pub mse_patch_size: (usize, usize),
    pub iou_gate_first: f64,
    pub iou_gate_second: f64,
    pub min_fused_sim_first: f64,
    pub min_fused_sim_second: f64,
    pub embedding_ema_momentum: f64,
    pub mc_enabled: bool,
    pub mc_downscale: usize,
    pub low_init_enabled: bool,
    pub traditional_second_assoc: bool,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            tau: 0.7,
            rho: 0.6,
            grace_frames: 30,
            hist_bins_per_channel: 8,
            mse_patch_size: (32, 32),
            iou_gate_first: 0.1,
            iou_gate_second: 0.1,
            min_fused_sim_first: 0.1,
            min_fused_sim_second: 0.1,
            embedding_ema_momentum: 0.9,
            mc_enabled: true,
            mc_downscale: 2,
            low_init_enabled: true,
            traditional_second_assoc: true,
        }
    }
}

pub const CONFIG_KEYS: [&str; 14] = [
    "tau",
    "rho",
    "grace_frames",
    "hist_bins_per_channel",
    "mse_patch_size",
    "iou_gate_first",
    "iou_gate_second",
    "min_fused_sim_first",
    "min_fused_sim_second",
    "embedding_ema_momentum",
    "mc_enabled",
    "mc_downscale",
    "low_init_enabled",
    "traditional_second_assoc",
];

impl TrackerConfig {
    /// Plain BYTE cascade: no motion compensation, no low-confidence
    /// initiation, IoU-only second association.
    pub fn byte_baseline() -> Self {
        Self {
            mc_enabled: false,
            low_init_enabled: false,
            traditional_second_assoc: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let unit = |key: &'static str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(ConfigError::Invalid { key, reason: format!("{v} not in [0, 1]") })
            }
        };
        unit("tau", self.tau)?;
        unit("rho", self.rho)?;
        unit("iou_gate_first", self.iou_gate_first)?;
        unit("iou_gate_second", self.iou_gate_second)?;
        unit("min_fused_sim_first", self.min_fused_sim_first)?;
        unit("min_fused_sim_second", self.min_fused_sim_second)?;
        unit("embedding_ema_momentum", self.embedding_ema_momentum)?;
        if !(1..=256).contains(&self.hist_bins_per_channel) {
            return Err(ConfigError::Invalid {
                key: "hist_bins_per_channel",
                reason: "must be in 1..=256".into(),
            });
        }
        if self.mse_patch_size.0 == 0 || self.mse_patch_size.1 == 0 {
            return Err(ConfigError::Invalid { key: "mse_patch_size", reason: "must be positive".into() });
        }
        if self.mc_downscale == 0 {
            return Err(ConfigError::Invalid { key: "mc_downscale", reason: "must be positive".into() });
        }
        if self.grace_frames == 0 {
            return Err(ConfigError::Invalid { key: "grace_frames", reason: "must be positive".into() });
        }
        Ok(())
    }

    /// Parses a config file body. Keys not present keep their defaults.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let sections = kv::parse(text)?;
        if let Some(s) = sections.iter().find(|s| s.name.is_some()) {
            return Err(ConfigError::UnexpectedSection(s.line));
        }
        let mut cfg = Self::default();
        for e in &sections[0].entries {
            match e.key.as_str() {
                "tau" => cfg.tau = kv::parse_f64(e)?,
                "rho" => cfg.rho = kv::parse_f64(e)?,
                "grace_frames" => cfg.grace_frames = narrow(e, kv::parse_u64(e)?)?,
                "hist_bins_per_channel" => cfg.hist_bins_per_channel = narrow(e, kv::parse_u64(e)?)?,
                "mse_patch_size" => cfg.mse_patch_size = kv::parse_size(e)?,
                "iou_gate_first" => cfg.iou_gate_first = kv::parse_f64(e)?,
                "iou_gate_second" => cfg.iou_gate_second = kv::parse_f64(e)?,
                "min_fused_sim_first" => cfg.min_fused_sim_first = kv::parse_f64(e)?,
                "min_fused_sim_second" => cfg.min_fused_sim_second = kv::parse_f64(e)?,
                "embedding_ema_momentum" => cfg.embedding_ema_momentum = kv::parse_f64(e)?,
                "mc_enabled" => cfg.mc_enabled = kv::parse_bool(e)?,
                "mc_downscale" => cfg.mc_downscale = narrow(e, kv::parse_u64(e)?)?,
                "low_init_enabled" => cfg.low_init_enabled = kv::parse_bool(e)?,
                "traditional_second_assoc" => cfg.traditional_second_assoc = kv::parse_bool(e)?,
                other => return Err(ConfigError::UnknownKey { key: other.to_string(), line: e.line }),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text)
    }

    /// Canonical text form; parsing it back yields an equal config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut line = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        line("tau", self.tau.to_string());
        line("rho", self.rho.to_string());
        line("grace_frames", self.grace_frames.to_string());
        line("hist_bins_per_channel", self.hist_bins_per_channel.to_string());
        line("mse_patch_size", format!("{}x{}", self.mse_patch_size.0, self.mse_patch_size.1));
        line("iou_gate_first", self.iou_gate_first.to_string());
        line("iou_gate_second", self.iou_gate_second.to_string());
        line("min_fused_sim_first", self.min_fused_sim_first.to_string());
        line("min_fused_sim_second", self.min_fused_sim_second.to_string());
        line("embedding_ema_momentum", self.embedding_ema_momentum.to_string());
        line("mc_enabled", self.mc_enabled.to_string());
        line("mc_downscale", self.mc_downscale.to_string());
        line("low_init_enabled", self.low_init_enabled.to_string());
        line("traditional_second_assoc", self.traditional_second_assoc.to_string());
        s
    }
}

fn narrow<T: TryFrom<u64>>(e: &kv::Entry, v: u64) -> Result<T, KvError> {
    T::try_from(v).map_err(|_| KvError::new(e.line, format!("`{}`: value {v} out of range", e.key)))
}
