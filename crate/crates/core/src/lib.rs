//! Online multi-object tracking by detection, built around occlusion-aware
//! association: every track carries a long-term appearance embedding (updated
//! only by well-visible detections) and a short-term embedding (updated by
//! every matched detection, weighted by visibility). Association runs in two
//! stages: a fused cosine/Mahalanobis/IOU cost over short-term embeddings,
//! then a long-term-embedding rescue pass for tracks lost to occlusion.
//!
//! The crate also ships the supporting pieces needed to exercise the tracker
//! end to end without a detector: ground-truth occlusion-map math, CLEAR-MOT
//! style metrics, a deterministic scenario simulator, and MOTChallenge-format
//! file IO.

pub mod appearance;
pub mod assignment;
pub mod association;
pub mod config;
pub mod error;
pub mod io;
pub mod metrics;
pub mod motion;
pub mod occlusion;
pub mod simulator;
pub mod types;

pub use error::{Error, Result};
