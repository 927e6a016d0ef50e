//! Shared domain types: boxes, detections, frames, and tracks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::motion::MotionState;

/// Axis-aligned box in image coordinates, top-left origin, corner form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub left: f64,
    pub top: f64,
    pub right: f64,
    pub bottom: f64,
}

impl BoundingBox {
    /// Builds a box from its corners. Degenerate (zero-area) boxes are
    /// accepted; inverted ones are not.
    pub fn new(left: f64, top: f64, right: f64, bottom: f64) -> Result<Self> {
        if !(left.is_finite() && top.is_finite() && right.is_finite() && bottom.is_finite()) {
            return Err(Error::invalid("bounding box coordinates must be finite"));
        }
        if right < left || bottom < top {
            return Err(Error::invalid(format!(
                "inverted bounding box ({left},{top},{right},{bottom})"
            )));
        }
        Ok(Self {
            left,
            top,
            right,
            bottom,
        })
    }

    /// Builds a box from left/top corner plus width and height.
    pub fn from_ltwh(left: f64, top: f64, width: f64, height: f64) -> Result<Self> {
        Self::new(left, top, left + width, top + height)
    }

    pub fn width(&self) -> f64 {
        self.right - self.left
    }

    pub fn height(&self) -> f64 {
        self.bottom - self.top
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    /// Arithmetic midpoint of the box.
    pub fn center(&self) -> (f64, f64) {
        (
            (self.left + self.right) / 2.0,
            (self.top + self.bottom) / 2.0,
        )
    }

    /// Shifts the box by an offset, preserving its size.
    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        Self {
            left: self.left + dx,
            top: self.top + dy,
            right: self.right + dx,
            bottom: self.bottom + dy,
        }
    }
}

/// Intersection over union of two boxes. A union of zero area (two degenerate
/// boxes) yields 0 rather than an error.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let iw = (a.right.min(b.right) - a.left.max(b.left)).max(0.0);
    let ih = (a.bottom.min(b.bottom) - a.top.max(b.top)).max(0.0);
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// One per-frame observation: box, detector confidence, appearance embedding
/// and the visibility-like occlusion score (1 = unoccluded, 0 = fully
/// occluded).
#[derive(Debug, Clone)]
pub struct Detection {
    pub frame: u64,
    pub bbox: BoundingBox,
    pub confidence: f64,
    pub embedding: Vec<f64>,
    pub occlusion_score: f64,
}

impl Detection {
    pub fn new(
        frame: u64,
        bbox: BoundingBox,
        confidence: f64,
        embedding: Vec<f64>,
        occlusion_score: f64,
    ) -> Result<Self> {
        if frame == 0 {
            return Err(Error::invalid("frame indices start at 1"));
        }
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::invalid(format!(
                "confidence {confidence} outside [0,1]"
            )));
        }
        if !(0.0..=1.0).contains(&occlusion_score) {
            return Err(Error::invalid(format!(
                "occlusion score {occlusion_score} outside [0,1]"
            )));
        }
        if embedding.is_empty() {
            return Err(Error::invalid("empty embedding"));
        }
        Ok(Self {
            frame,
            bbox,
            confidence,
            embedding,
            occlusion_score,
        })
    }
}

/// All detections observed in one frame.
#[derive(Debug, Clone)]
pub struct FrameObservations {
    pub frame: u64,
    pub detections: Vec<Detection>,
}

impl FrameObservations {
    pub fn new(frame: u64, detections: Vec<Detection>) -> Result<Self> {
        if detections.iter().any(|d| d.frame != frame) {
            return Err(Error::invalid("detection frame index mismatch"));
        }
        Ok(Self { frame, detections })
    }
}

/// Lifecycle of a track. `Tentative` tracks await confirmation, `Active`
/// tracks matched recently, `Dormant` tracks are unmatched but still within
/// the keep-alive window, `Retired` tracks are permanently closed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackStatus {
    Tentative,
    Active,
    Dormant,
    Retired,
}

/// The two appearance embeddings a track maintains. Both stay unit-norm.
#[derive(Debug, Clone)]
pub struct EmbeddingPair {
    /// Summarizes well-visible appearances only.
    pub long: Vec<f64>,
    /// Follows every matched detection, visibility-weighted.
    pub short: Vec<f64>,
}

/// A persistent identity: motion state, dual embeddings and lifecycle
/// counters. Ids are never reused within a run.
#[derive(Debug, Clone)]
pub struct Track {
    pub id: u64,
    pub motion: MotionState,
    pub embeddings: EmbeddingPair,
    pub frames_since_update: u32,
    pub status: TrackStatus,
    /// Per-frame output boxes, recorded on every matched frame.
    pub history: Vec<(u64, BoundingBox)>,
    /// Consecutive matched frames, used for tentative confirmation.
    pub consecutive_matches: u32,
}
