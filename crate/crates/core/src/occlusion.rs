//! Ground-truth occlusion-map math: impulse-style map construction at
//! detection centers, the masked L1 loss over positive cells, and
//! visibility-based sample selection.
//!
//! Convention note: the map stores OCCLUSION degree `s = 1 - visibility`
//! (1 = fully occluded), while [`crate::types::Detection::occlusion_score`]
//! stores the visibility-like response (1 = unoccluded). The flip is owned by
//! [`visibility_from_degree`] / [`occlusion_degree`] and nothing else.

use crate::error::{Error, Result};
use crate::types::BoundingBox;

/// Feature-map stride relative to image resolution.
pub const STRIDE: u32 = 4;

/// Grid of occlusion-degree responses at 1/STRIDE input resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct OcclusionMap {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl OcclusionMap {
    /// All-zero map of the given grid dimensions.
    pub fn zeros(height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::invalid("occlusion map dimensions must be positive"));
        }
        Ok(Self {
            height,
            width,
            values: vec![0.0; height * width],
        })
    }

    /// Map sized for an image of `image_width` x `image_height` pixels under
    /// the fixed stride (floor mapping).
    pub fn for_image(image_width: u32, image_height: u32) -> Result<Self> {
        Self::zeros(
            (image_height / STRIDE) as usize,
            (image_width / STRIDE) as usize,
        )
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    /// Stores a response; panics outside the grid, errors outside [0,1].
    pub fn set(&mut self, x: usize, y: usize, value: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::invalid(format!("map response {value} outside [0,1]")));
        }
        self.values[y * self.width + x] = value;
        Ok(())
    }

    /// Number of cells with a strictly positive response.
    pub fn positive_count(&self) -> usize {
        self.values.iter().filter(|v| **v > 0.0).count()
    }

    pub fn iter_cells(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let w = self.width;
        self.values
            .iter()
            .enumerate()
            .map(move |(i, v)| (i % w, i / w, *v))
    }
}

/// A ground-truth box with its visibility fraction and identity.
#[derive(Debug, Clone)]
pub struct AnnotatedBox {
    pub bbox: BoundingBox,
    pub visibility: f64,
    pub identity: u64,
}

impl AnnotatedBox {
    pub fn new(bbox: BoundingBox, visibility: f64, identity: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&visibility) {
            return Err(Error::invalid(format!(
                "visibility {visibility} outside [0,1]"
            )));
        }
        Ok(Self {
            bbox,
            visibility,
            identity,
        })
    }
}

/// Occlusion degree of a visibility value: `s = 1 - v`.
pub fn occlusion_degree(visibility: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&visibility) {
        return Err(Error::invalid(format!(
            "visibility {visibility} outside [0,1]"
        )));
    }
    Ok(1.0 - visibility)
}

/// Inverse of [`occlusion_degree`]; the only other place the sign flips.
pub fn visibility_from_degree(degree: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&degree) {
        return Err(Error::invalid(format!(
            "occlusion degree {degree} outside [0,1]"
        )));
    }
    Ok(1.0 - degree)
}

/// Grid cell of a box center under the stride, clamped to the map borders.
pub fn grid_position(bbox: &BoundingBox, map_width: usize, map_height: usize) -> (usize, usize) {
    let (cx, cy) = bbox.center();
    let gx = (cx / STRIDE as f64).floor();
    let gy = (cy / STRIDE as f64).floor();
    let clamp = |g: f64, max: usize| -> usize {
        if g < 0.0 {
            0
        } else if g as usize >= max {
            max - 1
        } else {
            g as usize
        }
    };
    (clamp(gx, map_width), clamp(gy, map_height))
}

/// Builds the ground-truth occlusion map: zero everywhere except at
/// detection-center cells, which hold the occlusion degree `1 - v`. Colliding
/// centers keep the maximum degree, making the result order-independent.
pub fn build_gt_map(
    annotations: &[AnnotatedBox],
    height: usize,
    width: usize,
) -> Result<OcclusionMap> {
    let mut map = OcclusionMap::zeros(height, width)?;
    for ann in annotations {
        let (gx, gy) = grid_position(&ann.bbox, width, height);
        let degree = occlusion_degree(ann.visibility)?;
        if degree > map.get(gx, gy) {
            map.set(gx, gy, degree)?;
        }
    }
    Ok(map)
}

/// Masked L1 loss between a ground-truth map and a prediction, averaged over
/// the `positive_count` cells where the ground truth is positive. The count
/// must agree with the map; a frame with no positives has loss 0.
pub fn occlusion_loss(
    gt: &OcclusionMap,
    pred: &OcclusionMap,
    positive_count: usize,
) -> Result<f64> {
    if gt.height != pred.height || gt.width != pred.width {
        return Err(Error::invalid(format!(
            "map dimension mismatch: {}x{} vs {}x{}",
            gt.height, gt.width, pred.height, pred.width
        )));
    }
    let actual = gt.positive_count();
    if actual != positive_count {
        return Err(Error::invalid(format!(
            "positive count {positive_count} disagrees with map ({actual})"
        )));
    }
    if positive_count == 0 {
        return Ok(0.0);
    }
    let sum: f64 = gt
        .values
        .iter()
        .zip(&pred.values)
        .filter(|(g, _)| **g > 0.0)
        .map(|(g, p)| (g - p).abs())
        .sum();
    Ok(sum / positive_count as f64)
}

/// Keeps exactly the annotations with visibility at or above the threshold,
/// preserving order.
pub fn select_valid_samples(detections: &[AnnotatedBox], tau_vis: f64) -> Result<Vec<AnnotatedBox>> {
    if !(0.0..=1.0).contains(&tau_vis) {
        return Err(Error::invalid(format!(
            "visibility threshold {tau_vis} outside [0,1]"
        )));
    }
    Ok(detections
        .iter()
        .filter(|d| d.visibility >= tau_vis)
        .cloned()
        .collect())
}
