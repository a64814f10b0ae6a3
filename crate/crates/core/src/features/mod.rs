//! Keypoint detection, local descriptors, and landmark-region selection.

mod saliency;
mod sift;

pub use saliency::{pca_distinctiveness, select_landmarks};
pub use sift::detect_and_describe;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("at least 2 descriptors are required, got {0}")]
    TooFewDescriptors(usize),
    #[error("no region has at least {min_keypoints} keypoints")]
    NoCandidates { min_keypoints: usize },
    #[error("scores length {scores} does not match descriptor count {descriptors}")]
    ScoreMismatch { scores: usize, descriptors: usize },
    #[error("descriptors have inconsistent dimensions ({0} vs {1})")]
    DimensionMismatch(usize, usize),
}

/// A detected interest point with sub-pixel position, pyramid scale and
/// dominant gradient orientation (radians).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub scale: f64,
    pub orientation: f64,
}

/// A 128-dimensional local descriptor (4x4 spatial cells x 8 orientation
/// bins), L2-normalized unless the patch was flat.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Descriptor128 {
    values: Box<[f64; 128]>,
}

impl Descriptor128 {
    pub const DIM: usize = 128;

    pub fn new(values: [f64; 128]) -> Self {
        Self {
            values: Box::new(values),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values[..]
    }
}

impl AsRef<[f64]> for Descriptor128 {
    fn as_ref(&self) -> &[f64] {
        self.values()
    }
}

impl From<Descriptor128> for Vec<f64> {
    fn from(d: Descriptor128) -> Self {
        d.values.to_vec()
    }
}

impl TryFrom<Vec<f64>> for Descriptor128 {
    type Error = String;

    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        let boxed: Box<[f64; 128]> = v
            .into_boxed_slice()
            .try_into()
            .map_err(|b: Box<[f64]>| format!("expected 128 values, got {}", b.len()))?;
        Ok(Self { values: boxed })
    }
}

/// Parallel keypoint/descriptor sequences for one image.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct FeatureSet {
    pub keypoints: Vec<Keypoint>,
    pub descriptors: Vec<Descriptor128>,
}

impl FeatureSet {
    pub fn len(&self) -> usize {
        self.keypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keypoints.is_empty()
    }

    pub fn push(&mut self, kp: Keypoint, desc: Descriptor128) {
        self.keypoints.push(kp);
        self.descriptors.push(desc);
    }
}

/// A region-tree node chosen as a landmark, with its saliency and the
/// keypoints it contains.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LandmarkRegion {
    pub region_id: usize,
    pub saliency: f64,
    /// Indices into the owning [`FeatureSet`], sorted ascending.
    pub member_keypoint_indices: Vec<usize>,
}
