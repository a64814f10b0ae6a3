//! Superpixel over-segmentation and hierarchical region merging.
//!
//! [`slic_segment`] partitions an image into roughly `target_count`
//! compact superpixels; [`build_region_tree`] then merges adjacent
//! superpixels bottom-up by mean-color similarity into a dendrogram of
//! `2S - 1` regions, which downstream stages treat as landmark candidates.

mod region_tree;
mod slic;

pub use region_tree::{build_region_tree, Region, RegionTree};
pub use slic::slic_segment;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SegmentationError {
    #[error("target superpixel count {target} too large for {width}x{height} (max {max})")]
    TargetCountTooLarge {
        target: usize,
        width: usize,
        height: usize,
        max: usize,
    },
    #[error("target superpixel count must be at least 2, got {0}")]
    TargetCountTooSmall(usize),
    #[error("image {width}x{height} is degenerate for step size {step:.1}")]
    DegenerateImage {
        width: usize,
        height: usize,
        step: f64,
    },
    #[error("label map is invalid: {0}")]
    InvalidLabels(String),
}

/// A per-pixel superpixel labeling.
///
/// Every pixel carries a label in `[0, count)` and each label forms one
/// 4-connected component.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuperpixelMap {
    width: usize,
    height: usize,
    labels: Vec<u32>,
    count: usize,
}

impl SuperpixelMap {
    /// Builds a map from raw labels, validating the structural invariants:
    /// labels are dense in `[0, count)` with `count >= 2`, and each label
    /// is a single 4-connected component.
    pub fn from_labels(
        width: usize,
        height: usize,
        labels: Vec<u32>,
    ) -> Result<Self, SegmentationError> {
        if labels.len() != width * height {
            return Err(SegmentationError::InvalidLabels(format!(
                "label buffer length {} != {}x{}",
                labels.len(),
                width,
                height
            )));
        }
        let count = match labels.iter().max() {
            Some(&m) => m as usize + 1,
            None => {
                return Err(SegmentationError::InvalidLabels("empty label map".into()));
            }
        };
        if count < 2 {
            return Err(SegmentationError::InvalidLabels(
                "fewer than 2 superpixels".into(),
            ));
        }
        let mut seen = vec![false; count];
        for &l in &labels {
            seen[l as usize] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(SegmentationError::InvalidLabels(format!(
                "label {missing} has no pixels"
            )));
        }
        let components = connected_components(width, height, &labels).1;
        if components != count {
            return Err(SegmentationError::InvalidLabels(format!(
                "{count} labels split into {components} connected components"
            )));
        }
        Ok(Self {
            width,
            height,
            labels,
            count,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Number of superpixels `S`.
    pub fn count(&self) -> usize {
        self.count
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn label(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }
}

/// 4-connected component labeling of `labels`; returns (component id per
/// pixel, component count). Components are numbered in raster-scan order of
/// their first pixel.
pub(crate) fn connected_components(
    width: usize,
    height: usize,
    labels: &[u32],
) -> (Vec<u32>, usize) {
    let mut comp = vec![u32::MAX; labels.len()];
    let mut count = 0u32;
    let mut stack = Vec::new();
    for start in 0..labels.len() {
        if comp[start] != u32::MAX {
            continue;
        }
        let id = count;
        count += 1;
        comp[start] = id;
        stack.push(start);
        while let Some(i) = stack.pop() {
            let (x, y) = (i % width, i / width);
            let mut visit = |j: usize| {
                if comp[j] == u32::MAX && labels[j] == labels[i] {
                    comp[j] = id;
                    stack.push(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < width {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - width);
            }
            if y + 1 < height {
                visit(i + width);
            }
        }
    }
    (comp, count as usize)
}
