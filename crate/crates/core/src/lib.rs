//! Scene description and retrieval for visual place recognition (VPR).
//!
//! A scene is described against a *library* of raw reference photos: the input
//! image is over-segmented into superpixels, superpixels are merged into a
//! region dendrogram, salient regions are encoded as VLAD codes and used to
//! rank the library, and the scene becomes a short list of
//! `(library image id, bounding box)` landmark pairs. Database images described
//! the same way are indexed in an inverted file keyed by library image id, and
//! queries are answered by common-id count with bounding-box overlap as a
//! tie-breaker.
//!
//! Pipeline stages map onto the modules below:
//!
//! * [`image`] - decoding (PNG / binary PNM) and color conversion
//! * [`segmentation`] - SLIC superpixels and the hierarchical region tree
//! * [`features`] - DoG keypoints, 128-d descriptors, PCA saliency scores
//! * [`encoding`] - k-means codebook training and VLAD encoding
//! * [`mining`] - scene parsing, library ranking, scene descriptors
//! * [`retrieval`] - inverted file construction and querying
//! * [`eval`] - ANR evaluation, baselines, experiment harness, synthetic data

pub mod config;
pub mod encoding;
pub mod eval;
pub mod features;
pub mod image;
pub mod mining;
pub mod retrieval;
pub mod segmentation;

pub use config::Config;
pub use encoding::{train_codebook, vlad_distance, vlad_encode, Codebook, VladCode};
pub use features::{
    detect_and_describe, pca_distinctiveness, select_landmarks, Descriptor128, FeatureSet,
    Keypoint, LandmarkRegion,
};
pub use image::{load_image, GrayImage, Image, LabImage};
pub use mining::{
    describe_scene, estimate_bbox, parse_scene, rank_library, reverse_rank_scores,
    select_library_images, BoundingBox, ParsedScene, SceneDescriptor, SceneEntry,
};
pub use retrieval::{bb_overlap, build_inverted_file, query, InvertedFile, OverlapMode, RetrievalResult};
pub use segmentation::{build_region_tree, slic_segment, Region, RegionTree, SuperpixelMap};

/// Installs a global rayon pool capped at `threads` workers (0 = auto).
///
/// Safe to call more than once; later calls are ignored once a pool exists.
pub fn init_thread_pool(threads: usize) {
    if threads > 0 {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
}
