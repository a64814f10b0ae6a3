//! Scene parsing and scene description.
//!
//! An input image is parsed into up to K landmark regions, each carrying a
//! VLAD code. Every landmark code ranks the library by best-matching
//! landmark distance; per-library-image reverse ranks `sum 1/r_i` are
//! aggregated across landmarks; and the top-L library images, each with a
//! bounding box estimated from descriptor matches, form the scene
//! descriptor: an ordered list of `(library image id, bounding box)` pairs.

use std::io::{BufRead, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoding::{vlad_encode, Codebook, EncodingError, VladCode};
use crate::features::{
    detect_and_describe, pca_distinctiveness, select_landmarks, FeatureError, FeatureSet,
    LandmarkRegion,
};
use crate::image::Image;
use crate::segmentation::{build_region_tree, slic_segment, SegmentationError};

#[derive(Debug, Error)]
pub enum MiningError {
    #[error("no keypoints detected in scene {0:?}")]
    EmptyScene(String),
    #[error("library is empty")]
    EmptyLibrary,
    #[error("rankings disagree on library size ({0} vs {1})")]
    InconsistentRankings(usize, usize),
    #[error("ranking is not a permutation of 1..={0}")]
    NotAPermutation(usize),
    #[error("feature set is empty")]
    EmptyFeatureSet,
    #[error(transparent)]
    Segmentation(#[from] SegmentationError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Encoding(#[from] EncodingError),
    #[error("failed to access {path}: {reason}")]
    Io { path: String, reason: String },
    #[error("bad record in {path}: {reason}")]
    BadRecord { path: String, reason: String },
}

/// Scene-parsing parameters; defaults follow the pipeline's standard
/// configuration (72 superpixels, 40 landmarks).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParseParams {
    /// Target superpixel count R.
    pub superpixels: usize,
    /// Landmark regions per image K.
    pub landmarks: usize,
    pub compactness: f64,
    pub iterations: usize,
    pub min_keypoints: usize,
}

impl Default for ParseParams {
    fn default() -> Self {
        Self {
            superpixels: 72,
            landmarks: 40,
            compactness: 10.0,
            iterations: 10,
            min_keypoints: 5,
        }
    }
}

/// The per-image output of scene parsing.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParsedScene {
    pub image_id: String,
    pub width: usize,
    pub height: usize,
    pub landmarks: Vec<(LandmarkRegion, VladCode)>,
    pub features: FeatureSet,
}

/// An axis-aligned box in a library image's pixel frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "[f64; 4]", try_from = "[f64; 4]")]
pub struct BoundingBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BoundingBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Self {
        assert!(x_min <= x_max && y_min <= y_max, "inverted bounding box");
        Self {
            x_min,
            y_min,
            x_max,
            y_max,
        }
    }

    pub fn area(&self) -> f64 {
        (self.x_max - self.x_min) * (self.y_max - self.y_min)
    }

    pub fn contains(&self, other: &BoundingBox) -> bool {
        self.x_min <= other.x_min
            && self.y_min <= other.y_min
            && self.x_max >= other.x_max
            && self.y_max >= other.y_max
    }
}

impl From<BoundingBox> for [f64; 4] {
    fn from(b: BoundingBox) -> Self {
        [b.x_min, b.y_min, b.x_max, b.y_max]
    }
}

impl TryFrom<[f64; 4]> for BoundingBox {
    type Error = String;

    fn try_from(v: [f64; 4]) -> Result<Self, Self::Error> {
        if v[0] > v[2] || v[1] > v[3] {
            return Err(format!("inverted bounding box {v:?}"));
        }
        Ok(Self {
            x_min: v[0],
            y_min: v[1],
            x_max: v[2],
            y_max: v[3],
        })
    }
}

/// One `(library image id, bounding box)` landmark pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneEntry {
    pub library_id: String,
    pub bbox: BoundingBox,
}

/// A scene described as `L` library landmarks, ordered by descending
/// reverse-rank score.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneDescriptor {
    pub image_id: String,
    pub entries: Vec<SceneEntry>,
}

/// Runs the full parsing chain on one image: superpixels, region tree,
/// keypoints, distinctiveness, landmark selection, one VLAD code per
/// landmark.
pub fn parse_scene(
    img: &Image,
    params: &ParseParams,
    cb: &Codebook,
    image_id: &str,
) -> Result<ParsedScene, MiningError> {
    let lab = img.to_lab();
    let gray = img.to_grayscale();
    let sp = slic_segment(&lab, params.superpixels, params.compactness, params.iterations)?;
    let tree = build_region_tree(&sp, &lab);
    let features = detect_and_describe(&gray);
    if features.is_empty() {
        return Err(MiningError::EmptyScene(image_id.to_string()));
    }
    let scores = pca_distinctiveness(&features.descriptors)?;
    let regions = select_landmarks(
        &tree,
        &sp,
        &features,
        &scores,
        params.landmarks,
        params.min_keypoints,
    )?;
    let landmarks = regions
        .into_iter()
        .map(|region| {
            let descs: Vec<&[f64]> = region
                .member_keypoint_indices
                .iter()
                .map(|&i| features.descriptors[i].as_ref())
                .collect();
            let code = vlad_encode(&descs, cb)?;
            Ok((region, code))
        })
        .collect::<Result<Vec<_>, MiningError>>()?;
    Ok(ParsedScene {
        image_id: image_id.to_string(),
        width: img.width(),
        height: img.height(),
        landmarks,
        features,
    })
}

/// Ranks every library image against one landmark code.
///
/// A library image's distance is the minimum VLAD distance over its landmark
/// codes (infinity when it has none); ties break by library index. The
/// returned vector is indexed by library position and holds 1-based ranks.
pub fn rank_library(
    query_code: &VladCode,
    library: &[ParsedScene],
) -> Result<Vec<usize>, MiningError> {
    if library.is_empty() {
        return Err(MiningError::EmptyLibrary);
    }
    let distances: Vec<f64> = library
        .iter()
        .map(|scene| {
            scene
                .landmarks
                .iter()
                .map(|(_, code)| euclidean(query_code.values(), code.values()))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let mut order: Vec<usize> = (0..library.len()).collect();
    order.sort_by(|&a, &b| distances[a].total_cmp(&distances[b]).then(a.cmp(&b)));
    let mut ranks = vec![0usize; library.len()];
    for (rank0, &idx) in order.iter().enumerate() {
        ranks[idx] = rank0 + 1;
    }
    Ok(ranks)
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// Aggregates K per-landmark rankings into one score per library image:
/// `score(j) = sum over rankings of 1 / rank_of_j`.
pub fn reverse_rank_scores(rankings: &[Vec<usize>]) -> Result<Vec<f64>, MiningError> {
    let Some(first) = rankings.first() else {
        return Ok(Vec::new());
    };
    let n = first.len();
    let mut scores = vec![0.0f64; n];
    for ranking in rankings {
        if ranking.len() != n {
            return Err(MiningError::InconsistentRankings(n, ranking.len()));
        }
        let mut seen = vec![false; n];
        for &r in ranking {
            if r < 1 || r > n || seen[r - 1] {
                return Err(MiningError::NotAPermutation(n));
            }
            seen[r - 1] = true;
        }
        for (s, &r) in scores.iter_mut().zip(ranking) {
            *s += 1.0 / r as f64;
        }
    }
    Ok(scores)
}

/// Picks the top-`l` library images by descending score; ties break toward
/// the lexicographically smaller library id. Returns library indices in
/// selection order (all of them when `l` exceeds the library size).
pub fn select_library_images(scores: &[f64], library_ids: &[String], l: usize) -> Vec<usize> {
    assert_eq!(scores.len(), library_ids.len());
    assert!(l >= 1, "descriptor length must be positive");
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .total_cmp(&scores[a])
            .then_with(|| library_ids[a].cmp(&library_ids[b]))
    });
    if l < order.len() {
        order.truncate(l);
    } else if l > order.len() {
        log::debug!(
            "select_library_images: requested {l}, only {} available",
            order.len()
        );
    }
    order
}

/// Estimates the bounding box of the query scene's content inside a library
/// image.
///
/// Every query descriptor is matched to its nearest library descriptor by
/// exact linear scan; the matched keypoints' x values are sorted and the
/// `floor(n/10)` smallest and largest are dropped before taking the min/max
/// (independently for y), which keeps the middle ~80% and discards outlier
/// matches. The box is clamped to the library image bounds.
pub fn estimate_bbox(
    f_q: &FeatureSet,
    f_l: &FeatureSet,
    library_image_size: (usize, usize),
) -> Result<BoundingBox, MiningError> {
    if f_q.is_empty() || f_l.is_empty() {
        return Err(MiningError::EmptyFeatureSet);
    }
    let mut xs = Vec::with_capacity(f_q.len());
    let mut ys = Vec::with_capacity(f_q.len());
    for q in &f_q.descriptors {
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for (i, l) in f_l.descriptors.iter().enumerate() {
            let mut d = 0.0;
            for (a, b) in q.values().iter().zip(l.values()) {
                let t = a - b;
                d += t * t;
            }
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        let kp = &f_l.keypoints[best];
        xs.push(kp.x);
        ys.push(kp.y);
    }
    let (x_min, x_max) = trimmed_extent(&mut xs);
    let (y_min, y_max) = trimmed_extent(&mut ys);
    let (w, h) = library_image_size;
    Ok(BoundingBox::new(
        x_min.clamp(0.0, (w - 1) as f64),
        y_min.clamp(0.0, (h - 1) as f64),
        x_max.clamp(0.0, (w - 1) as f64),
        y_max.clamp(0.0, (h - 1) as f64),
    ))
}

/// Sorts values and returns `[min, max]` of the slice with `floor(n/10)`
/// entries dropped from each end.
fn trimmed_extent(values: &mut [f64]) -> (f64, f64) {
    values.sort_by(f64::total_cmp);
    let drop = values.len() / 10;
    let kept = &values[drop..values.len() - drop];
    (kept[0], kept[kept.len() - 1])
}

/// Builds the scene descriptor for a parsed query or database image: ranks
/// the library with each landmark code, aggregates reverse-rank scores,
/// keeps the top `l` library images, and estimates one bounding box per kept
/// image.
pub fn describe_scene(
    parsed: &ParsedScene,
    library: &[ParsedScene],
    l: usize,
) -> Result<SceneDescriptor, MiningError> {
    let scores = scene_similarity_scores(parsed, library)?;
    descriptor_from_scores(parsed, library, &scores, l)
}

/// The reverse-rank score of every library image for this parsed scene.
/// Exposed separately so parameter sweeps can reuse one scoring pass across
/// several values of `l`.
pub fn scene_similarity_scores(
    parsed: &ParsedScene,
    library: &[ParsedScene],
) -> Result<Vec<f64>, MiningError> {
    if library.is_empty() {
        return Err(MiningError::EmptyLibrary);
    }
    if parsed.landmarks.is_empty() {
        return Err(MiningError::EmptyScene(parsed.image_id.clone()));
    }
    let rankings = parsed
        .landmarks
        .par_iter()
        .map(|(_, code)| rank_library(code, library))
        .collect::<Result<Vec<_>, _>>()?;
    reverse_rank_scores(&rankings)
}

/// Completes [`describe_scene`] from precomputed similarity scores.
pub fn descriptor_from_scores(
    parsed: &ParsedScene,
    library: &[ParsedScene],
    scores: &[f64],
    l: usize,
) -> Result<SceneDescriptor, MiningError> {
    let library_ids: Vec<String> = library.iter().map(|s| s.image_id.clone()).collect();
    let selected = select_library_images(scores, &library_ids, l);
    let entries = selected
        .par_iter()
        .map(|&idx| {
            let lib = &library[idx];
            let bbox = estimate_bbox(&parsed.features, &lib.features, (lib.width, lib.height))?;
            Ok(SceneEntry {
                library_id: lib.image_id.clone(),
                bbox,
            })
        })
        .collect::<Result<Vec<_>, MiningError>>()?;
    Ok(SceneDescriptor {
        image_id: parsed.image_id.clone(),
        entries,
    })
}

/// Writes scenes as one JSON object per line.
pub fn write_parsed_scenes(path: &Path, scenes: &[ParsedScene]) -> Result<(), MiningError> {
    write_jsonl(path, scenes)
}

pub fn read_parsed_scenes(path: &Path) -> Result<Vec<ParsedScene>, MiningError> {
    read_jsonl(path)
}

/// Writes descriptors as one JSON object per line, order preserved.
pub fn write_descriptors(path: &Path, descriptors: &[SceneDescriptor]) -> Result<(), MiningError> {
    write_jsonl(path, descriptors)
}

pub fn read_descriptors(path: &Path) -> Result<Vec<SceneDescriptor>, MiningError> {
    read_jsonl(path)
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), MiningError> {
    let io_err = |e: std::io::Error| MiningError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    };
    let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(io_err)?);
    for item in items {
        let line = serde_json::to_string(item).expect("pipeline types serialize");
        out.write_all(line.as_bytes()).map_err(io_err)?;
        out.write_all(b"\n").map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, MiningError> {
    let file = std::fs::File::open(path).map_err(|e| MiningError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    let reader = std::io::BufReader::new(file);
    let mut items = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| MiningError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        items.push(serde_json::from_str(&line).map_err(|e| MiningError::BadRecord {
            path: path.display().to_string(),
            reason: format!("line {}: {}", i + 1, e),
        })?);
    }
    Ok(items)
}
