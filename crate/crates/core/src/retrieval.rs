//! Inverted-file retrieval over scene descriptors.
//!
//! Database descriptors are stored in an array of postings lists, one per
//! library image id. A query descriptor probes the lists of its own library
//! ids; candidates are ranked by the number of shared ids first and by
//! accumulated bounding-box overlap second.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mining::{BoundingBox, SceneDescriptor};

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("descriptor {descriptor:?} references unknown library id {library_id:?}")]
    UnknownLibraryId {
        descriptor: String,
        library_id: String,
    },
    #[error("duplicate database image id {0:?}")]
    DuplicateDatabaseId(String),
    #[error("failed to access {path}: {reason}")]
    Io { path: String, reason: String },
    #[error("bad index file {path}: {reason}")]
    BadIndex { path: String, reason: String },
}

/// How the bounding-box overlap of a shared library id is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverlapMode {
    /// Intersection area divided by union area (scale-free, default).
    Iou,
    /// Raw intersection area in pixels.
    IntersectionArea,
}

impl std::fmt::Display for OverlapMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OverlapMode::Iou => write!(f, "iou"),
            OverlapMode::IntersectionArea => write!(f, "intersection"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Posting {
    db_id: String,
    bbox: BoundingBox,
}

/// Immutable inverted file over a database of scene descriptors.
#[derive(Debug, Clone)]
pub struct InvertedFile {
    library_ids: Vec<String>,
    library_index: BTreeMap<String, usize>,
    /// One postings list per library id, each sorted by database id.
    postings: Vec<Vec<Posting>>,
    /// All indexed database ids, sorted ascending.
    database_ids: Vec<String>,
}

const INDEX_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct InvertedFileDto {
    format_version: u32,
    library_ids: Vec<String>,
    postings: BTreeMap<String, Vec<Posting>>,
    database_ids: Vec<String>,
}

impl InvertedFile {
    pub fn library_ids(&self) -> &[String] {
        &self.library_ids
    }

    pub fn database_ids(&self) -> &[String] {
        &self.database_ids
    }

    /// Total number of stored postings.
    pub fn posting_count(&self) -> usize {
        self.postings.iter().map(Vec::len).sum()
    }

    /// Postings list sizes, aligned with `library_ids`.
    pub fn list_lengths(&self) -> Vec<usize> {
        self.postings.iter().map(Vec::len).collect()
    }

    pub fn save(&self, path: &Path) -> Result<(), RetrievalError> {
        let dto = InvertedFileDto {
            format_version: INDEX_FORMAT_VERSION,
            library_ids: self.library_ids.clone(),
            postings: self
                .library_ids
                .iter()
                .cloned()
                .zip(self.postings.iter().cloned())
                .collect(),
            database_ids: self.database_ids.clone(),
        };
        let json = serde_json::to_string(&dto).expect("index serializes");
        std::fs::write(path, json).map_err(|e| RetrievalError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, RetrievalError> {
        let text = std::fs::read_to_string(path).map_err(|e| RetrievalError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        let dto: InvertedFileDto =
            serde_json::from_str(&text).map_err(|e| RetrievalError::BadIndex {
                path: path.display().to_string(),
                reason: e.to_string(),
            })?;
        if dto.format_version != INDEX_FORMAT_VERSION {
            return Err(RetrievalError::BadIndex {
                path: path.display().to_string(),
                reason: format!("unsupported format_version {}", dto.format_version),
            });
        }
        let library_index: BTreeMap<String, usize> = dto
            .library_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i))
            .collect();
        let mut postings = vec![Vec::new(); dto.library_ids.len()];
        for (id, list) in dto.postings {
            let Some(&i) = library_index.get(&id) else {
                return Err(RetrievalError::BadIndex {
                    path: path.display().to_string(),
                    reason: format!("postings for unknown library id {id:?}"),
                });
            };
            postings[i] = list;
        }
        Ok(Self {
            library_ids: dto.library_ids,
            library_index,
            postings,
            database_ids: dto.database_ids,
        })
    }
}

/// Indexes database descriptors under their library image ids.
pub fn build_inverted_file(
    descriptors: &[SceneDescriptor],
    library_ids: &[String],
) -> Result<InvertedFile, RetrievalError> {
    let library_index: BTreeMap<String, usize> = library_ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.clone(), i))
        .collect();
    let mut postings: Vec<Vec<Posting>> = vec![Vec::new(); library_ids.len()];
    let mut database_ids = Vec::with_capacity(descriptors.len());
    for desc in descriptors {
        database_ids.push(desc.image_id.clone());
        for entry in &desc.entries {
            let Some(&i) = library_index.get(&entry.library_id) else {
                return Err(RetrievalError::UnknownLibraryId {
                    descriptor: desc.image_id.clone(),
                    library_id: entry.library_id.clone(),
                });
            };
            postings[i].push(Posting {
                db_id: desc.image_id.clone(),
                bbox: entry.bbox,
            });
        }
    }
    database_ids.sort();
    if let Some(dup) = database_ids.windows(2).find(|w| w[0] == w[1]) {
        return Err(RetrievalError::DuplicateDatabaseId(dup[0].clone()));
    }
    for list in postings.iter_mut() {
        list.sort_by(|a, b| a.db_id.cmp(&b.db_id));
    }
    Ok(InvertedFile {
        library_ids: library_ids.to_vec(),
        library_index,
        postings,
        database_ids,
    })
}

/// Overlap between two boxes under the chosen mode. IoU of a zero-area union
/// is defined as 0.
pub fn bb_overlap(a: &BoundingBox, b: &BoundingBox, mode: OverlapMode) -> f64 {
    let ox = (a.x_max.min(b.x_max) - a.x_min.max(b.x_min)).max(0.0);
    let oy = (a.y_max.min(b.y_max) - a.y_min.max(b.y_min)).max(0.0);
    let intersection = ox * oy;
    match mode {
        OverlapMode::IntersectionArea => intersection,
        OverlapMode::Iou => {
            let union = a.area() + b.area() - intersection;
            if union > 0.0 {
                intersection / union
            } else {
                0.0
            }
        }
    }
}

/// One ranked database image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedImage {
    pub db_id: String,
    pub common_count: usize,
    pub bb_score: f64,
}

/// A complete ranking of the database for one query: shared-id count
/// descending, then bounding-box score descending, then id ascending.
/// Database images sharing no library id with the query trail the list with
/// scores `(0, 0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub ranked: Vec<RankedImage>,
}

impl RetrievalResult {
    pub fn ranked_ids(&self) -> impl Iterator<Item = &str> {
        self.ranked.iter().map(|r| r.db_id.as_str())
    }
}

/// Scores every indexed database image against the query descriptor.
pub fn query(
    index: &InvertedFile,
    q: &SceneDescriptor,
    use_bb: bool,
    mode: OverlapMode,
) -> Result<RetrievalResult, RetrievalError> {
    let mut acc: BTreeMap<&str, (usize, f64)> = BTreeMap::new();
    for entry in &q.entries {
        let Some(&i) = index.library_index.get(&entry.library_id) else {
            return Err(RetrievalError::UnknownLibraryId {
                descriptor: q.image_id.clone(),
                library_id: entry.library_id.clone(),
            });
        };
        for posting in &index.postings[i] {
            let slot = acc.entry(posting.db_id.as_str()).or_insert((0, 0.0));
            slot.0 += 1;
            if use_bb {
                slot.1 += bb_overlap(&entry.bbox, &posting.bbox, mode);
            }
        }
    }
    let mut ranked: Vec<RankedImage> = index
        .database_ids
        .iter()
        .map(|id| {
            let (common_count, bb_score) = acc.get(id.as_str()).copied().unwrap_or((0, 0.0));
            RankedImage {
                db_id: id.clone(),
                common_count,
                bb_score,
            }
        })
        .collect();
    ranked.sort_by(|a, b| {
        b.common_count
            .cmp(&a.common_count)
            .then_with(|| b.bb_score.total_cmp(&a.bb_score))
            .then_with(|| a.db_id.cmp(&b.db_id))
    });
    Ok(RetrievalResult { ranked })
}
