//! Evaluation: averaged normalized rank, the global-VLAD baseline, the
//! experiment harness, and the seeded synthetic benchmark generator.

mod baseline;
mod experiment;
mod metrics;
mod synth;

pub use baseline::{global_vlad_baseline, global_vlad_code, rank_by_code_distance};
pub use experiment::{
    load_image_set, run_experiment, DatasetPaths, ExperimentConfig, ExperimentReport,
    ExperimentRow,
};
pub use metrics::{anr, rank_of_ground_truth};
pub use synth::{generate_synthetic_dataset, SynthParams};

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use thiserror::Error;

use crate::encoding::EncodingError;
use crate::image::ImageError;
use crate::mining::MiningError;
use crate::retrieval::RetrievalError;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no ranks supplied")]
    EmptyInput,
    #[error("rank {rank} outside [1, {n}]")]
    RankOutOfBounds { rank: usize, n: usize },
    #[error("relevant image {0:?} is not in the database ranking")]
    RelevantNotInDatabase(String),
    #[error("missing or empty dataset directory {0}")]
    MissingDataset(String),
    #[error("missing ground truth: {0}")]
    MissingGroundTruth(String),
    #[error("invalid synthetic dataset parameters: {0}")]
    InvalidParams(String),
    #[error("query {0:?} has no ground-truth entry")]
    MissingQueryTruth(String),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Mining(#[from] MiningError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Encoding(#[from] EncodingError),
    #[error("failed to access {path}: {reason}")]
    Io { path: String, reason: String },
}

impl EvalError {
    pub(crate) fn io(path: &Path, err: impl std::fmt::Display) -> Self {
        EvalError::Io {
            path: path.display().to_string(),
            reason: err.to_string(),
        }
    }
}

/// Relevance judgements: each query id maps to its relevant database ids.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GroundTruth {
    relevant: BTreeMap<String, BTreeSet<String>>,
}

impl GroundTruth {
    pub fn insert(&mut self, query_id: &str, relevant_db_id: &str) {
        self.relevant
            .entry(query_id.to_string())
            .or_default()
            .insert(relevant_db_id.to_string());
    }

    pub fn relevant_for(&self, query_id: &str) -> Option<&BTreeSet<String>> {
        self.relevant.get(query_id)
    }

    pub fn len(&self) -> usize {
        self.relevant.len()
    }

    pub fn is_empty(&self) -> bool {
        self.relevant.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &BTreeSet<String>)> {
        self.relevant.iter()
    }

    /// Reads `query_id,relevant_db_id` rows; the header row is required.
    pub fn read_csv(path: &Path) -> Result<Self, EvalError> {
        if !path.is_file() {
            return Err(EvalError::MissingGroundTruth(path.display().to_string()));
        }
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_path(path)
            .map_err(|e| EvalError::io(path, e))?;
        {
            let headers = reader.headers().map_err(|e| EvalError::io(path, e))?;
            if headers.len() < 2 || &headers[0] != "query_id" || &headers[1] != "relevant_db_id" {
                return Err(EvalError::MissingGroundTruth(format!(
                    "{}: expected header query_id,relevant_db_id",
                    path.display()
                )));
            }
        }
        let mut gt = GroundTruth::default();
        for record in reader.records() {
            let record = record.map_err(|e| EvalError::io(path, e))?;
            if record.len() < 2 {
                return Err(EvalError::MissingGroundTruth(format!(
                    "{}: short row {:?}",
                    path.display(),
                    record
                )));
            }
            gt.insert(&record[0], &record[1]);
        }
        if gt.is_empty() {
            return Err(EvalError::MissingGroundTruth(format!(
                "{}: no relevance rows",
                path.display()
            )));
        }
        Ok(gt)
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), EvalError> {
        let mut writer = csv::Writer::from_path(path).map_err(|e| EvalError::io(path, e))?;
        writer
            .write_record(["query_id", "relevant_db_id"])
            .map_err(|e| EvalError::io(path, e))?;
        for (q, rels) in &self.relevant {
            for r in rels {
                writer
                    .write_record([q, r])
                    .map_err(|e| EvalError::io(path, e))?;
            }
        }
        writer.flush().map_err(|e| EvalError::io(path, e))
    }
}
