//! End-to-end experiment harness.
//!
//! One experiment run loads the library/database/query image sets, trains
//! the codebook on all library descriptors, parses every image, describes
//! query and database scenes, indexes the database, answers every query and
//! reports ANR per configuration. Scenes are parsed once and similarity
//! scores are reused across the L sweep and the BB ablation, which leaves
//! per-row work at indexing-and-querying cost.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    anr, global_vlad_baseline, rank_of_ground_truth, EvalError, GroundTruth,
};
use crate::config::Config;
use crate::encoding::{train_codebook, Codebook};
use crate::features::detect_and_describe;
use crate::image::{load_image, Image};
use crate::mining::{
    descriptor_from_scores, parse_scene, scene_similarity_scores, ParsedScene, SceneDescriptor,
};
use crate::retrieval::{build_inverted_file, query, OverlapMode};

/// Locations of the dataset pieces.
#[derive(Debug, Clone)]
pub struct DatasetPaths {
    pub library_dir: PathBuf,
    pub database_dir: PathBuf,
    pub query_dir: PathBuf,
    pub ground_truth: PathBuf,
}

impl DatasetPaths {
    /// Standard layout under one root: `{library,database,query}` plus
    /// `ground_truth.csv`.
    pub fn from_root(root: &Path) -> Self {
        Self {
            library_dir: root.join("library"),
            database_dir: root.join("database"),
            query_dir: root.join("query"),
            ground_truth: root.join("ground_truth.csv"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub paths: DatasetPaths,
    pub params: Config,
    /// Descriptor lengths to evaluate; a plain run uses one value.
    pub ls: Vec<usize>,
    /// Bounding-box settings to evaluate, e.g. `[true]` or `[true, false]`.
    pub bb_variants: Vec<bool>,
    /// Also evaluate the whole-image VLAD baseline.
    pub include_baseline: bool,
}

impl ExperimentConfig {
    pub fn single(paths: DatasetPaths, params: Config) -> Self {
        let l = params.descriptor_len;
        let bb = params.use_bb;
        Self {
            paths,
            params,
            ls: vec![l],
            bb_variants: vec![bb],
            include_baseline: false,
        }
    }
}

/// One evaluated configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub method: String,
    pub l: usize,
    pub use_bb: bool,
    pub overlap_mode: OverlapMode,
    pub anr_percent: f64,
    /// Ground-truth ranks aligned with the sorted query ids.
    pub per_query_ranks: Vec<usize>,
    pub n_queries: usize,
    pub db_size: usize,
    pub seed: u64,
    pub wall_ms: u128,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub rows: Vec<ExperimentRow>,
    pub query_ids: Vec<String>,
}

impl ExperimentReport {
    /// CSV columns:
    /// `method,L,use_bb,overlap_mode,anr_percent,n_queries,db_size,seed,wall_ms`.
    pub fn write_csv(&self, path: &Path) -> Result<(), EvalError> {
        let mut w = csv::Writer::from_path(path).map_err(|e| EvalError::io(path, e))?;
        w.write_record([
            "method",
            "L",
            "use_bb",
            "overlap_mode",
            "anr_percent",
            "n_queries",
            "db_size",
            "seed",
            "wall_ms",
        ])
        .map_err(|e| EvalError::io(path, e))?;
        for row in &self.rows {
            w.write_record([
                row.method.clone(),
                row.l.to_string(),
                row.use_bb.to_string(),
                row.overlap_mode.to_string(),
                format!("{:.6}", row.anr_percent),
                row.n_queries.to_string(),
                row.db_size.to_string(),
                row.seed.to_string(),
                row.wall_ms.to_string(),
            ])
            .map_err(|e| EvalError::io(path, e))?;
        }
        w.flush().map_err(|e| EvalError::io(path, e))
    }

    pub fn write_json(&self, path: &Path) -> Result<(), EvalError> {
        let json = serde_json::to_string_pretty(self).expect("report serializes");
        std::fs::write(path, json).map_err(|e| EvalError::io(path, e))
    }
}

/// Loads every PNG/PNM image in a directory, sorted by file stem; the stem
/// becomes the image id.
pub fn load_image_set(dir: &Path) -> Result<Vec<(String, Image)>, EvalError> {
    if !dir.is_dir() {
        return Err(EvalError::MissingDataset(dir.display().to_string()));
    }
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| EvalError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            matches!(
                p.extension().and_then(|e| e.to_str()),
                Some("png" | "ppm" | "pgm")
            )
        })
        .collect();
    if paths.is_empty() {
        return Err(EvalError::MissingDataset(format!(
            "{}: no .png/.ppm/.pgm files",
            dir.display()
        )));
    }
    paths.sort();
    paths
        .par_iter()
        .map(|p| {
            let id = p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            Ok((id, load_image(p)?))
        })
        .collect()
}

/// All pipeline state shared across the configuration rows of one run.
pub(crate) struct PipelineState {
    pub codebook: Codebook,
    pub library: Vec<ParsedScene>,
    pub database: Vec<ParsedScene>,
    pub queries: Vec<ParsedScene>,
    /// Reverse-rank library scores per database scene.
    pub database_scores: Vec<Vec<f64>>,
    /// Reverse-rank library scores per query scene.
    pub query_scores: Vec<Vec<f64>>,
}

pub(crate) fn build_pipeline(
    library_images: &[(String, Image)],
    database_images: &[(String, Image)],
    query_images: &[(String, Image)],
    params: &Config,
) -> Result<PipelineState, EvalError> {
    // Codebook from all library-image descriptors.
    let library_features: Vec<_> = library_images
        .par_iter()
        .map(|(_, img)| detect_and_describe(&img.to_grayscale()))
        .collect();
    let mut training: Vec<&[f64]> = Vec::new();
    for fs in &library_features {
        for d in &fs.descriptors {
            training.push(d.as_ref());
        }
    }
    let codebook = train_codebook(&training, params.codebook_k, params.seed)?;
    drop(library_features);

    let parse_set = |images: &[(String, Image)]| -> Result<Vec<ParsedScene>, EvalError> {
        images
            .par_iter()
            .map(|(id, img)| Ok(parse_scene(img, &params.parse_params(), &codebook, id)?))
            .collect()
    };
    let library = parse_set(library_images)?;
    let database = parse_set(database_images)?;
    let queries = parse_set(query_images)?;

    let score_set = |scenes: &[ParsedScene]| -> Result<Vec<Vec<f64>>, EvalError> {
        scenes
            .iter()
            .map(|s| Ok(scene_similarity_scores(s, &library)?))
            .collect()
    };
    let database_scores = score_set(&database)?;
    let query_scores = score_set(&queries)?;

    Ok(PipelineState {
        codebook,
        library,
        database,
        queries,
        database_scores,
        query_scores,
    })
}

impl PipelineState {
    /// Scene descriptors at length `l` for the database set.
    pub(crate) fn database_descriptors(&self, l: usize) -> Result<Vec<SceneDescriptor>, EvalError> {
        self.database
            .par_iter()
            .zip(&self.database_scores)
            .map(|(scene, scores)| Ok(descriptor_from_scores(scene, &self.library, scores, l)?))
            .collect()
    }

    pub(crate) fn query_descriptors(&self, l: usize) -> Result<Vec<SceneDescriptor>, EvalError> {
        self.queries
            .par_iter()
            .zip(&self.query_scores)
            .map(|(scene, scores)| Ok(descriptor_from_scores(scene, &self.library, scores, l)?))
            .collect()
    }
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport, EvalError> {
    cfg.params
        .validate()
        .map_err(|e| EvalError::InvalidParams(e.to_string()))?;
    let gt = GroundTruth::read_csv(&cfg.paths.ground_truth)?;
    let library_images = load_image_set(&cfg.paths.library_dir)?;
    let database_images = load_image_set(&cfg.paths.database_dir)?;
    let query_images = load_image_set(&cfg.paths.query_dir)?;
    for (qid, _) in &query_images {
        if gt.relevant_for(qid).is_none() {
            return Err(EvalError::MissingQueryTruth(qid.clone()));
        }
    }

    let state = build_pipeline(&library_images, &database_images, &query_images, &cfg.params)?;
    let library_ids: Vec<String> = state.library.iter().map(|s| s.image_id.clone()).collect();
    let db_size = state.database.len();
    let query_ids: Vec<String> = state.queries.iter().map(|s| s.image_id.clone()).collect();

    let mut rows = Vec::new();
    for &l in &cfg.ls {
        let started = Instant::now();
        let db_descriptors = state.database_descriptors(l)?;
        let q_descriptors = state.query_descriptors(l)?;
        let index = build_inverted_file(&db_descriptors, &library_ids)?;
        let shared_ms = started.elapsed().as_millis();
        for &use_bb in &cfg.bb_variants {
            let started = Instant::now();
            let ranks = q_descriptors
                .par_iter()
                .map(|qd| {
                    let result = query(&index, qd, use_bb, cfg.params.overlap_mode)?;
                    let relevant = gt
                        .relevant_for(&qd.image_id)
                        .ok_or_else(|| EvalError::MissingQueryTruth(qd.image_id.clone()))?;
                    rank_of_ground_truth(result.ranked_ids(), relevant)
                })
                .collect::<Result<Vec<usize>, EvalError>>()?;
            let anr_percent = anr(&ranks, db_size)?;
            rows.push(ExperimentRow {
                method: "ip".into(),
                l,
                use_bb,
                overlap_mode: cfg.params.overlap_mode,
                anr_percent,
                per_query_ranks: ranks,
                n_queries: query_ids.len(),
                db_size,
                seed: cfg.params.seed,
                wall_ms: shared_ms + started.elapsed().as_millis(),
            });
        }
    }

    if cfg.include_baseline {
        let started = Instant::now();
        let ranked_lists = global_vlad_baseline(&state.queries, &state.database, &state.codebook)?;
        let ranks = ranked_lists
            .iter()
            .map(|(qid, ranked)| {
                let relevant = gt
                    .relevant_for(qid)
                    .ok_or_else(|| EvalError::MissingQueryTruth(qid.clone()))?;
                rank_of_ground_truth(ranked.iter().map(String::as_str), relevant)
            })
            .collect::<Result<Vec<usize>, EvalError>>()?;
        let anr_percent = anr(&ranks, db_size)?;
        rows.push(ExperimentRow {
            method: "vlad".into(),
            l: 0,
            use_bb: false,
            overlap_mode: cfg.params.overlap_mode,
            anr_percent,
            per_query_ranks: ranks,
            n_queries: query_ids.len(),
            db_size,
            seed: cfg.params.seed,
            wall_ms: started.elapsed().as_millis(),
        });
    }

    Ok(ExperimentReport {
        rows,
        query_ids,
    })
}
