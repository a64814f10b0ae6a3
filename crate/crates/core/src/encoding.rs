//! Codebook training and VLAD encoding.
//!
//! The codebook is plain k-means (k-means++ seeding, Lloyd iterations to an
//! assignment fixpoint). A descriptor set is encoded by accumulating
//! residuals to the nearest centroid, applying a signed square root per
//! element, and L2-normalizing the concatenated vector.

use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EncodingError {
    #[error("need at least {needed} descriptors to train k={needed} clusters, got {got}")]
    TooFewDescriptors { needed: usize, got: usize },
    #[error("only {distinct} distinct descriptors available for k={k} clusters")]
    TooFewDistinct { distinct: usize, k: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid centroids: {0}")]
    InvalidCentroids(String),
    #[error("failed to read codebook {path}: {reason}")]
    Load { path: String, reason: String },
    #[error("failed to write codebook {path}: {reason}")]
    Store { path: String, reason: String },
}

/// A trained k-means codebook of `k` centroids in `dim` dimensions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Codebook {
    k: usize,
    dim: usize,
    #[serde(rename = "seed")]
    train_seed: u64,
    centroids: Vec<Vec<f64>>,
}

impl Codebook {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn train_seed(&self) -> u64 {
        self.train_seed
    }

    pub fn centroids(&self) -> &[Vec<f64>] {
        &self.centroids
    }

    /// Builds a codebook from explicit centroids, validating that `k >= 2`,
    /// dimensions agree, all values are finite and no two centroids coincide.
    pub fn from_centroids(centroids: Vec<Vec<f64>>, train_seed: u64) -> Result<Self, EncodingError> {
        let k = centroids.len();
        if k < 2 {
            return Err(EncodingError::InvalidCentroids(format!(
                "need at least 2 centroids, got {k}"
            )));
        }
        let dim = centroids[0].len();
        for c in &centroids {
            if c.len() != dim {
                return Err(EncodingError::DimensionMismatch {
                    expected: dim,
                    got: c.len(),
                });
            }
            if c.iter().any(|v| !v.is_finite()) {
                return Err(EncodingError::InvalidCentroids("non-finite value".into()));
            }
        }
        for a in 0..k {
            for b in a + 1..k {
                if centroids[a] == centroids[b] {
                    return Err(EncodingError::InvalidCentroids(format!(
                        "centroids {a} and {b} coincide"
                    )));
                }
            }
        }
        Ok(Self {
            k,
            dim,
            train_seed,
            centroids,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), EncodingError> {
        let json = serde_json::to_string_pretty(self).expect("codebook serializes");
        std::fs::write(path, json).map_err(|e| EncodingError::Store {
            path: path.display().to_string(),
            reason: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, EncodingError> {
        let text = std::fs::read_to_string(path).map_err(|e| EncodingError::Load {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        let cb: Codebook = serde_json::from_str(&text).map_err(|e| EncodingError::Load {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        if cb.centroids.len() != cb.k || cb.centroids.iter().any(|c| c.len() != cb.dim) {
            return Err(EncodingError::Load {
                path: path.display().to_string(),
                reason: "centroid shape does not match k/dim".into(),
            });
        }
        Ok(cb)
    }
}

/// A VLAD code: `k * dim` values, cluster-major, unit norm unless encoded
/// from an empty descriptor set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VladCode {
    values: Vec<f64>,
}

impl VladCode {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// True when every element is zero (empty-input encoding).
    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    #[cfg(test)]
    pub(crate) fn from_raw(values: Vec<f64>) -> Self {
        Self { values }
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

/// Trains a codebook with k-means++ seeding and Lloyd iterations.
///
/// Deterministic given `(descriptors, k, seed)`: iterations stop at an
/// assignment fixpoint or after 100 rounds, and empty clusters are re-seeded
/// from the point farthest from its assigned centroid.
pub fn train_codebook<D: AsRef<[f64]>>(
    descriptors: &[D],
    k: usize,
    seed: u64,
) -> Result<Codebook, EncodingError> {
    train_codebook_traced(descriptors, k, seed).map(|(cb, _)| cb)
}

/// [`train_codebook`] variant that also returns the k-means objective (sum
/// of squared distances to assigned centroids) recorded after every
/// assignment step.
pub fn train_codebook_traced<D: AsRef<[f64]>>(
    descriptors: &[D],
    k: usize,
    seed: u64,
) -> Result<(Codebook, Vec<f64>), EncodingError> {
    assert!(k >= 2, "codebook needs k >= 2");
    let n = descriptors.len();
    if n < k {
        return Err(EncodingError::TooFewDescriptors { needed: k, got: n });
    }
    let dim = descriptors[0].as_ref().len();
    for d in descriptors {
        if d.as_ref().len() != dim {
            return Err(EncodingError::DimensionMismatch {
                expected: dim,
                got: d.as_ref().len(),
            });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = kmeans_plus_plus_init(descriptors, k, dim, &mut rng)?;

    let mut assignment = vec![usize::MAX; n];
    let mut objective_trace = Vec::new();
    for _round in 0..100 {
        // Assignment step; ties go to the smaller centroid index.
        let mut objective = 0.0f64;
        let mut next = vec![0usize; n];
        for (i, d) in descriptors.iter().enumerate() {
            let mut best = 0usize;
            let mut best_d = f64::INFINITY;
            for (c, centroid) in centroids.iter().enumerate() {
                let dist = sq_dist(d.as_ref(), centroid);
                if dist < best_d {
                    best_d = dist;
                    best = c;
                }
            }
            next[i] = best;
            objective += best_d;
        }
        objective_trace.push(objective);
        if next == assignment {
            break;
        }
        assignment = next;

        // Update step: means of each cluster.
        let mut sums = vec![vec![0.0f64; dim]; k];
        let mut counts = vec![0usize; k];
        for (i, d) in descriptors.iter().enumerate() {
            let c = assignment[i];
            counts[c] += 1;
            for (s, v) in sums[c].iter_mut().zip(d.as_ref()) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                for s in sums[c].iter_mut() {
                    *s /= counts[c] as f64;
                }
                centroids[c] = sums[c].clone();
            }
        }
        // Re-seed any empty cluster at the point currently farthest from its
        // assigned centroid; each empty cluster consumes a distinct point.
        let empties: Vec<usize> = (0..k).filter(|&c| counts[c] == 0).collect();
        if !empties.is_empty() {
            let mut taken = vec![false; n];
            for c in empties {
                let far = (0..n)
                    .filter(|&i| !taken[i])
                    .map(|i| (sq_dist(descriptors[i].as_ref(), &centroids[assignment[i]]), i))
                    .max_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)))
                    .map(|(_, i)| i);
                if let Some(i) = far {
                    centroids[c] = descriptors[i].as_ref().to_vec();
                    taken[i] = true;
                }
            }
        }
    }

    Ok((
        Codebook {
            k,
            dim,
            train_seed: seed,
            centroids,
        },
        objective_trace,
    ))
}

fn kmeans_plus_plus_init<D: AsRef<[f64]>>(
    descriptors: &[D],
    k: usize,
    dim: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Vec<f64>>, EncodingError> {
    let n = descriptors.len();
    let first = rng.random_range(0..n);
    let mut centroids: Vec<Vec<f64>> = vec![descriptors[first].as_ref().to_vec()];
    let mut min_d2: Vec<f64> = descriptors
        .iter()
        .map(|d| sq_dist(d.as_ref(), &centroids[0]))
        .collect();

    while centroids.len() < k {
        let total: f64 = min_d2.iter().sum();
        let chosen = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = None;
            for (i, &w) in min_d2.iter().enumerate() {
                if w <= 0.0 {
                    continue;
                }
                u -= w;
                if u <= 0.0 {
                    pick = Some(i);
                    break;
                }
            }
            // Guard against accumulated rounding: fall back to the last
            // positive-weight point.
            pick.or_else(|| min_d2.iter().rposition(|&w| w > 0.0))
        } else {
            None
        };
        let Some(idx) = chosen else {
            // All remaining points coincide with an existing centroid.
            return Err(EncodingError::TooFewDistinct {
                distinct: centroids.len(),
                k,
            });
        };
        let c = descriptors[idx].as_ref().to_vec();
        for (i, d) in descriptors.iter().enumerate() {
            let dist = sq_dist(d.as_ref(), &c);
            if dist < min_d2[i] {
                min_d2[i] = dist;
            }
        }
        centroids.push(c);
    }
    Ok(centroids)
}

/// Encodes a descriptor set against the codebook.
///
/// Each descriptor's residual to its nearest centroid is accumulated into
/// that centroid's block; the vector then gets a signed square root per
/// element and a global L2 normalization. An empty input yields the all-zero
/// code of length `k * dim`.
pub fn vlad_encode<D: AsRef<[f64]>>(
    descriptors: &[D],
    cb: &Codebook,
) -> Result<VladCode, EncodingError> {
    let dim = cb.dim;
    let mut values = vec![0.0f64; cb.k * dim];
    for d in descriptors {
        let d = d.as_ref();
        if d.len() != dim {
            return Err(EncodingError::DimensionMismatch {
                expected: dim,
                got: d.len(),
            });
        }
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for (c, centroid) in cb.centroids.iter().enumerate() {
            let dist = sq_dist(d, centroid);
            if dist < best_d {
                best_d = dist;
                best = c;
            }
        }
        let block = &mut values[best * dim..(best + 1) * dim];
        for ((slot, &v), &c) in block.iter_mut().zip(d).zip(&cb.centroids[best]) {
            *slot += v - c;
        }
    }

    for v in values.iter_mut() {
        *v = v.signum() * v.abs().sqrt();
    }
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        for v in values.iter_mut() {
            *v /= norm;
        }
    }
    Ok(VladCode { values })
}

/// Euclidean distance between two codes of equal length.
pub fn vlad_distance(a: &VladCode, b: &VladCode) -> Result<f64, EncodingError> {
    if a.values.len() != b.values.len() {
        return Err(EncodingError::DimensionMismatch {
            expected: a.values.len(),
            got: b.values.len(),
        });
    }
    Ok(sq_dist(&a.values, &b.values).sqrt())
}
