//! Global-VLAD baseline: one code per whole image, ranked by distance.

use rayon::prelude::*;

use super::EvalError;
use crate::encoding::{vlad_encode, Codebook, VladCode};
use crate::features::FeatureSet;
use crate::mining::ParsedScene;

/// Encodes all of an image's descriptors into a single VLAD code.
pub fn global_vlad_code(features: &FeatureSet, cb: &Codebook) -> Result<VladCode, EvalError> {
    Ok(vlad_encode(&features.descriptors, cb)?)
}

/// Ranks database ids by ascending code distance; ties break by id.
pub fn rank_by_code_distance(query: &VladCode, database: &[(String, VladCode)]) -> Vec<String> {
    let mut order: Vec<usize> = (0..database.len()).collect();
    let distances: Vec<f64> = database
        .iter()
        .map(|(_, code)| {
            query
                .values()
                .iter()
                .zip(code.values())
                .map(|(a, b)| {
                    let d = a - b;
                    d * d
                })
                .sum::<f64>()
        })
        .collect();
    order.sort_by(|&a, &b| {
        distances[a]
            .total_cmp(&distances[b])
            .then_with(|| database[a].0.cmp(&database[b].0))
    });
    order.into_iter().map(|i| database[i].0.clone()).collect()
}

/// Whole-image VLAD retrieval for every query scene: returns, per query,
/// `(query id, database ids best-first)`.
pub fn global_vlad_baseline(
    queries: &[ParsedScene],
    database: &[ParsedScene],
    cb: &Codebook,
) -> Result<Vec<(String, Vec<String>)>, EvalError> {
    let db_codes: Vec<(String, VladCode)> = database
        .par_iter()
        .map(|scene| Ok((scene.image_id.clone(), global_vlad_code(&scene.features, cb)?)))
        .collect::<Result<_, EvalError>>()?;
    queries
        .par_iter()
        .map(|scene| {
            let code = global_vlad_code(&scene.features, cb)?;
            Ok((scene.image_id.clone(), rank_by_code_distance(&code, &db_codes)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::Codebook;

    fn toy_codebook() -> Codebook {
        Codebook::from_centroids(vec![vec![0.0, 0.0], vec![4.0, 0.0]], 0).unwrap()
    }

    #[test]
    fn identical_image_ranks_first() {
        let cb = toy_codebook();
        let a = vlad_encode(&[vec![1.0, 0.5], vec![3.5, -0.5]], &cb).unwrap();
        let b = vlad_encode(&[vec![0.2, 0.0]], &cb).unwrap();
        let db = vec![("b".to_string(), b), ("a".to_string(), a.clone())];
        let ranked = rank_by_code_distance(&a, &db);
        assert_eq!(ranked[0], "a");
    }

    #[test]
    fn ordering_matches_brute_force_sort() {
        let cb = toy_codebook();
        let codes: Vec<VladCode> = (0..6)
            .map(|i| {
                vlad_encode(
                    &[vec![i as f64 * 0.7, (i % 3) as f64], vec![4.0 - i as f64 * 0.3, 0.1]],
                    &cb,
                )
                .unwrap()
            })
            .collect();
        let db: Vec<(String, VladCode)> = codes
            .iter()
            .enumerate()
            .map(|(i, c)| (format!("d{i}"), c.clone()))
            .collect();
        let q = &codes[2];
        let ranked = rank_by_code_distance(q, &db);

        let mut expected: Vec<(f64, String)> = db
            .iter()
            .map(|(id, c)| {
                let d: f64 = q
                    .values()
                    .iter()
                    .zip(c.values())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                (d, id.clone())
            })
            .collect();
        expected.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
        let expected_ids: Vec<String> = expected.into_iter().map(|(_, id)| id).collect();
        assert_eq!(ranked, expected_ids);
    }
}
