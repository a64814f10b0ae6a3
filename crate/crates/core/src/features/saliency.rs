//! PCA-based distinctiveness scoring and landmark-region selection.
//!
//! A descriptor's distinctiveness is the L1 norm of its mean-centered vector
//! expressed in the full PCA eigenbasis of the image's descriptor set. A
//! region's saliency is the sum over the keypoints it contains; the K most
//! salient regions with enough keypoints become the image's landmarks.

use nalgebra::DMatrix;

use super::{FeatureError, FeatureSet, LandmarkRegion};
use crate::segmentation::{RegionTree, SuperpixelMap};

/// Scores each descriptor by its L1 deviation from the set mean in the PCA
/// frame. Scores are order-aligned with the input.
pub fn pca_distinctiveness<D: AsRef<[f64]>>(descriptors: &[D]) -> Result<Vec<f64>, FeatureError> {
    let n = descriptors.len();
    if n < 2 {
        return Err(FeatureError::TooFewDescriptors(n));
    }
    let dim = descriptors[0].as_ref().len();
    for d in descriptors {
        if d.as_ref().len() != dim {
            return Err(FeatureError::DimensionMismatch(dim, d.as_ref().len()));
        }
    }

    let mut mean = vec![0.0f64; dim];
    for d in descriptors {
        for (m, v) in mean.iter_mut().zip(d.as_ref()) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= n as f64;
    }

    // Covariance of the centered set; the scale factor is irrelevant to the
    // eigenbasis so the population normalization is fine.
    let mut cov = DMatrix::<f64>::zeros(dim, dim);
    let mut centered = DMatrix::<f64>::zeros(n, dim);
    for (i, d) in descriptors.iter().enumerate() {
        for (j, (&v, &m)) in d.as_ref().iter().zip(&mean).enumerate() {
            centered[(i, j)] = v - m;
        }
    }
    for a in 0..dim {
        for b in a..dim {
            let mut s = 0.0;
            for i in 0..n {
                s += centered[(i, a)] * centered[(i, b)];
            }
            s /= n as f64;
            cov[(a, b)] = s;
            cov[(b, a)] = s;
        }
    }

    let eigen = cov.symmetric_eigen();
    // Components of centered descriptors along null-space eigenvectors are
    // zero up to rounding, so the full rotation is well-defined.
    let rotated = centered * &eigen.eigenvectors;
    Ok((0..n)
        .map(|i| rotated.row(i).iter().map(|v| v.abs()).sum())
        .collect())
}

/// Assigns keypoints to superpixels by their rounded coordinates, scores each
/// region-tree node by the summed distinctiveness of the keypoints inside it,
/// and returns up to `k` regions with the highest saliency.
///
/// Regions with fewer than `min_keypoints` member keypoints are excluded;
/// ties in saliency break toward the smaller region id. Fewer than `k`
/// landmarks are returned when candidates run out.
pub fn select_landmarks(
    tree: &RegionTree,
    sp: &SuperpixelMap,
    fs: &FeatureSet,
    scores: &[f64],
    k: usize,
    min_keypoints: usize,
) -> Result<Vec<LandmarkRegion>, FeatureError> {
    if scores.len() != fs.len() {
        return Err(FeatureError::ScoreMismatch {
            scores: scores.len(),
            descriptors: fs.len(),
        });
    }
    assert!(k >= 1, "k must be positive");

    let s = sp.count();
    let mut leaf_keypoints: Vec<Vec<usize>> = vec![Vec::new(); s];
    for (i, kp) in fs.keypoints.iter().enumerate() {
        let x = (kp.x.round().max(0.0) as usize).min(sp.width() - 1);
        let y = (kp.y.round().max(0.0) as usize).min(sp.height() - 1);
        leaf_keypoints[sp.label(x, y) as usize].push(i);
    }

    // Saliency bottom-up: leaves sum their keypoints, internal nodes sum
    // their children, which keeps the partition property exact.
    let n_nodes = tree.len();
    let mut saliency = vec![0.0f64; n_nodes];
    let mut kp_indices: Vec<Vec<usize>> = vec![Vec::new(); n_nodes];
    for node in tree.nodes() {
        match node.children {
            None => {
                let members = &leaf_keypoints[node.id];
                saliency[node.id] = members.iter().map(|&i| scores[i]).sum();
                kp_indices[node.id] = members.clone();
            }
            Some((a, b)) => {
                saliency[node.id] = saliency[a] + saliency[b];
                let mut merged = kp_indices[a].clone();
                merged.extend_from_slice(&kp_indices[b]);
                merged.sort_unstable();
                kp_indices[node.id] = merged;
            }
        }
    }

    let mut candidates: Vec<usize> = (0..n_nodes)
        .filter(|&id| kp_indices[id].len() >= min_keypoints)
        .collect();
    if candidates.is_empty() {
        return Err(FeatureError::NoCandidates { min_keypoints });
    }
    candidates.sort_by(|&a, &b| saliency[b].total_cmp(&saliency[a]).then(a.cmp(&b)));
    candidates.truncate(k);
    if candidates.len() < k {
        log::debug!(
            "select_landmarks: only {} of {} requested landmarks eligible",
            candidates.len(),
            k
        );
    }

    Ok(candidates
        .into_iter()
        .map(|id| LandmarkRegion {
            region_id: id,
            saliency: saliency[id],
            member_keypoint_indices: kp_indices[id].clone(),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{Descriptor128, Keypoint};
    use crate::image::Image;
    use crate::segmentation::build_region_tree;

    #[test]
    fn symmetric_pair_scores_equal() {
        let a = vec![1.0, 2.0, 3.0];
        let b = vec![3.0, 2.0, 1.0];
        let scores = pca_distinctiveness(&[a, b]).unwrap();
        assert!((scores[0] - scores[1]).abs() < 1e-9);
        assert!(scores[0] > 0.0);
    }

    #[test]
    fn identical_descriptors_score_zero() {
        let d = vec![0.5; 8];
        let scores = pca_distinctiveness(&[d.clone(), d.clone(), d]).unwrap();
        assert!(scores.iter().all(|&s| s.abs() < 1e-9));
    }

    #[test]
    fn toy_example_matches_hand_eigendecomposition() {
        // {(0,0),(2,0),(1,3)}: mean (1,1), centered {(-1,-1),(1,-1),(0,2)},
        // covariance diag(2/3, 2) so the eigenbasis is the standard axes and
        // every score is the plain L1 norm of the centered point: all 2.
        let pts = [vec![0.0, 0.0], vec![2.0, 0.0], vec![1.0, 3.0]];
        let scores = pca_distinctiveness(&pts).unwrap();
        for s in &scores {
            assert!((s - 2.0).abs() < 1e-9, "score {s}");
        }
    }

    #[test]
    fn too_few_descriptors_rejected() {
        let one = [vec![1.0, 0.0]];
        assert!(matches!(
            pca_distinctiveness(&one),
            Err(FeatureError::TooFewDescriptors(1))
        ));
    }

    #[test]
    fn permutation_of_descriptors_permutes_scores() {
        let descs: Vec<Vec<f64>> = (0..12)
            .map(|i| (0..6).map(|j| ((i * 7 + j * 13) % 17) as f64).collect())
            .collect();
        let scores = pca_distinctiveness(&descs).unwrap();
        let mut reversed = descs.clone();
        reversed.reverse();
        let rev_scores = pca_distinctiveness(&reversed).unwrap();
        for (i, s) in scores.iter().enumerate() {
            assert!((s - rev_scores[11 - i]).abs() < 1e-6);
        }
    }

    /// Two-band fixture: superpixel 0 on the left, 1 on the right.
    fn two_band_fixture() -> (SuperpixelMap, crate::image::LabImage) {
        let (w, h) = (32, 16);
        let labels: Vec<u32> = (0..w * h)
            .map(|i| if i % w < w / 2 { 0 } else { 1 })
            .collect();
        let img = Image::new(w, h, vec![100; w * h * 3]).unwrap();
        (
            SuperpixelMap::from_labels(w, h, labels).unwrap(),
            img.to_lab(),
        )
    }

    fn kp(x: f64, y: f64) -> Keypoint {
        Keypoint {
            x,
            y,
            scale: 1.6,
            orientation: 0.0,
        }
    }

    fn dummy_desc(seed: usize) -> Descriptor128 {
        let mut v = [0.0; 128];
        v[seed % 128] = 1.0;
        Descriptor128::new(v)
    }

    #[test]
    fn all_keypoints_in_one_superpixel() {
        let (sp, lab) = two_band_fixture();
        let tree = build_region_tree(&sp, &lab);
        let mut fs = FeatureSet::default();
        for i in 0..6 {
            fs.push(kp(2.0 + i as f64, 3.0), dummy_desc(i));
        }
        let scores = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let picked = select_landmarks(&tree, &sp, &fs, &scores, 1, 5).unwrap();
        assert_eq!(picked.len(), 1);
        // All mass sits in superpixel 0's branch: leaf 0 or an ancestor.
        assert!(picked[0].region_id == 0 || picked[0].region_id == 2);
        assert!((picked[0].saliency - 21.0).abs() < 1e-9);
        assert_eq!(picked[0].member_keypoint_indices, vec![0, 1, 2, 3, 4, 5]);
    }

    #[test]
    fn shortfall_returns_fewer_landmarks() {
        let (sp, lab) = two_band_fixture();
        let tree = build_region_tree(&sp, &lab);
        let mut fs = FeatureSet::default();
        for i in 0..6 {
            fs.push(kp(2.0 + i as f64, 3.0), dummy_desc(i));
        }
        let scores = vec![1.0; 6];
        // Only leaf 0 and the root meet min_keypoints = 5: 2 eligible regions.
        let picked = select_landmarks(&tree, &sp, &fs, &scores, 40, 5).unwrap();
        assert_eq!(picked.len(), 2);
    }

    #[test]
    fn saliency_tie_breaks_to_smaller_region_id() {
        let (sp, lab) = two_band_fixture();
        let tree = build_region_tree(&sp, &lab);
        let mut fs = FeatureSet::default();
        // One keypoint in each superpixel, equal scores.
        fs.push(kp(2.0, 3.0), dummy_desc(0));
        fs.push(kp(20.0, 3.0), dummy_desc(1));
        let picked = select_landmarks(&tree, &sp, &fs, &[1.0, 1.0], 1, 1).unwrap();
        assert_eq!(picked[0].region_id, 0);
    }

    #[test]
    fn no_candidates_error() {
        let (sp, lab) = two_band_fixture();
        let tree = build_region_tree(&sp, &lab);
        let mut fs = FeatureSet::default();
        fs.push(kp(2.0, 3.0), dummy_desc(0));
        match select_landmarks(&tree, &sp, &fs, &[1.0], 1, 5) {
            Err(FeatureError::NoCandidates { min_keypoints: 5 }) => {}
            other => panic!("expected NoCandidates, got {other:?}"),
        }
    }

    #[test]
    fn internal_saliency_is_sum_of_children() {
        let (sp, lab) = two_band_fixture();
        let tree = build_region_tree(&sp, &lab);
        let mut fs = FeatureSet::default();
        for i in 0..8 {
            let x = if i % 2 == 0 { 3.0 } else { 25.0 };
            fs.push(kp(x + i as f64 / 10.0, 5.0), dummy_desc(i));
        }
        let scores: Vec<f64> = (0..8).map(|i| 0.5 + i as f64).collect();
        let picked = select_landmarks(&tree, &sp, &fs, &scores, 3, 1).unwrap();
        let by_id: std::collections::HashMap<usize, f64> =
            picked.iter().map(|l| (l.region_id, l.saliency)).collect();
        // Root (id 2) = leaf 0 + leaf 1.
        if let (Some(&root), Some(&l0), Some(&l1)) = (by_id.get(&2), by_id.get(&0), by_id.get(&1)) {
            assert!((root - (l0 + l1)).abs() < 1e-9);
        } else {
            panic!("expected all three regions eligible, got {picked:?}");
        }
    }
}
