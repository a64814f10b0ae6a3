//! Agglomerative region merging over the superpixel adjacency graph.
//!
//! Starting from one leaf per superpixel, the two adjacent regions with the
//! smallest Euclidean distance between mean Lab colors are merged until a
//! single root remains. `S` superpixels always produce exactly `2S - 1`
//! regions: `S` leaves plus `S - 1` internal nodes.

use std::collections::{BTreeMap, BTreeSet};

use super::SuperpixelMap;
use crate::image::LabImage;

/// One node of the [`RegionTree`].
#[derive(Debug, Clone)]
pub struct Region {
    pub id: usize,
    /// Superpixel indices covered by this region, sorted ascending.
    pub members: Vec<u32>,
    /// Child node ids; `None` for leaves.
    pub children: Option<(usize, usize)>,
    /// Pixel-weighted mean Lab color.
    pub mean_color: [f64; 3],
    /// Pixel-weighted centroid `(x, y)`.
    pub centroid: (f64, f64),
    pub pixel_count: usize,
    /// Mean-color distance between the children at merge time; `None` for leaves.
    pub merge_distance: Option<f64>,
}

/// Dendrogram of regions: leaves `0..S` map one-to-one to superpixels,
/// internal nodes `S..2S-1` follow merge order, the last node is the root.
#[derive(Debug, Clone)]
pub struct RegionTree {
    nodes: Vec<Region>,
    leaf_count: usize,
}

impl RegionTree {
    pub fn nodes(&self) -> &[Region] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> &Region {
        &self.nodes[id]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Number of leaves `S`.
    pub fn leaf_count(&self) -> usize {
        self.leaf_count
    }

    pub fn root(&self) -> &Region {
        self.nodes.last().expect("tree has at least one node")
    }
}

pub fn build_region_tree(sp: &SuperpixelMap, img: &LabImage) -> RegionTree {
    let s = sp.count();
    let (width, height) = (sp.width(), sp.height());

    // Per-superpixel statistics.
    let mut sums = vec![[0.0f64; 6]; s];
    for y in 0..height {
        for x in 0..width {
            let l = sp.label(x, y) as usize;
            let lab = img.get(x, y);
            let acc = &mut sums[l];
            acc[0] += lab[0];
            acc[1] += lab[1];
            acc[2] += lab[2];
            acc[3] += x as f64;
            acc[4] += y as f64;
            acc[5] += 1.0;
        }
    }

    // Adjacency from 4-neighbor label transitions.
    let mut adjacency: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); 2 * s - 1];
    for y in 0..height {
        for x in 0..width {
            let a = sp.label(x, y) as usize;
            if x + 1 < width {
                let b = sp.label(x + 1, y) as usize;
                if a != b {
                    adjacency[a].insert(b);
                    adjacency[b].insert(a);
                }
            }
            if y + 1 < height {
                let b = sp.label(x, y + 1) as usize;
                if a != b {
                    adjacency[a].insert(b);
                    adjacency[b].insert(a);
                }
            }
        }
    }

    let mut nodes: Vec<Region> = (0..s)
        .map(|i| {
            let n = sums[i][5];
            Region {
                id: i,
                members: vec![i as u32],
                children: None,
                mean_color: [sums[i][0] / n, sums[i][1] / n, sums[i][2] / n],
                centroid: (sums[i][3] / n, sums[i][4] / n),
                pixel_count: n as usize,
                merge_distance: None,
            }
        })
        .collect();

    let mut alive: BTreeSet<usize> = (0..s).collect();

    for next_id in s..2 * s - 1 {
        // Closest adjacent pair by mean-color distance; ties break on the
        // lexicographically smaller (low id, high id) pair.
        let mut best: Option<(f64, usize, usize)> = None;
        for &a in &alive {
            for &b in adjacency[a].range(a + 1..) {
                if !alive.contains(&b) {
                    continue;
                }
                let d = color_distance(&nodes[a].mean_color, &nodes[b].mean_color);
                let candidate = (d, a, b);
                best = Some(match best {
                    None => candidate,
                    Some(cur) => {
                        if candidate.0 < cur.0
                            || (candidate.0 == cur.0 && (candidate.1, candidate.2) < (cur.1, cur.2))
                        {
                            candidate
                        } else {
                            cur
                        }
                    }
                });
            }
        }
        let (dist, a, b) = best.expect("adjacency graph of an image partition is connected");

        let (na, nb) = (nodes[a].pixel_count as f64, nodes[b].pixel_count as f64);
        let n = na + nb;
        let mean_color = [
            (nodes[a].mean_color[0] * na + nodes[b].mean_color[0] * nb) / n,
            (nodes[a].mean_color[1] * na + nodes[b].mean_color[1] * nb) / n,
            (nodes[a].mean_color[2] * na + nodes[b].mean_color[2] * nb) / n,
        ];
        let centroid = (
            (nodes[a].centroid.0 * na + nodes[b].centroid.0 * nb) / n,
            (nodes[a].centroid.1 * na + nodes[b].centroid.1 * nb) / n,
        );
        let mut members = Vec::with_capacity(nodes[a].members.len() + nodes[b].members.len());
        members.extend_from_slice(&nodes[a].members);
        members.extend_from_slice(&nodes[b].members);
        members.sort_unstable();

        let merged: BTreeSet<usize> = adjacency[a]
            .union(&adjacency[b])
            .copied()
            .filter(|&x| x != a && x != b)
            .collect();
        for &nb_id in &merged {
            adjacency[nb_id].remove(&a);
            adjacency[nb_id].remove(&b);
            adjacency[nb_id].insert(next_id);
        }
        adjacency[next_id] = merged;

        alive.remove(&a);
        alive.remove(&b);
        alive.insert(next_id);

        nodes.push(Region {
            id: next_id,
            members,
            children: Some((a, b)),
            mean_color,
            centroid,
            pixel_count: n as usize,
            merge_distance: Some(dist),
        });
    }

    RegionTree {
        nodes,
        leaf_count: s,
    }
}

fn color_distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let d0 = a[0] - b[0];
    let d1 = a[1] - b[1];
    let d2 = a[2] - b[2];
    (d0 * d0 + d1 * d1 + d2 * d2).sqrt()
}

/// Validates the structural invariants of a tree against its superpixel map.
/// Used by tests and the experiment harness's self-checks.
pub(crate) fn check_tree_invariants(tree: &RegionTree, sp: &SuperpixelMap) -> Result<(), String> {
    let s = sp.count();
    if tree.len() != 2 * s - 1 {
        return Err(format!("expected {} nodes, found {}", 2 * s - 1, tree.len()));
    }
    if tree.leaf_count() != s {
        return Err(format!("expected {} leaves, found {}", s, tree.leaf_count()));
    }
    for (i, node) in tree.nodes().iter().enumerate() {
        if node.id != i {
            return Err(format!("node {i} has id {}", node.id));
        }
        match node.children {
            None => {
                if i >= s {
                    return Err(format!("internal node {i} has no children"));
                }
                if node.members != [i as u32] {
                    return Err(format!("leaf {i} does not map to superpixel {i}"));
                }
            }
            Some((a, b)) => {
                if i < s {
                    return Err(format!("leaf {i} has children"));
                }
                let mut union: Vec<u32> = tree.node(a).members.clone();
                union.extend_from_slice(&tree.node(b).members);
                union.sort_unstable();
                let dedup_len = {
                    let mut u = union.clone();
                    u.dedup();
                    u.len()
                };
                if dedup_len != union.len() {
                    return Err(format!("children of node {i} overlap"));
                }
                if union != node.members {
                    return Err(format!("node {i} members are not the union of its children"));
                }
            }
        }
    }
    let root_members: Vec<u32> = (0..s as u32).collect();
    if tree.root().members != root_members {
        return Err("root does not cover all superpixels".into());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::Image;

    /// Builds a horizontal strip image with `colors.len()` equal-width bands
    /// and a matching superpixel map with one label per band.
    fn striped(colors: &[[u8; 3]], band: usize, height: usize) -> (SuperpixelMap, LabImage) {
        let width = band * colors.len();
        let mut data = Vec::with_capacity(width * height * 3);
        let mut labels = Vec::with_capacity(width * height);
        for _y in 0..height {
            for x in 0..width {
                let i = x / band;
                data.extend_from_slice(&colors[i]);
                labels.push(i as u32);
            }
        }
        let img = Image::new(width, height, data).unwrap();
        let sp = SuperpixelMap::from_labels(width, height, labels).unwrap();
        (sp, img.to_lab())
    }

    #[test]
    fn two_superpixels_make_three_nodes() {
        let (sp, lab) = striped(&[[0, 0, 0], [255, 255, 255]], 16, 16);
        let tree = build_region_tree(&sp, &lab);
        assert_eq!(tree.len(), 3);
        assert_eq!(tree.root().members, vec![0, 1]);
        check_tree_invariants(&tree, &sp).unwrap();
    }

    #[test]
    fn same_color_pairs_merge_first() {
        // black, black, white, white: the zero-distance pairs merge first.
        let (sp, lab) = striped(
            &[[0, 0, 0], [0, 0, 0], [255, 255, 255], [255, 255, 255]],
            16,
            16,
        );
        let tree = build_region_tree(&sp, &lab);
        assert_eq!(tree.len(), 7);
        let first = tree.node(4);
        let second = tree.node(5);
        assert_eq!(first.children, Some((0, 1)));
        assert_eq!(first.merge_distance, Some(0.0));
        assert_eq!(second.children, Some((2, 3)));
        assert_eq!(second.merge_distance, Some(0.0));
        check_tree_invariants(&tree, &sp).unwrap();
    }

    #[test]
    fn seventy_two_superpixels_make_143_nodes() {
        // 12x6 grid of 12x12 cells = exactly 72 superpixels.
        let (width, height) = (144, 72);
        let mut labels = Vec::with_capacity(width * height);
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                let cell = (y / 12) * 12 + x / 12;
                labels.push(cell as u32);
                data.extend_from_slice(&[(cell * 3 % 256) as u8, (cell * 7 % 256) as u8, 128]);
            }
        }
        let sp = SuperpixelMap::from_labels(width, height, labels).unwrap();
        let lab = Image::new(width, height, data).unwrap().to_lab();
        let tree = build_region_tree(&sp, &lab);
        assert_eq!(sp.count(), 72);
        assert_eq!(tree.len(), 143);
        check_tree_invariants(&tree, &sp).unwrap();
    }

    #[test]
    fn merged_pairs_were_adjacent_and_distances_recorded() {
        let (sp, lab) = striped(
            &[[10, 10, 10], [40, 40, 40], [200, 200, 200], [90, 90, 90]],
            16,
            16,
        );
        let tree = build_region_tree(&sp, &lab);
        for node in tree.nodes().iter().skip(sp.count()) {
            assert!(node.merge_distance.is_some());
            assert!(node.merge_distance.unwrap() >= 0.0);
        }
    }
}
