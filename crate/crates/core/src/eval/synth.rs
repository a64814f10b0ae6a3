//! Seeded synthetic benchmark generator.
//!
//! Stands in for a private campus photo collection: images are composed from
//! a shared pool of textured patches (noise, checker and gradient-blob
//! motifs) on a flat background. Each query image is a perturbed copy of one
//! database image (global shift of at most 10 px, brightness within 10%, one
//! patch swapped), which defines the ground truth. Library images reuse the
//! same patch instances so landmarks are shareable across sets. Everything
//! derives from one seed and reruns produce byte-identical files.

use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{EvalError, GroundTruth};
use crate::image::{write_png, Image};

#[derive(Debug, Clone)]
pub struct SynthParams {
    pub n_library: usize,
    pub n_database: usize,
    pub n_query: usize,
    pub width: usize,
    pub height: usize,
    /// Extra one-off clutter patches per database/query image.
    pub n_distractors: usize,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            n_library: 100,
            n_database: 100,
            n_query: 50,
            width: 160,
            height: 120,
            n_distractors: 2,
        }
    }
}

const POOL_SIZE: usize = 48;
const PATCHES_PER_IMAGE: usize = 6;
const PLACEMENT_MARGIN: usize = 12;
const MAX_SHIFT: i64 = 10;

#[derive(Clone)]
struct Patch {
    w: usize,
    h: usize,
    pixels: Vec<u8>,
}

#[derive(Clone)]
struct Placement {
    patch: Patch,
    /// Pool index, or `None` for image-unique distractors.
    pool_idx: Option<usize>,
    x: usize,
    y: usize,
}

#[derive(Clone)]
struct Composition {
    background: [u8; 3],
    placements: Vec<Placement>,
    brightness: f64,
}

/// Domain-separated substream seed.
fn sub_seed(seed: u64, tag: u64, index: u64) -> u64 {
    // splitmix64 over the combined key.
    let mut z = seed
        .wrapping_add(tag.wrapping_mul(0x9E3779B97F4A7C15))
        .wrapping_add(index.wrapping_mul(0xBF58476D1CE4E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

fn random_color(rng: &mut ChaCha8Rng) -> [u8; 3] {
    [
        rng.random_range(40..=255),
        rng.random_range(40..=255),
        rng.random_range(40..=255),
    ]
}

fn make_patch(rng: &mut ChaCha8Rng, kind: usize) -> Patch {
    let size = 22 + 2 * rng.random_range(0..7usize);
    let (w, h) = (size, size);
    let mut pixels = vec![0u8; w * h * 3];
    let c1 = random_color(rng);
    let c2 = random_color(rng);
    match kind % 3 {
        // Two-color speckle noise.
        0 => {
            for p in 0..w * h {
                let base = if rng.random::<f64>() < 0.5 { c1 } else { c2 };
                for ch in 0..3 {
                    let jitter = rng.random_range(-20i64..=20);
                    pixels[p * 3 + ch] = (base[ch] as i64 + jitter).clamp(0, 255) as u8;
                }
            }
        }
        // Checkerboard motif with a random cell size and phase.
        1 => {
            let cell = rng.random_range(3..=7usize);
            let (px, py) = (rng.random_range(0..cell), rng.random_range(0..cell));
            for y in 0..h {
                for x in 0..w {
                    let on = ((x + px) / cell + (y + py) / cell) % 2 == 0;
                    let base = if on { c1 } else { c2 };
                    let p = y * w + x;
                    for ch in 0..3 {
                        let jitter = rng.random_range(-10i64..=10);
                        pixels[p * 3 + ch] = (base[ch] as i64 + jitter).clamp(0, 255) as u8;
                    }
                }
            }
        }
        // Radial gradient blob.
        _ => {
            let (cx, cy) = (w as f64 / 2.0, h as f64 / 2.0);
            let max_r = cx.hypot(cy);
            for y in 0..h {
                for x in 0..w {
                    let r = ((x as f64 - cx).hypot(y as f64 - cy) / max_r).min(1.0);
                    let p = y * w + x;
                    for ch in 0..3 {
                        let v = c1[ch] as f64 * (1.0 - r) + c2[ch] as f64 * r;
                        let jitter = rng.random_range(-8i64..=8);
                        pixels[p * 3 + ch] = (v as i64 + jitter).clamp(0, 255) as u8;
                    }
                }
            }
        }
    }
    Patch { w, h, pixels }
}

fn build_pool(seed: u64) -> Vec<Patch> {
    (0..POOL_SIZE)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, 1, i as u64));
            make_patch(&mut rng, i)
        })
        .collect()
}

fn overlaps(a: &Placement, bx: usize, by: usize, bw: usize, bh: usize) -> bool {
    let gap = 2;
    a.x < bx + bw + gap && bx < a.x + a.w() + gap && a.y < by + bh + gap && by < a.y + a.h() + gap
}

impl Placement {
    fn w(&self) -> usize {
        self.patch.w
    }

    fn h(&self) -> usize {
        self.patch.h
    }
}

fn place_patches(
    rng: &mut ChaCha8Rng,
    pool: &[Patch],
    pool_indices: &[usize],
    n_distractors: usize,
    width: usize,
    height: usize,
) -> Vec<Placement> {
    let mut placements: Vec<Placement> = Vec::new();
    let mut place = |patch: Patch, pool_idx: Option<usize>, rng: &mut ChaCha8Rng,
                     placements: &mut Vec<Placement>| {
        let max_x = width.saturating_sub(PLACEMENT_MARGIN + patch.w);
        let max_y = height.saturating_sub(PLACEMENT_MARGIN + patch.h);
        let (lo_x, lo_y) = (PLACEMENT_MARGIN.min(max_x), PLACEMENT_MARGIN.min(max_y));
        let mut chosen = (lo_x, lo_y);
        for _attempt in 0..40 {
            let x = rng.random_range(lo_x..=max_x.max(lo_x));
            let y = rng.random_range(lo_y..=max_y.max(lo_y));
            chosen = (x, y);
            if placements
                .iter()
                .all(|p| !overlaps(p, x, y, patch.w, patch.h))
            {
                break;
            }
        }
        placements.push(Placement {
            patch,
            pool_idx,
            x: chosen.0,
            y: chosen.1,
        });
    };
    for &pi in pool_indices {
        place(pool[pi].clone(), Some(pi), rng, &mut placements);
    }
    for d in 0..n_distractors {
        let mut drng = ChaCha8Rng::seed_from_u64(rng.random::<u64>());
        let patch = make_patch(&mut drng, d);
        place(patch, None, rng, &mut placements);
    }
    placements
}

fn sample_distinct(rng: &mut ChaCha8Rng, n: usize, upper: usize) -> Vec<usize> {
    let mut chosen: Vec<usize> = Vec::with_capacity(n);
    while chosen.len() < n {
        let c = rng.random_range(0..upper);
        if !chosen.contains(&c) {
            chosen.push(c);
        }
    }
    chosen
}

fn render(comp: &Composition, width: usize, height: usize) -> Image {
    let mut data = Vec::with_capacity(width * height * 3);
    for _ in 0..width * height {
        data.extend_from_slice(&comp.background);
    }
    for pl in &comp.placements {
        for py in 0..pl.h() {
            let row_y = pl.y + py;
            if row_y >= height {
                continue;
            }
            for px in 0..pl.w() {
                let col_x = pl.x + px;
                if col_x >= width {
                    continue;
                }
                let src = (py * pl.w() + px) * 3;
                let dst = (row_y * width + col_x) * 3;
                data[dst..dst + 3].copy_from_slice(&pl.patch.pixels[src..src + 3]);
            }
        }
    }
    if (comp.brightness - 1.0).abs() > 1e-12 {
        for v in data.iter_mut() {
            *v = ((*v as f64) * comp.brightness).round().clamp(0.0, 255.0) as u8;
        }
    }
    Image::new(width, height, data).expect("synthetic image dimensions are validated")
}

/// Generates a dataset under `out_root/{library,database,query}` plus
/// `out_root/ground_truth.csv`, returning the ground truth. Fully
/// deterministic per seed.
pub fn generate_synthetic_dataset(
    seed: u64,
    params: &SynthParams,
    out_root: &Path,
) -> Result<GroundTruth, EvalError> {
    validate(params)?;
    let pool = build_pool(seed);
    let (width, height) = (params.width, params.height);

    for sub in ["library", "database", "query"] {
        std::fs::create_dir_all(out_root.join(sub))
            .map_err(|e| EvalError::io(&out_root.join(sub), e))?;
    }

    // Database compositions are kept so queries can perturb them.
    let mut db_comps = Vec::with_capacity(params.n_database);
    for i in 0..params.n_database {
        let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, 2, i as u64));
        let indices = sample_distinct(&mut rng, PATCHES_PER_IMAGE.min(POOL_SIZE), POOL_SIZE);
        let placements = place_patches(
            &mut rng,
            &pool,
            &indices,
            params.n_distractors,
            width,
            height,
        );
        let bg_base = 55i64;
        let background = [
            (bg_base + rng.random_range(-8i64..=8)) as u8,
            (bg_base + 5 + rng.random_range(-8i64..=8)) as u8,
            (bg_base + 12 + rng.random_range(-8i64..=8)) as u8,
        ];
        let comp = Composition {
            background,
            placements,
            brightness: 1.0,
        };
        let img = render(&comp, width, height);
        write_png(
            &out_root.join("database").join(format!("db_{i:04}.png")),
            &img,
        )?;
        db_comps.push(comp);
    }

    for i in 0..params.n_library {
        let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, 3, i as u64));
        let indices = sample_distinct(&mut rng, PATCHES_PER_IMAGE.min(POOL_SIZE), POOL_SIZE);
        let placements = place_patches(&mut rng, &pool, &indices, 0, width, height);
        let background = [
            (55 + rng.random_range(-8i64..=8)) as u8,
            (60 + rng.random_range(-8i64..=8)) as u8,
            (67 + rng.random_range(-8i64..=8)) as u8,
        ];
        let comp = Composition {
            background,
            placements,
            brightness: 1.0,
        };
        let img = render(&comp, width, height);
        write_png(
            &out_root.join("library").join(format!("lib_{i:04}.png")),
            &img,
        )?;
    }

    let mut gt = GroundTruth::default();
    for i in 0..params.n_query {
        let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, 4, i as u64));
        let mut comp = db_comps[i].clone();

        // Global shift of every placement, clamped to stay inside the frame.
        let dx = rng.random_range(-MAX_SHIFT..=MAX_SHIFT);
        let dy = rng.random_range(-MAX_SHIFT..=MAX_SHIFT);
        for pl in comp.placements.iter_mut() {
            let nx = (pl.x as i64 + dx).clamp(0, (width - pl.w()) as i64);
            let ny = (pl.y as i64 + dy).clamp(0, (height - pl.h()) as i64);
            pl.x = nx as usize;
            pl.y = ny as usize;
        }

        // Swap exactly one shared patch for a pool patch the image lacks.
        let shared: Vec<usize> = comp
            .placements
            .iter()
            .enumerate()
            .filter(|(_, p)| p.pool_idx.is_some())
            .map(|(i, _)| i)
            .collect();
        if let Some(&victim) = shared.get(rng.random_range(0..shared.len())) {
            let used: Vec<usize> = comp
                .placements
                .iter()
                .filter_map(|p| p.pool_idx)
                .collect();
            let replacement = loop {
                let c = rng.random_range(0..POOL_SIZE);
                if !used.contains(&c) {
                    break c;
                }
            };
            let old = &comp.placements[victim];
            let patch = pool[replacement].clone();
            let x = old.x.min(width.saturating_sub(PLACEMENT_MARGIN + patch.w));
            let y = old.y.min(height.saturating_sub(PLACEMENT_MARGIN + patch.h));
            comp.placements[victim] = Placement {
                patch,
                pool_idx: Some(replacement),
                x,
                y,
            };
        }

        comp.brightness = 0.9 + 0.2 * rng.random::<f64>();

        let img = render(&comp, width, height);
        let qid = format!("q_{i:04}");
        write_png(&out_root.join("query").join(format!("{qid}.png")), &img)?;
        gt.insert(&qid, &format!("db_{i:04}"));
    }

    gt.write_csv(&out_root.join("ground_truth.csv"))?;
    Ok(gt)
}

fn validate(params: &SynthParams) -> Result<(), EvalError> {
    if params.n_library == 0 || params.n_database == 0 || params.n_query == 0 {
        return Err(EvalError::InvalidParams(
            "image counts must be positive".into(),
        ));
    }
    if params.n_query > params.n_database {
        return Err(EvalError::InvalidParams(format!(
            "n_query {} exceeds n_database {}",
            params.n_query, params.n_database
        )));
    }
    if params.width < 64 || params.height < 64 {
        return Err(EvalError::InvalidParams(format!(
            "image size {}x{} below the 64x64 minimum",
            params.width, params.height
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_params() -> SynthParams {
        SynthParams {
            n_library: 4,
            n_database: 5,
            n_query: 3,
            width: 96,
            height: 72,
            n_distractors: 1,
        }
    }

    fn dir_digest(root: &Path) -> Vec<(String, u64)> {
        let mut entries = Vec::new();
        for sub in ["library", "database", "query"] {
            let mut files: Vec<_> = std::fs::read_dir(root.join(sub))
                .unwrap()
                .map(|e| e.unwrap().path())
                .collect();
            files.sort();
            for f in files {
                let bytes = std::fs::read(&f).unwrap();
                let mut hash = 1469598103934665603u64;
                for b in bytes {
                    hash ^= b as u64;
                    hash = hash.wrapping_mul(1099511628211);
                }
                entries.push((f.file_name().unwrap().to_string_lossy().into_owned(), hash));
            }
        }
        entries
    }

    #[test]
    fn regeneration_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a"), dir.path().join("b"));
        generate_synthetic_dataset(7, &tiny_params(), &a).unwrap();
        generate_synthetic_dataset(7, &tiny_params(), &b).unwrap();
        assert_eq!(dir_digest(&a), dir_digest(&b));
    }

    #[test]
    fn ground_truth_shape_matches_params() {
        let dir = tempfile::tempdir().unwrap();
        let gt = generate_synthetic_dataset(3, &tiny_params(), dir.path()).unwrap();
        assert_eq!(gt.len(), 3);
        for (q, rels) in gt.iter() {
            assert!(q.starts_with("q_"));
            assert_eq!(rels.len(), 1, "single-relevant construction");
        }
        let reloaded = GroundTruth::read_csv(&dir.path().join("ground_truth.csv")).unwrap();
        assert_eq!(reloaded, gt);
    }

    #[test]
    fn invalid_params_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut p = tiny_params();
        p.n_query = 10;
        assert!(matches!(
            generate_synthetic_dataset(1, &p, dir.path()),
            Err(EvalError::InvalidParams(_))
        ));
        let mut p = tiny_params();
        p.width = 32;
        assert!(matches!(
            generate_synthetic_dataset(1, &p, dir.path()),
            Err(EvalError::InvalidParams(_))
        ));
    }

    #[test]
    fn query_is_perturbed_copy_of_source() {
        use crate::image::load_image;
        let dir = tempfile::tempdir().unwrap();
        generate_synthetic_dataset(11, &tiny_params(), dir.path()).unwrap();
        let q = load_image(&dir.path().join("query/q_0000.png")).unwrap();
        let d = load_image(&dir.path().join("database/db_0000.png")).unwrap();
        assert_eq!(q.width(), d.width());
        assert_eq!(q.height(), d.height());
        // The pair should be similar but not identical.
        assert_ne!(q.data(), d.data());
        let mut close = 0usize;
        for (a, b) in q.data().iter().zip(d.data()) {
            if (*a as i16 - *b as i16).abs() <= 32 {
                close += 1;
            }
        }
        let frac = close as f64 / q.data().len() as f64;
        assert!(frac > 0.5, "only {frac:.2} of bytes near the source image");
    }
}
