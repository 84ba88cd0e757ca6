use std::fmt::Write as _;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::image::{dense_grid, GrayImage};
use crate::load::{DenseConfig, DenseExtractor, LoadDescriptor};
use crate::patterns::UniformTable;

/// Mean and worst L1 distance between corresponding descriptors for one
/// image transform.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub transform: String,
    pub images: usize,
    pub points: usize,
    pub mean_l1: f64,
    pub max_l1: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    pub fn row(&self, transform: &str) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.transform == transform)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("transform,images,points,mean_l1,max_l1\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{:.6e},{:.6e}", r.transform, r.images, r.points, r.mean_l1, r.max_l1);
        }
        out
    }
}

/// Transforms applied by [`invariance_bench`], in report order.
pub const BENCH_TRANSFORMS: [&str; 5] = ["identity", "rot90", "rot180", "rot270", "affine"];

/// Compares the full-resolution dense descriptors of every image with those
/// of its rotated and intensity-remapped versions, matching grid points
/// through the transform. Affine maps use `a` in [0.5, 3] and `b` in
/// [-40, 40], drawn from `seed`.
pub fn invariance_bench(images: &[GrayImage], cfg: &DenseConfig, seed: u64) -> Result<BenchReport> {
    if images.is_empty() {
        return Err(Error::EmptyInput("invariance bench needs at least one image".into()));
    }
    let ex = DenseExtractor::new(cfg.clone(), UniformTable::shared())?;
    let margin = cfg.load.margin();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dists: Vec<Vec<f64>> = vec![Vec::new(); BENCH_TRANSFORMS.len()];
    for img in images {
        let grid = dense_grid(img, cfg.step, margin)?;
        let base = ex.extract_points(img, &grid.points)?;
        for (t, name) in BENCH_TRANSFORMS.iter().enumerate() {
            let other: Vec<LoadDescriptor> = match *name {
                "affine" => {
                    let a = rng.random_range(0.5..=3.0);
                    let b = rng.random_range(-40.0..=40.0);
                    ex.extract_points(&img.affine_intensity(a, b)?, &grid.points)?
                }
                "identity" => ex.extract_points(img, &grid.points)?,
                _ => {
                    let turns = t as u32;
                    let pts: Vec<(usize, usize)> =
                        grid.points.iter().map(|&(x, y)| img.rotated_point(x, y, turns)).collect();
                    ex.extract_points(&img.rotate90(turns), &pts)?
                }
            };
            dists[t].extend(base.iter().zip(&other).map(|(a, b)| a.l1_distance(b)));
        }
    }
    let rows = BENCH_TRANSFORMS
        .iter()
        .zip(dists)
        .map(|(name, d)| BenchRow {
            transform: (*name).to_owned(),
            images: images.len(),
            points: d.len(),
            mean_l1: d.iter().sum::<f64>() / d.len().max(1) as f64,
            max_l1: d.iter().copied().fold(0.0, f64::max),
        })
        .collect();
    Ok(BenchReport { rows })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Throughput {
    pub descriptors: usize,
    pub seconds: f64,
    pub per_second: f64,
}

/// Single-threaded dense extraction rate on `img`, repeating whole-image
/// extraction until at least `min_seconds` have elapsed.
pub fn measure_throughput(img: &GrayImage, cfg: &DenseConfig, min_seconds: f64) -> Result<Throughput> {
    let ex = DenseExtractor::new(cfg.clone(), UniformTable::shared())?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?;
    pool.install(|| {
        let start = Instant::now();
        let mut descriptors = 0;
        loop {
            descriptors += ex.extract(img)?.descriptors.len();
            let seconds = start.elapsed().as_secs_f64();
            if seconds >= min_seconds {
                return Ok(Throughput { descriptors, seconds, per_second: descriptors as f64 / seconds });
            }
        }
    })
}

/// Uniform 8-bit noise, the bench's default input.
pub fn noise_image(width: usize, height: usize, seed: u64) -> Result<GrayImage> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    GrayImage::from_fn(width, height, |_, _| f64::from(rng.random::<u8>()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::load::FrameMode;

    fn noise(size: usize, seed: u64) -> GrayImage {
        noise_image(size, size, seed).unwrap()
    }

    #[test]
    fn bench_rows() {
        let imgs = [noise(56, 1), noise(56, 2)];
        let r = invariance_bench(&imgs, &DenseConfig::default(), 0).unwrap();
        assert_eq!(r.rows.len(), 5);
        assert_eq!(r.row("identity").unwrap().max_l1, 0.0);
        assert!(r.row("affine").unwrap().max_l1 < 1e-6);
        for t in ["rot90", "rot180", "rot270"] {
            assert!(r.row(t).unwrap().mean_l1 < 1e-3);
        }
        assert!(r.to_csv().starts_with("transform,images,points,mean_l1,max_l1\nidentity,2,"));

        let mut fixed = DenseConfig::default();
        fixed.load.frame = FrameMode::Fixed;
        let f = invariance_bench(&imgs, &fixed, 0).unwrap();
        assert!(f.row("rot90").unwrap().mean_l1 > 100.0 * r.row("rot90").unwrap().mean_l1.max(1e-6));
    }

    #[test]
    fn throughput_counts_descriptors() {
        let t = measure_throughput(&noise(64, 3), &DenseConfig::default(), 0.0).unwrap();
        assert!(t.descriptors > 0 && t.per_second > 0.0);
    }
}
