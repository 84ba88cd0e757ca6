use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::image::GrayImage;

use super::manifest::{DatasetManifest, Entry, ROLE_TEST, ROLE_TRAIN};

pub const MAX_SYNTH_CLASSES: usize = 10;

/// Generative parameters of one synthetic texture class.
#[derive(Clone, Debug, PartialEq)]
pub struct TextureClass {
    /// Sinusoid period in pixels.
    pub period: f64,
    /// Sinusoid direction in radians, fixed per class.
    pub orientation: f64,
    /// Standard deviation of the Gaussian that filters the noise layer.
    pub blur: f64,
    /// Amplitudes of the sinusoid and of the filtered noise.
    pub wave_amp: f64,
    pub noise_amp: f64,
}

/// The parameter table for class `c`; classes differ in spectral content
/// (period and noise bandwidth) and each has its own dominant direction.
pub fn texture_class(c: usize) -> TextureClass {
    const PERIODS: [f64; MAX_SYNTH_CLASSES] = [4.0, 6.5, 10.0, 5.0, 8.0, 14.0, 4.5, 7.0, 11.0, 17.0];
    const BLURS: [f64; MAX_SYNTH_CLASSES] = [0.7, 2.2, 1.0, 3.0, 0.5, 1.6, 2.6, 1.2, 0.8, 2.0];
    TextureClass {
        period: PERIODS[c % MAX_SYNTH_CLASSES],
        orientation: (c as f64 * 37.0 + 10.0).to_radians() % PI,
        blur: BLURS[c % MAX_SYNTH_CLASSES],
        wave_amp: 45.0,
        noise_amp: 25.0,
    }
}

/// Draws one canonical-orientation image of class `class`.
pub fn render_texture(class: &TextureClass, size: usize, rng: &mut ChaCha8Rng) -> Result<GrayImage> {
    let noise = filtered_noise(size, class.blur, rng)?;
    let theta = class.orientation + rng.random_range(-0.1..0.1);
    let phase = rng.random_range(0.0..2.0 * PI);
    let (c, s) = (theta.cos(), theta.sin());
    GrayImage::from_fn(size, size, |x, y| {
        let u = x as f64 * c + y as f64 * s;
        let v = 128.0
            + class.wave_amp * (2.0 * PI * u / class.period + phase).sin()
            + class.noise_amp * noise[y * size + x];
        v.clamp(0.0, 255.0)
    })
}

/// Unit-variance white noise smoothed by a separable Gaussian.
fn filtered_noise(size: usize, sigma: f64, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let radius = (3.0 * sigma).ceil() as usize;
    let n = size + 2 * radius;
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let raw: Vec<f64> = (0..n * n).map(|_| normal.sample(rng)).collect();
    let kernel: Vec<f64> = {
        let k: Vec<f64> = (0..=2 * radius)
            .map(|i| {
                let d = i as f64 - radius as f64;
                (-d * d / (2.0 * sigma * sigma)).exp()
            })
            .collect();
        let sum: f64 = k.iter().sum();
        k.into_iter().map(|v| v / sum).collect()
    };
    // horizontal pass keeps all rows, vertical pass crops to size x size
    let mut h = vec![0.0; n * size];
    for y in 0..n {
        for x in 0..size {
            h[y * size + x] = kernel.iter().enumerate().map(|(i, k)| k * raw[y * n + x + i]).sum();
        }
    }
    let mut out = vec![0.0; size * size];
    for y in 0..size {
        for x in 0..size {
            out[y * size + x] = kernel.iter().enumerate().map(|(i, k)| k * h[(y + i) * size + x]).sum();
        }
    }
    let mean = out.iter().sum::<f64>() / out.len() as f64;
    let sd = (out.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / out.len() as f64).sqrt();
    if sd.is_nan() || sd <= 0.0 {
        return Err(Error::DegenerateOutput("flat noise field".into()));
    }
    Ok(out.into_iter().map(|v| (v - mean) / sd).collect())
}

/// Rotates by a random multiple of 90 degrees and applies a random positive
/// intensity map that keeps every pixel within [0, 255].
pub fn test_variant(img: &GrayImage, rng: &mut ChaCha8Rng) -> Result<GrayImage> {
    let turns = rng.random_range(0..4u32);
    let rotated = img.rotate90(turns);
    let (lo, hi) = rotated.pixels().iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    let span = (hi - lo).max(1.0);
    let a = rng.random_range(0.5..1.5f64).min(250.0 / span);
    let (b_lo, b_hi) = (2.0 - a * lo, 253.0 - a * hi);
    let b = if b_hi > b_lo { rng.random_range(b_lo..b_hi) } else { b_lo };
    rotated.affine_intensity(a, b)
}

/// Writes a labelled synthetic texture set under `out_dir`.
///
/// Every sample is stored twice: a canonical-orientation training variant
/// and a rotated, intensity-remapped test variant, tied together by a
/// `sample:` tag. The manifest is written to `out_dir/manifest.txt` and
/// carries no splits yet.
pub fn synth_textures(
    out_dir: &Path,
    n_classes: usize,
    per_class: usize,
    size: usize,
    seed: u64,
) -> Result<DatasetManifest> {
    synth_textures_with(out_dir, &(0..n_classes).map(texture_class).collect::<Vec<_>>(), per_class, size, seed)
}

/// Like [`synth_textures`] with an explicit parameter table.
pub fn synth_textures_with(
    out_dir: &Path,
    classes: &[TextureClass],
    per_class: usize,
    size: usize,
    seed: u64,
) -> Result<DatasetManifest> {
    if classes.is_empty() || classes.len() > MAX_SYNTH_CLASSES {
        return Err(Error::Config(format!(
            "between 1 and {MAX_SYNTH_CLASSES} classes supported, got {}",
            classes.len()
        )));
    }
    if per_class == 0 || size < 8 {
        return Err(Error::Config("need at least one image per class of at least 8x8 pixels".into()));
    }
    let image_dir = out_dir.join("images");
    std::fs::create_dir_all(&image_dir).map_err(|e| Error::io(&image_dir, e))?;
    let mut entries = Vec::new();
    for (c, class) in classes.iter().enumerate() {
        let label = format!("texture{c}");
        for i in 0..per_class {
            // one stream per image keeps images independent of generation order
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream((c * 100_000 + i) as u64);
            let canonical = quantize(&render_texture(class, size, &mut rng)?)?;
            let test = quantize(&test_variant(&canonical, &mut rng)?)?;
            for (role, img) in [(ROLE_TRAIN, &canonical), (ROLE_TEST, &test)] {
                let short = role.trim_start_matches("role:");
                let rel = PathBuf::from("images").join(format!("{label}_{i:03}_{short}.pgm"));
                img.write_pgm(&out_dir.join(&rel))?;
                entries.push(Entry {
                    path: rel,
                    label: label.clone(),
                    tags: vec![format!("sample:{label}_{i:03}"), role.to_owned()],
                });
            }
        }
    }
    let m = DatasetManifest::new("synthetic", out_dir, entries)?;
    m.save(&out_dir.join("manifest.txt"))?;
    Ok(m)
}

fn quantize(img: &GrayImage) -> Result<GrayImage> {
    GrayImage::from_u8(img.width(), img.height(), &img.to_u8())
}
