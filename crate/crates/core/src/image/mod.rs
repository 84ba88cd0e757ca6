//! Grayscale raster container, sub-pixel sampling and the lossless/lossy
//! transforms used by the descriptor and its invariance checks.

mod decode;
mod grid;

pub use decode::{decode_image, load_image, ImageFormat};
pub use grid::{dense_grid, SampleGrid};

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Row-major grayscale image with intensities nominally in `[0, 255]`.
///
/// Pixels are kept as `f64` so that affine intensity maps and pyramid
/// resampling commute up to rounding far below any comparison threshold.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::DegenerateInput(format!("image dimensions must be positive, got {width}x{height}")));
        }
        if pixels.len() != width * height {
            return Err(Error::DimensionMismatch { expected: width * height, actual: pixels.len() });
        }
        if let Some(i) = pixels.iter().position(|v| !v.is_finite()) {
            return Err(Error::DegenerateInput(format!("non-finite pixel at index {i}")));
        }
        Ok(GrayImage { width, height, pixels })
    }

    /// Builds an image by evaluating `f(x, y)` at every pixel.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        GrayImage::new(width, height, pixels)
    }

    pub fn from_u8(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        GrayImage::new(width, height, bytes.iter().map(|&b| f64::from(b)).collect())
    }

    pub fn constant(width: usize, height: usize, value: f64) -> Result<Self> {
        GrayImage::new(width, height, vec![value; width * height])
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    /// Bilinear read at a real coordinate inside `[0, width-1] x [0, height-1]`.
    /// Lattice coordinates return the stored pixel exactly.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> Result<f64> {
        let max_x = (self.width - 1) as f64;
        let max_y = (self.height - 1) as f64;
        if !(0.0..=max_x).contains(&x) || !(0.0..=max_y).contains(&y) {
            return Err(self.out_of_bounds(x, y));
        }
        let x0 = x.floor();
        let y0 = y.floor();
        Ok(self.lerp_at(x0 as usize, y0 as usize, x - x0, y - y0))
    }

    /// Bilinear read at `(cx + dx, cy + dy)` where the base is a lattice
    /// point. The fractional weights come from the offset alone, so every
    /// point with the same offset uses bit-identical weights.
    pub fn sample_offset(&self, cx: usize, cy: usize, dx: f64, dy: f64) -> Result<f64> {
        let fdx = dx.floor();
        let fdy = dy.floor();
        let ix = cx as i64 + fdx as i64;
        let iy = cy as i64 + fdy as i64;
        let (fx, fy) = (dx - fdx, dy - fdy);
        let in_x = ix >= 0 && (ix as usize) < self.width && (fx == 0.0 || (ix as usize) + 1 < self.width);
        let in_y = iy >= 0 && (iy as usize) < self.height && (fy == 0.0 || (iy as usize) + 1 < self.height);
        if !in_x || !in_y {
            return Err(self.out_of_bounds(cx as f64 + dx, cy as f64 + dy));
        }
        Ok(self.lerp_at(ix as usize, iy as usize, fx, fy))
    }

    /// Interpolates between the four pixels anchored at `(x0, y0)`. Uses the
    /// lerp form so a constant neighbourhood reproduces its value exactly.
    #[inline]
    fn lerp_at(&self, x0: usize, y0: usize, fx: f64, fy: f64) -> f64 {
        let x1 = if fx == 0.0 { x0 } else { x0 + 1 };
        let y1 = if fy == 0.0 { y0 } else { y0 + 1 };
        let w = self.width;
        let p = &self.pixels;
        lerp2(p[y0 * w + x0], p[y0 * w + x1], p[y1 * w + x0], p[y1 * w + x1], fx, fy)
    }

    fn out_of_bounds(&self, x: f64, y: f64) -> Error {
        Error::OutOfBounds { x, y, width: self.width, height: self.height }
    }

    /// Resamples to `round(width*factor) x round(height*factor)` with
    /// pixel-centre aligned bilinear reads. Fails when the result is smaller
    /// than `2*margin` on either side (or empty).
    pub fn rescale(&self, factor: f64, margin: usize) -> Result<GrayImage> {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(Error::Config(format!("rescale factor must be positive, got {factor}")));
        }
        let out_w = (self.width as f64 * factor).round() as usize;
        let out_h = (self.height as f64 * factor).round() as usize;
        let min_side = (2 * margin).max(1);
        if out_w < min_side || out_h < min_side {
            return Err(Error::DegenerateOutput(format!(
                "{}x{} at factor {factor} gives {out_w}x{out_h}, need at least {min_side} per side",
                self.width, self.height
            )));
        }
        if out_w == self.width && out_h == self.height {
            return Ok(self.clone());
        }
        let sx = self.width as f64 / out_w as f64;
        let sy = self.height as f64 / out_h as f64;
        let max_x = (self.width - 1) as f64;
        let max_y = (self.height - 1) as f64;
        let xs: Vec<(usize, f64)> =
            (0..out_w).map(|x| split(((x as f64 + 0.5) * sx - 0.5).clamp(0.0, max_x))).collect();
        let mut pixels = Vec::with_capacity(out_w * out_h);
        for y in 0..out_h {
            let (y0, fy) = split(((y as f64 + 0.5) * sy - 0.5).clamp(0.0, max_y));
            for &(x0, fx) in &xs {
                pixels.push(self.lerp_at(x0, y0, fx, fy));
            }
        }
        GrayImage::new(out_w, out_h, pixels)
    }

    /// Lossless rotation by `quarter_turns * 90` degrees, counter-clockwise
    /// as displayed (x right, y down). Pixel `(x, y)` lands on
    /// `(y, width-1-x)` for one quarter turn.
    pub fn rotate90(&self, quarter_turns: u32) -> GrayImage {
        let mut img = self.clone();
        for _ in 0..quarter_turns % 4 {
            img = img.rotate_quarter();
        }
        img
    }

    fn rotate_quarter(&self) -> GrayImage {
        let (w, h) = (self.width, self.height);
        let mut pixels = vec![0.0; w * h];
        // destination is h wide and w tall
        for y in 0..h {
            for x in 0..w {
                let (nx, ny) = (y, w - 1 - x);
                pixels[ny * h + nx] = self.pixels[y * w + x];
            }
        }
        GrayImage { width: h, height: w, pixels }
    }

    /// Where lattice point `(x, y)` of this image ends up after
    /// [`rotate90`](Self::rotate90) with the same number of turns.
    pub fn rotated_point(&self, x: usize, y: usize, quarter_turns: u32) -> (usize, usize) {
        let (mut w, mut h) = (self.width, self.height);
        let (mut px, mut py) = (x, y);
        for _ in 0..quarter_turns % 4 {
            (px, py) = (py, w - 1 - px);
            (w, h) = (h, w);
        }
        (px, py)
    }

    /// Rotation by an arbitrary angle (radians, counter-clockwise as
    /// displayed) about the image centre with bilinear resampling. Pixels
    /// whose source falls outside the image take `fill`.
    pub fn rotate(&self, angle: f64, fill: f64) -> GrayImage {
        let cx = (self.width - 1) as f64 / 2.0;
        let cy = (self.height - 1) as f64 / 2.0;
        let (s, c) = angle.sin_cos();
        let mut pixels = Vec::with_capacity(self.pixels.len());
        for y in 0..self.height {
            for x in 0..self.width {
                let (dx, dy) = (x as f64 - cx, y as f64 - cy);
                // inverse of the y-down counter-clockwise rotation
                let sx = cx + c * dx - s * dy;
                let sy = cy + s * dx + c * dy;
                pixels.push(self.sample_bilinear(sx, sy).unwrap_or(fill));
            }
        }
        GrayImage { width: self.width, height: self.height, pixels }
    }

    /// Maps every pixel to `a*v + b` without clamping.
    pub fn affine_intensity(&self, a: f64, b: f64) -> Result<GrayImage> {
        if !(a > 0.0 && a.is_finite() && b.is_finite()) {
            return Err(Error::Config(format!("affine map needs a > 0, got a={a}, b={b}")));
        }
        GrayImage::new(self.width, self.height, self.pixels.iter().map(|&v| a * v + b).collect())
    }

    /// Intensities rounded and clamped to 8 bits.
    pub fn to_u8(&self) -> Vec<u8> {
        self.pixels.iter().map(|&v| v.round().clamp(0.0, 255.0) as u8).collect()
    }

    /// Binary 8-bit PGM dump (values rounded and clamped).
    pub fn write_pgm(&self, path: &Path) -> Result<()> {
        let mut bytes = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        bytes.extend(self.to_u8());
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&bytes).map_err(|e| Error::io(path, e))
    }
}

#[inline]
fn split(v: f64) -> (usize, f64) {
    let f = v.floor();
    (f as usize, v - f)
}

#[inline]
pub(crate) fn lerp2(v00: f64, v10: f64, v01: f64, v11: f64, fx: f64, fy: f64) -> f64 {
    let top = v00 + fx * (v10 - v00);
    let bottom = v01 + fx * (v11 - v01);
    top + fy * (bottom - top)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(w: usize, h: usize) -> GrayImage {
        GrayImage::from_fn(w, h, |x, y| (x * 7 + y * 13) as f64 % 256.0).unwrap()
    }

    #[test]
    fn rejects_bad_construction() {
        assert!(GrayImage::new(0, 3, vec![]).is_err());
        assert!(matches!(GrayImage::new(2, 2, vec![0.0; 3]), Err(Error::DimensionMismatch { .. })));
        assert!(GrayImage::new(1, 1, vec![f64::NAN]).is_err());
    }

    #[test]
    fn bilinear_examples() {
        let img = ramp(8, 9);
        assert_eq!(img.sample_bilinear(3.0, 5.0).unwrap(), img.pixels()[5 * 8 + 3]);

        let quad = GrayImage::new(2, 2, vec![0.0, 0.0, 100.0, 100.0]).unwrap();
        assert_eq!(quad.sample_bilinear(0.5, 0.5).unwrap(), 50.0);

        let row = GrayImage::new(2, 1, vec![0.0, 100.0]).unwrap();
        assert_eq!(row.sample_bilinear(0.25, 0.0).unwrap(), 25.0);
    }

    #[test]
    fn bilinear_bounds() {
        let img = ramp(4, 4);
        assert!(img.sample_bilinear(3.0, 3.0).is_ok());
        assert!(matches!(img.sample_bilinear(3.01, 0.0), Err(Error::OutOfBounds { .. })));
        assert!(img.sample_bilinear(-0.01, 0.0).is_err());
        assert!(img.sample_offset(3, 3, 0.0, 0.0).is_ok());
        assert!(img.sample_offset(3, 3, 0.5, 0.0).is_err());
        assert!(img.sample_offset(0, 0, -0.5, 0.0).is_err());
    }

    #[test]
    fn offset_and_absolute_reads_agree_on_lattice_bases() {
        let img = ramp(16, 16);
        for &(dx, dy) in &[(0.3, -1.7), (-2.25, 2.5), (1.0, 0.0)] {
            let a = img.sample_offset(7, 8, dx, dy).unwrap();
            let b = img.sample_bilinear(7.0 + dx, 8.0 + dy).unwrap();
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn constant_patch_is_exact_for_any_weights() {
        let img = GrayImage::constant(5, 5, 77.3).unwrap();
        assert_eq!(img.sample_bilinear(1.123, 2.987).unwrap(), 77.3);
    }

    #[test]
    fn rescale_examples() {
        let img = ramp(100, 100);
        assert_eq!(img.rescale(1.0, 0).unwrap(), img);
        let small = img.rescale(2f64.powf(-0.5), 0).unwrap();
        assert_eq!((small.width(), small.height()), (71, 71));
        let tiny = ramp(16, 16);
        assert!(matches!(tiny.rescale(0.25, 20), Err(Error::DegenerateOutput(_))));
        assert!(tiny.rescale(0.0, 0).is_err());
    }

    #[test]
    fn rescale_upsample_keeps_range() {
        let img = ramp(10, 6);
        let up = img.rescale(2f64.sqrt(), 0).unwrap();
        assert_eq!((up.width(), up.height()), (14, 8));
        let (lo, hi) = img.pixels().iter().fold((f64::MAX, f64::MIN), |(l, h), &v| (l.min(v), h.max(v)));
        assert!(up.pixels().iter().all(|&v| v >= lo && v <= hi));
    }

    #[test]
    fn rotate90_examples() {
        let img = GrayImage::new(2, 1, vec![1.0, 2.0]).unwrap();
        assert_eq!(img.rotate90(0), img);
        assert_eq!(img.rotate90(2).pixels(), &[2.0, 1.0]);
        let r = ramp(5, 3);
        assert_eq!(r.rotate90(1).rotate90(1).rotate90(1).rotate90(1), r);
        assert_eq!(r.rotate90(4), r);
    }

    #[test]
    fn rotate90_is_counter_clockwise() {
        // right neighbour of the centre moves to the upper neighbour
        let img = GrayImage::from_fn(3, 3, |x, y| if (x, y) == (2, 1) { 9.0 } else { 0.0 }).unwrap();
        let r = img.rotate90(1);
        assert_eq!(r.get(1, 0), 9.0);
        assert_eq!(img.rotated_point(2, 1, 1), (1, 0));
    }

    #[test]
    fn rotated_point_tracks_pixels() {
        let img = ramp(7, 4);
        for turns in 0..4 {
            let r = img.rotate90(turns);
            for y in 0..4 {
                for x in 0..7 {
                    let (px, py) = img.rotated_point(x, y, turns);
                    assert_eq!(r.get(px, py), img.get(x, y));
                }
            }
        }
    }

    #[test]
    fn arbitrary_rotation_matches_quarter_turn_inside() {
        let img = ramp(9, 9);
        let r = img.rotate(std::f64::consts::FRAC_PI_2, 0.0);
        let q = img.rotate90(1);
        // border pixels may land a rounding error outside and take the fill
        for y in 1..8 {
            for x in 1..8 {
                assert!((r.get(x, y) - q.get(x, y)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn affine_examples() {
        let img = GrayImage::new(1, 1, vec![5.0]).unwrap();
        assert_eq!(img.affine_intensity(1.0, 0.0).unwrap(), img);
        assert_eq!(img.affine_intensity(2.0, 10.0).unwrap().get(0, 0), 20.0);
        assert!(img.affine_intensity(0.0, 1.0).is_err());
        assert!(img.affine_intensity(-1.0, 1.0).is_err());
    }

    #[test]
    fn pgm_dump_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.pgm");
        let img = GrayImage::from_u8(3, 2, &[0, 10, 20, 30, 40, 255]).unwrap();
        img.write_pgm(&path).unwrap();
        assert_eq!(load_image(&path).unwrap(), img);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn affine_preserves_strict_order(a in 0.01f64..10.0, b in -100.0f64..100.0,
                                             u in 0.0f64..255.0, v in 0.0f64..255.0) {
                let img = GrayImage::new(2, 1, vec![u, v]).unwrap();
                let t = img.affine_intensity(a, b).unwrap();
                prop_assert_eq!(u.partial_cmp(&v), t.get(0, 0).partial_cmp(&t.get(1, 0)));
            }

            #[test]
            fn lattice_reads_are_exact(w in 1usize..12, h in 1usize..12, seed in any::<u64>()) {
                let img = GrayImage::from_fn(w, h, |x, y| ((seed >> ((x + y) % 50)) & 255) as f64 + 0.25).unwrap();
                for y in 0..h {
                    for x in 0..w {
                        prop_assert_eq!(img.sample_bilinear(x as f64, y as f64).unwrap(), img.get(x, y));
                    }
                }
            }
        }
    }
}
