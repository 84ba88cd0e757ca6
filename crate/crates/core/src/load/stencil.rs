use crate::error::{Error, Result};
use crate::image::{lerp2, GrayImage};
use crate::patterns::{compare_bit, UniformTable, UNIFORM_BINS};

use super::{
    acs_theta, magnitude, neighbor_offset, root_normalize, FrameMode, LoadConfig, LoadDescriptor, MAGNITUDE_RADIUS,
    RING_NEIGHBORS,
};

/// One bilinear read relative to the patch centre.
#[derive(Clone, Copy, Debug)]
struct Tap {
    dx: i32,
    dy: i32,
    fx: f64,
    fy: f64,
}

impl Tap {
    /// Splits `point + offset` exactly as `GrayImage::sample_offset` does for
    /// a lattice base, so stencil reads equal the direct per-point reads.
    fn new(point: (i32, i32), (ox, oy): (f64, f64)) -> Tap {
        let (fdx, fdy) = (ox.floor(), oy.floor());
        Tap { dx: point.0 + fdx as i32, dy: point.1 + fdy as i32, fx: ox - fdx, fy: oy - fdy }
    }

    #[inline(always)]
    fn read(&self, px: &[f64], origin: isize, width: isize) -> f64 {
        let i = (origin + self.dy as isize * width + self.dx as isize) as usize;
        let sx = usize::from(self.fx != 0.0);
        let sy = if self.fy != 0.0 { width as usize } else { 0 };
        lerp2(px[i], px[i + sx], px[i + sy], px[i + sy + sx], self.fx, self.fy)
    }
}

/// Geometry of a LOAD patch precomputed once per configuration: the lattice
/// points of the disk, their frame angles, and the interpolation taps of
/// every ring neighbour. Evaluating a patch is then pure gather arithmetic.
#[derive(Clone, Debug)]
pub struct PatchStencil {
    scales: usize,
    /// Patch points relative to the centre, in row-major scan order.
    points: Vec<(i32, i32)>,
    /// Per point: 4 magnitude taps then `8 * scales` code taps.
    taps: Vec<Tap>,
    table: [u8; 256],
    /// Inclusive extent of every pixel any tap touches.
    min: (i32, i32),
    max: (i32, i32),
}

impl PatchStencil {
    pub fn new(cfg: &LoadConfig, table: &UniformTable) -> Result<Self> {
        cfg.validate()?;
        let r = cfg.patch_radius;
        let ri = r.floor() as i32;
        let mut points = Vec::new();
        for dy in -ri..=ri {
            for dx in -ri..=ri {
                if (dx, dy) != (0, 0) && f64::from(dx * dx + dy * dy) <= r * r {
                    points.push((dx, dy));
                }
            }
        }
        if points.len() < RING_NEIGHBORS {
            return Err(Error::DegenerateInput(format!("patch radius {r} covers only {} points", points.len())));
        }
        let stride = 4 + RING_NEIGHBORS * cfg.scales.len();
        let mut taps = Vec::with_capacity(points.len() * stride);
        for &(dx, dy) in &points {
            let theta = match cfg.frame {
                FrameMode::Adaptive => acs_theta((0.0, 0.0), (f64::from(dx), f64::from(dy)))?,
                FrameMode::Fixed => 0.0,
            };
            for p in [0, 2, 4, 6] {
                taps.push(Tap::new((dx, dy), neighbor_offset(theta, MAGNITUDE_RADIUS, p)));
            }
            for &s in &cfg.scales {
                for p in 0..RING_NEIGHBORS {
                    taps.push(Tap::new((dx, dy), neighbor_offset(theta, s, p)));
                }
            }
        }
        let mut min = (0, 0);
        let mut max = (0, 0);
        for t in &taps {
            min = (min.0.min(t.dx), min.1.min(t.dy));
            max = (max.0.max(t.dx + i32::from(t.fx != 0.0)), max.1.max(t.dy + i32::from(t.fy != 0.0)));
        }
        for &(dx, dy) in &points {
            min = (min.0.min(dx), min.1.min(dy));
            max = (max.0.max(dx), max.1.max(dy));
        }
        Ok(PatchStencil { scales: cfg.scales.len(), points, taps, table: *table.as_array(), min, max })
    }

    /// Number of patch points that contribute to the histogram.
    pub fn points(&self) -> usize {
        self.points.len()
    }

    pub fn dim(&self) -> usize {
        UNIFORM_BINS * self.scales
    }

    /// Whether a patch centred at `(x, y)` stays inside a `width x height` image.
    pub fn fits(&self, width: usize, height: usize, (x, y): (usize, usize)) -> bool {
        let (x, y) = (x as i64, y as i64);
        x + i64::from(self.min.0) >= 0
            && y + i64::from(self.min.1) >= 0
            && x + i64::from(self.max.0) < width as i64
            && y + i64::from(self.max.1) < height as i64
    }

    /// Magnitude-weighted pattern histogram before normalisation.
    pub fn histogram(&self, img: &GrayImage, center: (usize, usize)) -> Result<Vec<f64>> {
        if !self.fits(img.width(), img.height(), center) {
            return Err(Error::OutOfBounds {
                x: center.0 as f64,
                y: center.1 as f64,
                width: img.width(),
                height: img.height(),
            });
        }
        let px = img.pixels();
        let width = img.width() as isize;
        let origin = center.1 as isize * width + center.0 as isize;
        let stride = 4 + RING_NEIGHBORS * self.scales;
        let mut hist = vec![0.0; self.dim()];
        for (&(dx, dy), taps) in self.points.iter().zip(self.taps.chunks_exact(stride)) {
            let a = px[(origin + dy as isize * width + dx as isize) as usize];
            let v0 = taps[0].read(px, origin, width);
            let v2 = taps[1].read(px, origin, width);
            let v4 = taps[2].read(px, origin, width);
            let v6 = taps[3].read(px, origin, width);
            let m = magnitude(v0, v2, v4, v6);
            if m == 0.0 {
                continue;
            }
            for (s, ring) in taps[4..].chunks_exact(RING_NEIGHBORS).enumerate() {
                let mut code = 0u8;
                for (p, tap) in ring.iter().enumerate() {
                    code |= compare_bit(tap.read(px, origin, width), a) << p;
                }
                hist[s * UNIFORM_BINS + self.table[code as usize] as usize] += m;
            }
        }
        Ok(hist)
    }

    pub fn extract(&self, img: &GrayImage, center: (usize, usize)) -> Result<LoadDescriptor> {
        let hist = self.histogram(img, center)?;
        let values = root_normalize(&hist)?.into_iter().map(|v| v as f32).collect();
        Ok(LoadDescriptor { values, scales: self.scales })
    }
}
