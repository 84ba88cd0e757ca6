//! Local orientation adaptive descriptor.
//!
//! Every lattice point `A` of a circular patch around a centre `O` is
//! described in a frame whose x-axis points from `O` to `A`. In that frame
//! the 8-neighbour ring of `A` is sampled at several radii; each ring gives
//! a uniform binary pattern, and the pattern's histogram bin is incremented
//! by the frame-aligned gradient magnitude of `A`. Rotating the image about
//! `O` rotates every frame with it, so the histogram does not change.

mod dense;
mod stencil;

pub use dense::{default_pyramid, extract_dense, DenseConfig, DenseExtractor, DenseFeatures, LevelInfo};
pub use stencil::PatchStencil;

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::patterns::{compare_bit, ring_offset, tie_diff, UniformTable, UNIFORM_BINS};

/// Neighbours per ring. The 59-bin uniform table only exists for 8.
pub const RING_NEIGHBORS: usize = 8;
/// Ring radius of the gradient magnitude.
pub const MAGNITUDE_RADIUS: f64 = 1.0;

/// How the neighbour ring of each patch point is oriented.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum FrameMode {
    /// Ring aligned with the direction from the patch centre to the point.
    #[default]
    Adaptive,
    /// Ring aligned with the image x-axis for every point (plain LBP
    /// codes); only useful as a rotation-sensitive reference.
    Fixed,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LoadConfig {
    /// Ring radii in pixels, strictly increasing.
    pub scales: Vec<f64>,
    /// Radius of the circular patch around each sample centre.
    pub patch_radius: f64,
    pub frame: FrameMode,
}

impl Default for LoadConfig {
    fn default() -> Self {
        LoadConfig { scales: vec![1.0, 2.0, 3.0, 4.0], patch_radius: 15.0, frame: FrameMode::Adaptive }
    }
}

impl LoadConfig {
    pub fn validate(&self) -> Result<()> {
        if self.scales.is_empty() {
            return Err(Error::Config("at least one scale is required".into()));
        }
        if self.scales.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::Config(format!("scales must be positive: {:?}", self.scales)));
        }
        if self.scales.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config(format!("scales must be strictly increasing: {:?}", self.scales)));
        }
        let max = self.max_scale();
        if !(self.patch_radius.is_finite() && self.patch_radius >= max) {
            return Err(Error::Config(format!(
                "patch radius {} must be at least the largest scale {max}",
                self.patch_radius
            )));
        }
        Ok(())
    }

    pub fn max_scale(&self) -> f64 {
        self.scales.iter().copied().fold(0.0, f64::max)
    }

    /// Descriptor length, 59 bins per scale.
    pub fn dim(&self) -> usize {
        UNIFORM_BINS * self.scales.len()
    }

    /// Distance from the image edges that keeps every read of a patch in
    /// bounds: patch radius plus the widest ring plus one pixel.
    pub fn margin(&self) -> usize {
        (self.patch_radius + self.max_scale()).ceil() as usize + 1
    }
}

/// Orientation of a patch point relative to its patch centre.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AcsFrame {
    /// Angle of the vector centre -> point, in `(-pi, pi]`.
    pub theta: f64,
    /// The point the ring is centred on.
    pub center: (f64, f64),
}

impl AcsFrame {
    /// Frame of `point` inside the patch centred at `origin`.
    pub fn new(origin: (f64, f64), point: (f64, f64)) -> Result<Self> {
        Ok(AcsFrame { theta: acs_theta(origin, point)?, center: point })
    }

    /// Image-aligned frame (theta = 0).
    pub fn fixed(point: (f64, f64)) -> Self {
        AcsFrame { theta: 0.0, center: point }
    }

    fn sample(&self, img: &GrayImage, (dx, dy): (f64, f64)) -> Result<f64> {
        let (x, y) = self.center;
        if x.fract() == 0.0 && y.fract() == 0.0 && x >= 0.0 && y >= 0.0 {
            img.sample_offset(x as usize, y as usize, dx, dy)
        } else {
            img.sample_bilinear(x + dx, y + dy)
        }
    }
}

/// Full-quadrant angle of the vector `origin -> point` (image axes, y down,
/// measured with `atan2(dy, dx)`).
pub fn acs_theta(origin: (f64, f64), point: (f64, f64)) -> Result<f64> {
    let dx = point.0 - origin.0;
    let dy = point.1 - origin.1;
    if dx == 0.0 && dy == 0.0 {
        return Err(Error::DegenerateInput("frame undefined when the point coincides with the patch centre".into()));
    }
    let theta = dy.atan2(dx);
    // atan2 returns -pi for (-x, -0.0); fold it to the half-open range
    Ok(if theta <= -PI { PI } else { theta })
}

/// Offset of ring neighbour `p` at `radius` in a frame rotated by `theta`.
#[inline]
pub(crate) fn neighbor_offset(theta: f64, radius: f64, p: usize) -> (f64, f64) {
    ring_offset(2.0 * PI * p as f64 / RING_NEIGHBORS as f64 - theta, radius)
}

/// Binary pattern of the ring at `radius` around the frame centre: bit `p`
/// is set when neighbour `p` is at least as bright as the centre.
pub fn load_code(img: &GrayImage, frame: &AcsFrame, radius: f64) -> Result<u8> {
    let center = frame.sample(img, (0.0, 0.0))?;
    let mut code = 0u8;
    for p in 0..RING_NEIGHBORS {
        let v = frame.sample(img, neighbor_offset(frame.theta, radius, p))?;
        code |= compare_bit(v, center) << p;
    }
    Ok(code)
}

/// Gradient magnitude from the two diametric neighbour pairs (0/4 and 2/6)
/// of the unit ring in the frame.
pub fn adaptive_magnitude(img: &GrayImage, frame: &AcsFrame) -> Result<f64> {
    let v = |p| frame.sample(img, neighbor_offset(frame.theta, MAGNITUDE_RADIUS, p));
    Ok(magnitude(v(0)?, v(2)?, v(4)?, v(6)?))
}

#[inline]
pub(crate) fn magnitude(v0: f64, v2: f64, v4: f64, v6: f64) -> f64 {
    let (gx, gy) = (tie_diff(v4, v0), tie_diff(v6, v2));
    (gx * gx + gy * gy).sqrt()
}

/// L1-normalise then take element-wise square roots. An all-zero input is
/// returned unchanged.
pub fn root_normalize(h: &[f64]) -> Result<Vec<f64>> {
    if let Some((index, &value)) = h.iter().enumerate().find(|(_, v)| v.is_nan() || **v < 0.0) {
        return Err(Error::NegativeEntry { index, value });
    }
    let sum: f64 = h.iter().sum();
    if sum == 0.0 {
        return Ok(h.to_vec());
    }
    Ok(h.iter().map(|v| (v / sum).sqrt()).collect())
}

/// Root-normalised histogram of one patch, `59 * scales` values laid out
/// scale-major (all bins of the first scale, then the second, ...).
#[derive(Clone, Debug, PartialEq)]
pub struct LoadDescriptor {
    pub values: Vec<f32>,
    pub scales: usize,
}

impl LoadDescriptor {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn l1_distance(&self, other: &LoadDescriptor) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| (f64::from(*a) - f64::from(*b)).abs()).sum()
    }

    pub fn l2_norm(&self) -> f64 {
        self.values.iter().map(|&v| f64::from(v).powi(2)).sum::<f64>().sqrt()
    }
}

/// Descriptor of the patch centred at lattice point `center`.
///
/// Builds the patch stencil on every call; use [`PatchStencil`] directly to
/// describe many points with one configuration.
pub fn extract(
    img: &GrayImage,
    center: (usize, usize),
    cfg: &LoadConfig,
    table: &UniformTable,
) -> Result<LoadDescriptor> {
    PatchStencil::new(cfg, table)?.extract(img, center)
}
