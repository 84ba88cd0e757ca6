use crate::error::{Error, Result};

use super::GrayImage;

/// Lattice of sample centres on one (possibly rescaled) image.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleGrid {
    /// Pixel coordinates `(x, y)`, row-major.
    pub points: Vec<(usize, usize)>,
    /// Pyramid factor of the image the points refer to.
    pub scale_factor: f64,
    pub step: usize,
    /// Points per row and number of rows.
    pub cols: usize,
    pub rows: usize,
}

impl SampleGrid {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Number of lattice positions along an axis of `extent` pixels, with
/// coordinates in `[margin, extent - margin]`.
pub(crate) fn axis_count(extent: usize, step: usize, margin: usize) -> usize {
    if step == 0 || extent < 2 * margin {
        0
    } else {
        (extent - 2 * margin) / step + 1
    }
}

/// Dense lattice spaced `step` pixels apart whose points keep at least
/// `margin` pixels to every image edge.
pub fn dense_grid(img: &GrayImage, step: usize, margin: usize) -> Result<SampleGrid> {
    if step == 0 {
        return Err(Error::Config("grid step must be positive".into()));
    }
    let cols = axis_count(img.width(), step, margin);
    let rows = axis_count(img.height(), step, margin);
    if cols == 0 || rows == 0 {
        return Err(Error::DegenerateOutput(format!(
            "{}x{} image cannot host a grid point with margin {margin}",
            img.width(),
            img.height()
        )));
    }
    let points = (0..rows).flat_map(|r| (0..cols).map(move |c| (margin + c * step, margin + r * step))).collect();
    Ok(SampleGrid { points, scale_factor: 1.0, step, cols, rows })
}
