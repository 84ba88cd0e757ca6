//! Image-level encoding of local descriptors: PCA decorrelation, a
//! diagonal-covariance Gaussian mixture vocabulary, and improved Fisher
//! vectors.

mod fisher;
mod gmm;
mod pca;

pub use fisher::{fisher_encode, fisher_raw, power_l2_normalize, FisherVector};
pub use gmm::{gmm_fit, kmeans_pp, GmmConfig, GmmFit, GmmModel};
pub use pca::{pca_fit, PcaModel};

use crate::error::{Error, Result};

/// Dense row-major matrix of samples, one sample per row.
#[derive(Clone, Debug, PartialEq)]
pub struct DataMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DataMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch { expected: rows * cols, actual: data.len() });
        }
        Ok(DataMatrix { rows, cols, data })
    }

    pub fn with_cols(cols: usize) -> Self {
        DataMatrix { rows: 0, cols, data: Vec::new() }
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut m = DataMatrix::with_cols(cols);
        for r in rows {
            m.push_row(r.as_ref())?;
        }
        Ok(m)
    }

    pub fn from_f32_rows<R: AsRef<[f32]>>(cols: usize, rows: impl IntoIterator<Item = R>) -> Result<Self> {
        let mut m = DataMatrix::with_cols(cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::DimensionMismatch { expected: cols, actual: r.len() });
            }
            m.data.extend(r.iter().map(|&v| f64::from(v)));
            m.rows += 1;
        }
        Ok(m)
    }

    pub fn push_row(&mut self, row: &[f64]) -> Result<()> {
        if row.len() != self.cols {
            return Err(Error::DimensionMismatch { expected: self.cols, actual: row.len() });
        }
        self.data.extend_from_slice(row);
        self.rows += 1;
        Ok(())
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        // chunks_exact on an empty slice with cols == 0 would panic
        let cols = self.cols.max(1);
        self.data.chunks_exact(cols).take(self.rows)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
