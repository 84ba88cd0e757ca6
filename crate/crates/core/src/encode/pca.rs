use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

use super::DataMatrix;

/// Rows processed per covariance update.
const COV_BLOCK: usize = 2048;
/// Eigenvalues below this fraction of the largest count as zero.
const RANK_TOL: f64 = 1e-10;

/// Principal axes of a descriptor sample.
#[derive(Clone, Debug, PartialEq)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// `output_dim x input_dim`, row-major; rows are orthonormal principal
    /// directions in decreasing eigenvalue order.
    pub basis: Vec<f64>,
    pub eigenvalues: Vec<f64>,
    pub input_dim: usize,
    pub output_dim: usize,
    /// Divide each projected coordinate by the square root of its eigenvalue.
    pub whiten: bool,
}

/// Fits the mean and top-`components` eigenvectors of the sample covariance.
///
/// Each basis row is signed so its largest-magnitude entry is positive. When
/// the data has fewer than `components` non-zero eigenvalues only the
/// available directions are kept (with a warning).
pub fn pca_fit(samples: &DataMatrix, components: usize, whiten: bool) -> Result<PcaModel> {
    let (n, d_in) = (samples.rows(), samples.cols());
    if components == 0 || components > d_in {
        return Err(Error::Config(format!("cannot keep {components} components of {d_in}-dimensional data")));
    }
    if n <= components {
        return Err(Error::InsufficientSamples(format!(
            "PCA with {components} components needs more than {components} samples, got {n}"
        )));
    }
    if !samples.all_finite() {
        return Err(Error::DegenerateInput("PCA samples contain non-finite values".into()));
    }

    let mut mean = vec![0.0; d_in];
    for row in samples.iter_rows() {
        for (m, &v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let mut cov = DMatrix::<f64>::zeros(d_in, d_in);
    let mut start = 0;
    while start < n {
        let end = (start + COV_BLOCK).min(n);
        let block = DMatrix::from_fn(end - start, d_in, |r, c| samples.row(start + r)[c] - mean[c]);
        cov.gemm_tr(1.0, &block, &block, 1.0);
        start = end;
    }
    cov /= (n - 1) as f64;
    // gemm leaves rounding asymmetry; the eigensolver reads one triangle
    cov = (&cov + cov.transpose()) * 0.5;

    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d_in).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let top = eig.eigenvalues[order[0]].max(0.0);
    let available = order.iter().take_while(|&&i| eig.eigenvalues[i] > RANK_TOL * top && top > 0.0).count();
    let kept = if available < components {
        log::warn!("PCA: only {available} of {components} requested components have non-zero variance");
        available.max(1)
    } else {
        components
    };

    let mut basis = Vec::with_capacity(kept * d_in);
    let mut eigenvalues = Vec::with_capacity(kept);
    for &i in &order[..kept] {
        let col = eig.eigenvectors.column(i);
        let pivot = col.iter().copied().fold(0.0f64, |best, v| if v.abs() > best.abs() { v } else { best });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        basis.extend(col.iter().map(|v| v * sign));
        eigenvalues.push(eig.eigenvalues[i].max(0.0));
    }
    Ok(PcaModel { mean, basis, eigenvalues, input_dim: d_in, output_dim: kept, whiten })
}

impl PcaModel {
    pub fn basis_row(&self, i: usize) -> &[f64] {
        &self.basis[i * self.input_dim..(i + 1) * self.input_dim]
    }

    /// `basis * (x - mean)`, optionally whitened.
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch { expected: self.input_dim, actual: x.len() });
        }
        let centered: Vec<f64> = x.iter().zip(&self.mean).map(|(v, m)| v - m).collect();
        Ok((0..self.output_dim)
            .map(|i| {
                let dot: f64 = self.basis_row(i).iter().zip(&centered).map(|(b, c)| b * c).sum();
                if self.whiten {
                    dot / self.eigenvalues[i].sqrt().max(f64::MIN_POSITIVE)
                } else {
                    dot
                }
            })
            .collect())
    }

    pub fn project_f32(&self, x: &[f32]) -> Result<Vec<f64>> {
        let x: Vec<f64> = x.iter().map(|&v| f64::from(v)).collect();
        self.project(&x)
    }

    /// Projects every row.
    pub fn project_all(&self, samples: &DataMatrix) -> Result<DataMatrix> {
        let mut out = DataMatrix::with_cols(self.output_dim);
        for row in samples.iter_rows() {
            out.push_row(&self.project(row)?)?;
        }
        Ok(out)
    }

    /// Maps projected coordinates back to input space.
    pub fn back_project(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.output_dim {
            return Err(Error::DimensionMismatch { expected: self.output_dim, actual: y.len() });
        }
        let mut x = self.mean.clone();
        for (i, &c) in y.iter().enumerate() {
            let c = if self.whiten { c * self.eigenvalues[i].sqrt() } else { c };
            for (xi, b) in x.iter_mut().zip(self.basis_row(i)) {
                *xi += c * b;
            }
        }
        Ok(x)
    }
}
