//! Rotation- and illumination-robust texture description and classification.
//!
//! The crate is layered bottom-up:
//!
//! - [`image`]: grayscale rasters, PGM/PNG decoding, bilinear sampling,
//!   rescaling and dense sampling grids.
//! - [`patterns`]: sign thresholding, uniform pattern tables and the plain
//!   LBP operator used as a baseline.
//! - [`load`]: the local orientation adaptive descriptor, single-patch and
//!   dense multi-scale.
//! - [`encode`]: PCA, a diagonal Gaussian mixture fitted by EM, and
//!   improved Fisher vectors.
//! - [`classify`]: a one-vs-all linear SVM.
//! - [`formats`]: the binary artifact files.
//! - [`pipeline`]: manifests, splits, the cached end-to-end experiment,
//!   synthetic data and the invariance benchmark.
//! - [`cli`]: the `loadtex` command line.
//!
//! ```no_run
//! use loadtex::image::load_image;
//! use loadtex::load::{extract_dense, DenseConfig};
//! use loadtex::patterns::UniformTable;
//!
//! let img = load_image("bark.png".as_ref())?;
//! let descriptors = extract_dense(&img, &DenseConfig::default(), UniformTable::shared())?;
//! println!("{} descriptors of length {}", descriptors.len(), descriptors[0].len());
//! # Ok::<(), loadtex::Error>(())
//! ```

pub mod classify;
pub mod cli;
pub mod encode;
pub mod error;
pub mod formats;
pub mod image;
pub mod load;
pub mod patterns;
pub mod pipeline;

pub use error::{Error, Result};
