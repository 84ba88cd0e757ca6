use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::{dense_grid, GrayImage, SampleGrid};
use crate::patterns::UniformTable;

use super::{LoadConfig, LoadDescriptor, PatchStencil};

/// Rescaling factors `2^(-i/2)` for `i = -1..=4`.
pub fn default_pyramid() -> Vec<f64> {
    (-1..=4).map(|i| 2f64.powf(-f64::from(i) / 2.0)).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseConfig {
    pub load: LoadConfig,
    /// Grid spacing in pixels of the rescaled image.
    pub step: usize,
    pub pyramid: Vec<f64>,
}

impl Default for DenseConfig {
    fn default() -> Self {
        DenseConfig { load: LoadConfig::default(), step: 4, pyramid: default_pyramid() }
    }
}

impl DenseConfig {
    pub fn validate(&self) -> Result<()> {
        self.load.validate()?;
        if self.step == 0 {
            return Err(Error::Config("grid step must be positive".into()));
        }
        if self.pyramid.is_empty() {
            return Err(Error::Config("at least one pyramid factor is required".into()));
        }
        if let Some(f) = self.pyramid.iter().find(|f| !(**f > 0.0 && f.is_finite())) {
            return Err(Error::Config(format!("pyramid factor must be positive, got {f}")));
        }
        Ok(())
    }

    /// Stable textual key of every parameter that affects the output.
    pub fn cache_key(&self) -> String {
        format!(
            "load-v1;scales={:?};patch={};frame={:?};step={};pyramid={:?}",
            self.load.scales, self.load.patch_radius, self.load.frame, self.step, self.pyramid
        )
    }
}

/// One pyramid level that produced descriptors.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelInfo {
    pub factor: f64,
    pub width: usize,
    pub height: usize,
    pub grid: SampleGrid,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseFeatures {
    /// Level by level, row-major within each level's grid.
    pub descriptors: Vec<LoadDescriptor>,
    pub levels: Vec<LevelInfo>,
}

/// Dense multi-scale extraction with a reusable patch stencil.
#[derive(Clone, Debug)]
pub struct DenseExtractor {
    cfg: DenseConfig,
    stencil: PatchStencil,
}

impl DenseExtractor {
    pub fn new(cfg: DenseConfig, table: &UniformTable) -> Result<Self> {
        cfg.validate()?;
        let stencil = PatchStencil::new(&cfg.load, table)?;
        Ok(DenseExtractor { cfg, stencil })
    }

    pub fn config(&self) -> &DenseConfig {
        &self.cfg
    }

    pub fn stencil(&self) -> &PatchStencil {
        &self.stencil
    }

    pub fn dim(&self) -> usize {
        self.stencil.dim()
    }

    /// Descriptors at the given centres, in order. Centres are described in
    /// parallel; the result does not depend on the thread count.
    pub fn extract_points(&self, img: &GrayImage, points: &[(usize, usize)]) -> Result<Vec<LoadDescriptor>> {
        points.par_iter().map(|&p| self.stencil.extract(img, p)).collect()
    }

    /// Pyramid levels too small for one grid point are skipped with a
    /// warning; it is an error only if every level is skipped.
    pub fn extract(&self, img: &GrayImage) -> Result<DenseFeatures> {
        let margin = self.cfg.load.margin();
        let mut descriptors = Vec::new();
        let mut levels = Vec::new();
        for &factor in &self.cfg.pyramid {
            let level = match img.rescale(factor, margin) {
                Ok(level) => level,
                Err(Error::DegenerateOutput(msg)) => {
                    log::warn!("skipping pyramid level {factor:.4}: {msg}");
                    continue;
                }
                Err(e) => return Err(e),
            };
            let mut grid = match dense_grid(&level, self.cfg.step, margin) {
                Ok(grid) => grid,
                Err(Error::DegenerateOutput(msg)) => {
                    log::warn!("skipping pyramid level {factor:.4}: {msg}");
                    continue;
                }
                Err(e) => return Err(e),
            };
            grid.scale_factor = factor;
            descriptors.extend(self.extract_points(&level, &grid.points)?);
            levels.push(LevelInfo { factor, width: level.width(), height: level.height(), grid });
        }
        if levels.is_empty() {
            return Err(Error::DegenerateOutput(format!(
                "{}x{} image yields no grid point at any pyramid level",
                img.width(),
                img.height()
            )));
        }
        Ok(DenseFeatures { descriptors, levels })
    }
}

/// Dense descriptors over every usable pyramid level.
pub fn extract_dense(img: &GrayImage, cfg: &DenseConfig, table: &UniformTable) -> Result<Vec<LoadDescriptor>> {
    Ok(DenseExtractor::new(cfg.clone(), table)?.extract(img)?.descriptors)
}
