//! One-vs-all linear max-margin classification.
//!
//! Each binary problem minimizes `0.5 |w|^2 + C * sum(max(0, 1 - s_i (w.x_i + b)))`
//! by dual coordinate descent, with the bias folded in as a constant
//! feature of value 1.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::encode::DataMatrix;
use crate::error::{Error, Result};

pub const DEFAULT_C: f64 = 10.0;

#[derive(Clone, Debug)]
pub struct SvmOptions {
    pub c: f64,
    pub seed: u64,
    /// Relative duality-gap target.
    pub tol: f64,
    pub max_epochs: usize,
}

impl Default for SvmOptions {
    fn default() -> Self {
        SvmOptions { c: DEFAULT_C, seed: 0, tol: 1e-4, max_epochs: 2000 }
    }
}

/// Solution of one binary problem plus its optimization trace.
#[derive(Clone, Debug)]
pub struct BinarySolution {
    pub weights: Vec<f64>,
    pub bias: f64,
    /// Dual objective after each epoch.
    pub dual: Vec<f64>,
    /// Primal objective after each epoch.
    pub primal: Vec<f64>,
    pub converged: bool,
}

impl BinarySolution {
    pub fn decision(&self, x: &[f64]) -> f64 {
        dot(&self.weights, x) + self.bias
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Trains a single binary hinge-loss classifier. `signs` holds +1 or -1.
pub fn train_binary(x: &DataMatrix, signs: &[f64], opts: &SvmOptions) -> Result<BinarySolution> {
    let (n, f) = (x.rows(), x.cols());
    if signs.len() != n {
        return Err(Error::DimensionMismatch { expected: n, actual: signs.len() });
    }
    if !(opts.c > 0.0 && opts.c.is_finite()) {
        return Err(Error::Config(format!("C must be positive, got {}", opts.c)));
    }
    if !x.all_finite() {
        return Err(Error::DegenerateInput("training vectors contain non-finite values".into()));
    }
    let c = opts.c;
    let q: Vec<f64> = x.iter_rows().map(|r| dot(r, r) + 1.0).collect();
    let mut alpha = vec![0.0; n];
    let mut w = vec![0.0; f];
    let mut b = 0.0;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut dual = Vec::new();
    let mut primal = Vec::new();
    let mut converged = false;

    for _ in 0..opts.max_epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let xi = x.row(i);
            let s = signs[i];
            let g = s * (dot(&w, xi) + b) - 1.0;
            let pg = if alpha[i] == 0.0 {
                g.min(0.0)
            } else if alpha[i] == c {
                g.max(0.0)
            } else {
                g
            };
            if pg == 0.0 {
                continue;
            }
            let old = alpha[i];
            alpha[i] = (old - g / q[i]).clamp(0.0, c);
            let delta = (alpha[i] - old) * s;
            if delta != 0.0 {
                for (wj, &v) in w.iter_mut().zip(xi) {
                    *wj += delta * v;
                }
                b += delta;
            }
        }
        let half_norm = 0.5 * (dot(&w, &w) + b * b);
        let hinge: f64 = x.iter_rows().zip(signs).map(|(r, &s)| (1.0 - s * (dot(&w, r) + b)).max(0.0)).sum();
        let p = half_norm + c * hinge;
        let d = alpha.iter().sum::<f64>() - half_norm;
        primal.push(p);
        dual.push(d);
        if p - d <= opts.tol * p.abs().max(1.0) {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!(
            "linear SVM stopped at {} epochs with duality gap {:.3e}",
            opts.max_epochs,
            primal.last().zip(dual.last()).map_or(f64::NAN, |(p, d)| p - d)
        );
    }
    Ok(BinarySolution { weights: w, bias: b, dual, primal, converged })
}

/// One-vs-all linear classifier.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearModel {
    pub classes: Vec<String>,
    /// `classes x features`, row-major.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
    pub c_param: f64,
    features: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub class: usize,
    pub scores: Vec<f64>,
}

impl LinearModel {
    pub fn new(classes: Vec<String>, weights: Vec<f64>, biases: Vec<f64>, c_param: f64) -> Result<Self> {
        if classes.is_empty() || biases.len() != classes.len() {
            return Err(Error::Config("one bias per class is required".into()));
        }
        if !weights.len().is_multiple_of(classes.len()) {
            return Err(Error::Config("weight matrix does not split into one row per class".into()));
        }
        if weights.iter().chain(&biases).any(|v| !v.is_finite()) {
            return Err(Error::NumericalFailure("classifier weights must be finite".into()));
        }
        let features = weights.len() / classes.len();
        Ok(LinearModel { classes, weights, biases, c_param, features })
    }

    pub fn features(&self) -> usize {
        self.features
    }

    pub fn weight_row(&self, c: usize) -> &[f64] {
        &self.weights[c * self.features..(c + 1) * self.features]
    }

    /// Scores every class and picks the highest; ties go to the earliest class.
    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        if x.len() != self.features {
            return Err(Error::DimensionMismatch { expected: self.features, actual: x.len() });
        }
        let scores: Vec<f64> = (0..self.classes.len()).map(|c| dot(self.weight_row(c), x) + self.biases[c]).collect();
        let mut class = 0;
        for (c, &s) in scores.iter().enumerate() {
            if s > scores[class] {
                class = c;
            }
        }
        Ok(Prediction { class, scores })
    }

    pub fn predict_label(&self, x: &[f64]) -> Result<&str> {
        let p = self.predict(x)?;
        Ok(&self.classes[p.class])
    }
}

/// Trains one binary problem per distinct label, in sorted label order.
pub fn train(x: &DataMatrix, labels: &[String], opts: &SvmOptions) -> Result<LinearModel> {
    if labels.len() != x.rows() {
        return Err(Error::DimensionMismatch { expected: x.rows(), actual: labels.len() });
    }
    if x.rows() < 2 {
        return Err(Error::InsufficientSamples(format!("{} training vectors", x.rows())));
    }
    let mut classes: Vec<String> = labels.to_vec();
    classes.sort();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::DegenerateLabels(format!("need at least two classes, got {:?}", classes)));
    }
    let solutions: Vec<BinarySolution> = classes
        .par_iter()
        .enumerate()
        .map(|(ci, class)| {
            let signs: Vec<f64> = labels.iter().map(|l| if l == class { 1.0 } else { -1.0 }).collect();
            let o = SvmOptions { seed: opts.seed.wrapping_add(ci as u64), ..opts.clone() };
            train_binary(x, &signs, &o)
        })
        .collect::<Result<_>>()?;
    let mut weights = Vec::with_capacity(classes.len() * x.cols());
    let mut biases = Vec::with_capacity(classes.len());
    for s in solutions {
        weights.extend(s.weights);
        biases.push(s.bias);
    }
    LinearModel::new(classes, weights, biases, opts.c)
}
