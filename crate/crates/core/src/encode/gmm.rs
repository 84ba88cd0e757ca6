use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

use super::DataMatrix;

/// Samples per E-step work unit. Fixed so the reduction order, and hence
/// the fitted model, does not depend on the thread count.
const ESTEP_CHUNK: usize = 1024;
const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Diagonal-covariance Gaussian mixture.
#[derive(Clone, Debug, PartialEq)]
pub struct GmmModel {
    pub priors: Vec<f64>,
    /// `K x D`, row-major.
    pub means: Vec<f64>,
    /// Standard deviations, `K x D`, row-major.
    pub sigmas: Vec<f64>,
    k: usize,
    dim: usize,
}

impl GmmModel {
    pub fn new(priors: Vec<f64>, means: Vec<f64>, sigmas: Vec<f64>, dim: usize) -> Result<Self> {
        let k = priors.len();
        if k == 0 || dim == 0 {
            return Err(Error::Config("mixture needs at least one component and dimension".into()));
        }
        for (what, len) in [("means", means.len()), ("sigmas", sigmas.len())] {
            if len != k * dim {
                return Err(Error::Config(format!("{what} has {len} entries, expected {}", k * dim)));
            }
        }
        if priors.iter().chain(&means).chain(&sigmas).any(|v| !v.is_finite()) {
            return Err(Error::NumericalFailure("mixture parameters must be finite".into()));
        }
        if priors.iter().any(|&p| p < 0.0) || sigmas.iter().any(|&s| s <= 0.0) {
            return Err(Error::Config("priors must be non-negative and sigmas positive".into()));
        }
        let total: f64 = priors.iter().sum();
        if (total - 1.0).abs() > 1e-8 {
            return Err(Error::Config(format!("priors sum to {total}, not 1")));
        }
        Ok(GmmModel { priors, means, sigmas, k, dim })
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mean(&self, k: usize) -> &[f64] {
        &self.means[k * self.dim..(k + 1) * self.dim]
    }

    pub fn sigma(&self, k: usize) -> &[f64] {
        &self.sigmas[k * self.dim..(k + 1) * self.dim]
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, actual: x.len() });
        }
        Ok(())
    }

    /// `log(pi_k) + log N(x; mu_k, sigma_k^2)` for every component.
    pub fn log_joint(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(x)?;
        let consts = self.log_consts();
        let mut out = vec![0.0; self.k];
        self.log_joint_into(x, &consts, &mut out);
        Ok(out)
    }

    fn log_consts(&self) -> Vec<f64> {
        (0..self.k)
            .map(|k| {
                let log_det: f64 = self.sigma(k).iter().map(|s| s.ln()).sum();
                self.priors[k].ln() - log_det - 0.5 * self.dim as f64 * LN_2PI
            })
            .collect()
    }

    fn log_joint_into(&self, x: &[f64], consts: &[f64], out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate() {
            if consts[k] == f64::NEG_INFINITY {
                *o = f64::NEG_INFINITY;
                continue;
            }
            let mut q = 0.0;
            for ((&xi, &m), &s) in x.iter().zip(self.mean(k)).zip(self.sigma(k)) {
                let z = (xi - m) / s;
                q += z * z;
            }
            *o = consts[k] - 0.5 * q;
        }
    }

    /// Log density of `x` under the mixture.
    pub fn log_likelihood(&self, x: &[f64]) -> Result<f64> {
        Ok(log_sum_exp(&self.log_joint(x)?))
    }

    /// Mean per-sample log-likelihood.
    pub fn mean_log_likelihood(&self, samples: &DataMatrix) -> Result<f64> {
        if samples.rows() == 0 {
            return Err(Error::EmptyInput("no samples".into()));
        }
        let mut total = 0.0;
        for row in samples.iter_rows() {
            total += self.log_likelihood(row)?;
        }
        Ok(total / samples.rows() as f64)
    }

    /// Soft assignment of `x` to each component, computed in log space.
    pub fn posterior(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut l = self.log_joint(x)?;
        normalize_log(&mut l);
        Ok(l)
    }

    pub(crate) fn posterior_with(&self, x: &[f64], consts: &[f64], out: &mut [f64]) -> f64 {
        self.log_joint_into(x, consts, out);
        normalize_log(out)
    }

    pub(crate) fn consts(&self) -> Vec<f64> {
        self.log_consts()
    }
}

fn log_sum_exp(l: &[f64]) -> f64 {
    let max = l.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + l.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Replaces log weights by normalized probabilities and returns their log
/// normalizer.
fn normalize_log(l: &mut [f64]) -> f64 {
    let lse = log_sum_exp(l);
    for v in l.iter_mut() {
        *v = (*v - lse).exp();
    }
    lse
}

#[derive(Clone, Debug)]
pub struct GmmConfig {
    pub components: usize,
    pub seed: u64,
    pub max_iter: usize,
    /// Stop once the relative log-likelihood gain drops below this.
    pub tol: f64,
    /// Lower bound on each variance, as a fraction of that dimension's
    /// variance over the whole sample.
    pub variance_floor: f64,
    pub kmeans_iter: usize,
}

impl Default for GmmConfig {
    fn default() -> Self {
        GmmConfig { components: 256, seed: 0, max_iter: 100, tol: 1e-5, variance_floor: 1e-4, kmeans_iter: 10 }
    }
}

#[derive(Clone, Debug)]
pub struct GmmFit {
    pub model: GmmModel,
    /// Mean per-sample log-likelihood before each M-step, ending with the
    /// value for the returned model.
    pub log_likelihoods: Vec<f64>,
    /// Per-dimension lower bound applied to the variances.
    pub variance_floor: Vec<f64>,
    pub converged: bool,
}

/// k-means++ seeding followed by `iterations` rounds of Lloyd refinement.
/// Returns the `k x D` centres.
pub fn kmeans_pp(samples: &DataMatrix, k: usize, iterations: usize, seed: u64) -> Result<DataMatrix> {
    let (n, d) = (samples.rows(), samples.cols());
    if k == 0 {
        return Err(Error::Config("k-means needs at least one centre".into()));
    }
    if n < k {
        return Err(Error::InsufficientSamples(format!("{n} samples for {k} centres")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = DataMatrix::with_cols(d);
    centers.push_row(samples.row(rng.random_range(0..n)))?;
    let mut dist: Vec<f64> = samples.iter_rows().map(|r| sq_dist(r, centers.row(0))).collect();
    while centers.rows() < k {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            dist.iter()
                .position(|&w| {
                    acc += w;
                    acc > target
                })
                .unwrap_or_else(|| dist.iter().rposition(|&w| w > 0.0).unwrap_or(n - 1))
        } else {
            rng.random_range(0..n)
        };
        centers.push_row(samples.row(pick))?;
        let c = centers.rows() - 1;
        for (i, row) in samples.iter_rows().enumerate() {
            dist[i] = dist[i].min(sq_dist(row, centers.row(c)));
        }
    }

    let mut assign = vec![0usize; n];
    for _ in 0..iterations {
        assign.par_iter_mut().enumerate().for_each(|(i, a)| *a = nearest(samples.row(i), &centers));
        let mut sums = vec![0.0; k * d];
        let mut counts = vec![0usize; k];
        for (i, &a) in assign.iter().enumerate() {
            counts[a] += 1;
            for (s, &v) in sums[a * d..(a + 1) * d].iter_mut().zip(samples.row(i)) {
                *s += v;
            }
        }
        let mut next = DataMatrix::with_cols(d);
        for c in 0..k {
            if counts[c] == 0 {
                // empty cluster keeps its centre
                next.push_row(centers.row(c))?;
            } else {
                let row: Vec<f64> = sums[c * d..(c + 1) * d].iter().map(|s| s / counts[c] as f64).collect();
                next.push_row(&row)?;
            }
        }
        centers = next;
    }
    Ok(centers)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(x: &[f64], centers: &DataMatrix) -> usize {
    let mut best = (0, f64::INFINITY);
    for (c, row) in centers.iter_rows().enumerate() {
        let dd = sq_dist(x, row);
        if dd < best.1 {
            best = (c, dd);
        }
    }
    best.0
}

/// Sufficient statistics of one E-step, with moments taken about the
/// current component means for numerical stability.
struct Stats {
    s0: Vec<f64>,
    s1: Vec<f64>,
    s2: Vec<f64>,
    ll: f64,
}

impl Stats {
    fn zeros(k: usize, d: usize) -> Self {
        Stats { s0: vec![0.0; k], s1: vec![0.0; k * d], s2: vec![0.0; k * d], ll: 0.0 }
    }

    fn add(&mut self, other: &Stats) {
        self.ll += other.ll;
        for (a, b) in self.s0.iter_mut().zip(&other.s0) {
            *a += b;
        }
        for (a, b) in self.s1.iter_mut().zip(&other.s1) {
            *a += b;
        }
        for (a, b) in self.s2.iter_mut().zip(&other.s2) {
            *a += b;
        }
    }
}

fn e_step(model: &GmmModel, samples: &DataMatrix) -> Stats {
    let (k, d) = (model.k(), model.dim());
    let consts = model.consts();
    let chunks: Vec<Stats> = (0..samples.rows().div_ceil(ESTEP_CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut st = Stats::zeros(k, d);
            let mut post = vec![0.0; k];
            let end = ((c + 1) * ESTEP_CHUNK).min(samples.rows());
            for i in c * ESTEP_CHUNK..end {
                let x = samples.row(i);
                st.ll += model.posterior_with(x, &consts, &mut post);
                for (j, &g) in post.iter().enumerate() {
                    if g == 0.0 {
                        continue;
                    }
                    st.s0[j] += g;
                    let mu = model.mean(j);
                    let s1 = &mut st.s1[j * d..(j + 1) * d];
                    let s2 = &mut st.s2[j * d..(j + 1) * d];
                    for t in 0..d {
                        let dev = x[t] - mu[t];
                        s1[t] += g * dev;
                        s2[t] += g * dev * dev;
                    }
                }
            }
            st
        })
        .collect();
    let mut total = Stats::zeros(k, d);
    for c in &chunks {
        total.add(c);
    }
    total
}

fn m_step(model: &GmmModel, st: &Stats, n: usize, floor: &[f64]) -> GmmModel {
    let (k, d) = (model.k(), model.dim());
    let mut priors = vec![0.0; k];
    let mut means = model.means.clone();
    let mut sigmas = model.sigmas.clone();
    for j in 0..k {
        let w = st.s0[j];
        priors[j] = w / n as f64;
        if w <= 0.0 {
            // dead component: zero prior, parameters frozen
            continue;
        }
        for t in 0..d {
            let shift = st.s1[j * d + t] / w;
            let var = (st.s2[j * d + t] / w - shift * shift).max(floor[t]);
            means[j * d + t] += shift;
            sigmas[j * d + t] = var.sqrt();
        }
    }
    let total: f64 = priors.iter().sum();
    priors.iter_mut().for_each(|p| *p /= total);
    GmmModel { priors, means, sigmas, k, dim: d }
}

/// Fits a diagonal mixture by EM from a k-means++ start.
pub fn gmm_fit(samples: &DataMatrix, cfg: &GmmConfig) -> Result<GmmFit> {
    let (n, d, k) = (samples.rows(), samples.cols(), cfg.components);
    if k == 0 || d == 0 {
        return Err(Error::Config("mixture needs at least one component and dimension".into()));
    }
    if n < k.max(2) {
        return Err(Error::InsufficientSamples(format!("{n} samples for {k} components")));
    }
    if n < 10 * k {
        log::warn!("fitting {k} components to only {n} samples");
    }
    if !samples.all_finite() {
        return Err(Error::DegenerateInput("mixture samples contain non-finite values".into()));
    }

    let mut mean = vec![0.0; d];
    for row in samples.iter_rows() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut global_var = vec![0.0; d];
    for row in samples.iter_rows() {
        for ((g, v), m) in global_var.iter_mut().zip(row).zip(&mean) {
            *g += (v - m) * (v - m);
        }
    }
    global_var.iter_mut().for_each(|g| *g /= n as f64);
    let floor: Vec<f64> = global_var.iter().map(|g| (g * cfg.variance_floor).max(1e-12)).collect();

    let centers = kmeans_pp(samples, k, cfg.kmeans_iter, cfg.seed)?;
    let mut model = init_from_centers(samples, &centers, &global_var, &floor);

    let mut lls = Vec::new();
    let mut converged = false;
    for it in 0..=cfg.max_iter {
        let st = e_step(&model, samples);
        let ll = st.ll / n as f64;
        if !ll.is_finite() {
            return Err(Error::NumericalFailure(format!("log-likelihood became {ll} at iteration {it}")));
        }
        if let Some(&prev) = lls.last() {
            let gain: f64 = ll - prev;
            if gain < cfg.tol * f64::abs(prev).max(f64::MIN_POSITIVE) {
                lls.push(ll);
                converged = true;
                break;
            }
        }
        lls.push(ll);
        if it == cfg.max_iter {
            break;
        }
        model = m_step(&model, &st, n, &floor);
    }
    log::debug!("EM stopped after {} evaluations, mean log-likelihood {:?}", lls.len(), lls.last());
    Ok(GmmFit { model, log_likelihoods: lls, variance_floor: floor, converged })
}

fn init_from_centers(samples: &DataMatrix, centers: &DataMatrix, global_var: &[f64], floor: &[f64]) -> GmmModel {
    let (k, d, n) = (centers.rows(), centers.cols(), samples.rows());
    let mut counts = vec![0usize; k];
    let mut sq = vec![0.0; k * d];
    for row in samples.iter_rows() {
        let c = nearest(row, centers);
        counts[c] += 1;
        for (t, (&v, &m)) in row.iter().zip(centers.row(c)).enumerate() {
            sq[c * d + t] += (v - m) * (v - m);
        }
    }
    let mut sigmas = Vec::with_capacity(k * d);
    for c in 0..k {
        for t in 0..d {
            let var = if counts[c] >= 2 { sq[c * d + t] / counts[c] as f64 } else { global_var[t] };
            sigmas.push(var.max(floor[t]).sqrt());
        }
    }
    // every component starts alive, even if k-means left it empty
    let mut priors: Vec<f64> = counts.iter().map(|&c| c.max(1) as f64 / n as f64).collect();
    let total: f64 = priors.iter().sum();
    priors.iter_mut().for_each(|p| *p /= total);
    GmmModel { priors, means: centers.as_slice().to_vec(), sigmas, k, dim: d }
}

/// Normal density helper for tests and oracles.
#[cfg(test)]
pub(crate) fn normal_pdf(x: f64, mu: f64, sigma: f64) -> f64 {
    (-(x - mu) * (x - mu) / (2.0 * sigma * sigma)).exp() / (sigma * std::f64::consts::TAU.sqrt())
}
