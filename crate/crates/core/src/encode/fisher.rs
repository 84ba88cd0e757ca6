use crate::error::{Error, Result};

use super::{DataMatrix, GmmModel};

/// Normalized improved Fisher vector of one image.
///
/// Values are stored in single precision so a freshly computed vector and
/// one read back from disk are identical.
#[derive(Clone, Debug, PartialEq)]
pub struct FisherVector {
    pub values: Vec<f32>,
}

impl FisherVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.values.iter().map(|&v| f64::from(v)).collect()
    }
}

/// Averaged per-component gradient blocks before normalization.
///
/// Layout is `K` blocks of `2D`: the mean part
/// `g/sqrt(pi) * (x - mu)/sigma`, then the variance part
/// `g/sqrt(2 pi) * ((x - mu)^2/sigma^2 - 1)`, each averaged over the set.
pub fn fisher_raw(model: &GmmModel, descriptors: &DataMatrix) -> Result<Vec<f64>> {
    let (k, d) = (model.k(), model.dim());
    if descriptors.rows() == 0 {
        return Err(Error::EmptyInput("Fisher encoding needs at least one descriptor".into()));
    }
    if descriptors.cols() != d {
        return Err(Error::DimensionMismatch { expected: d, actual: descriptors.cols() });
    }
    let consts = model.consts();
    let mut post = vec![0.0; k];
    let mut acc = vec![0.0; 2 * d * k];
    for x in descriptors.iter_rows() {
        let lse = model.posterior_with(x, &consts, &mut post);
        if !lse.is_finite() {
            return Err(Error::NumericalFailure("descriptor has zero likelihood under every component".into()));
        }
        for (j, &g) in post.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            let (mu, sigma) = (model.mean(j), model.sigma(j));
            let block = &mut acc[2 * d * j..2 * d * (j + 1)];
            let (mean_part, var_part) = block.split_at_mut(d);
            for t in 0..d {
                let z = (x[t] - mu[t]) / sigma[t];
                mean_part[t] += g * z;
                var_part[t] += g * (z * z - 1.0);
            }
        }
    }
    let t = descriptors.rows() as f64;
    for j in 0..k {
        let a = 1.0 / (t * model.priors[j].sqrt());
        let b = 1.0 / (t * (2.0 * model.priors[j]).sqrt());
        let block = &mut acc[2 * d * j..2 * d * (j + 1)];
        if model.priors[j] == 0.0 {
            block.iter_mut().for_each(|v| *v = 0.0);
            continue;
        }
        block[..d].iter_mut().for_each(|v| *v *= a);
        block[d..].iter_mut().for_each(|v| *v *= b);
    }
    Ok(acc)
}

/// Signed square root of every entry followed by scaling to unit L2 norm.
/// A zero vector is returned unchanged.
pub fn power_l2_normalize(v: &[f64]) -> Vec<f64> {
    let mut out: Vec<f64> = v.iter().map(|&x| x.signum() * x.abs().sqrt()).collect();
    // signum(0.0) is 1.0, but 1.0 * sqrt(0) is still zero
    let norm = out.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        out.iter_mut().for_each(|x| *x /= norm);
    }
    out
}

/// Encodes a descriptor set as a power- and L2-normalized Fisher vector.
pub fn fisher_encode(model: &GmmModel, descriptors: &DataMatrix) -> Result<FisherVector> {
    let raw = fisher_raw(model, descriptors)?;
    Ok(FisherVector { values: power_l2_normalize(&raw).into_iter().map(|v| v as f32).collect() })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn random_model(k: usize, d: usize, seed: u64) -> GmmModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut priors: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 0.2).collect();
        let s: f64 = priors.iter().sum();
        priors.iter_mut().for_each(|p| *p /= s);
        let means = (0..k * d).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let sigmas = (0..k * d).map(|_| rng.random::<f64>() * 0.8 + 0.6).collect();
        GmmModel::new(priors, means, sigmas, d).unwrap()
    }

    fn random_set(t: usize, d: usize, seed: u64) -> DataMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DataMatrix::new(t, d, (0..t * d).map(|_| rng.random::<f64>() * 3.0 - 1.5).collect()).unwrap()
    }

    fn total_log_likelihood(m: &GmmModel, xs: &DataMatrix) -> f64 {
        xs.iter_rows().map(|x| m.log_likelihood(x).unwrap()).sum()
    }

    #[test]
    fn matches_finite_difference_gradient() {
        let (k, d, t) = (3, 4, 50);
        let model = random_model(k, d, 1);
        let xs = random_set(t, d, 2);
        let fv = fisher_raw(&model, &xs).unwrap();
        let h = 1e-4;
        let mut worst: f64 = 0.0;
        for j in 0..k {
            let pi = model.priors[j];
            for c in 0..d {
                let idx = j * d + c;
                let sigma = model.sigmas[idx];
                let mut plus = model.clone();
                let mut minus = model.clone();
                plus.means[idx] += h;
                minus.means[idx] -= h;
                let g_mu = (total_log_likelihood(&plus, &xs) - total_log_likelihood(&minus, &xs)) / (2.0 * h);
                let mut plus = model.clone();
                let mut minus = model.clone();
                plus.sigmas[idx] += h;
                minus.sigmas[idx] -= h;
                let g_sigma = (total_log_likelihood(&plus, &xs) - total_log_likelihood(&minus, &xs)) / (2.0 * h);
                // diagonal Fisher information: pi / sigma^2 and 2 pi / sigma^2
                let want_mu = g_mu * sigma / pi.sqrt() / t as f64;
                let want_sigma = g_sigma * sigma / (2.0 * pi).sqrt() / t as f64;
                let got_mu = fv[2 * d * j + c];
                let got_sigma = fv[2 * d * j + d + c];
                worst = worst.max((got_mu - want_mu).abs() / want_mu.abs().max(1e-12));
                worst = worst.max((got_sigma - want_sigma).abs() / want_sigma.abs().max(1e-12));
            }
        }
        assert!(worst < 1e-3, "worst relative error {worst}");
    }

    #[test]
    fn default_length() {
        let model = random_model(256, 100, 3);
        let fv = fisher_encode(&model, &random_set(5, 100, 4)).unwrap();
        assert_eq!(fv.len(), 51_200);
    }

    #[test]
    fn descriptors_at_the_mean() {
        let model = GmmModel::new(vec![1.0], vec![0.5, -1.0, 2.0], vec![0.3, 1.0, 2.0], 3).unwrap();
        let xs = DataMatrix::from_rows(&vec![vec![0.5, -1.0, 2.0]; 7]).unwrap();
        let raw = fisher_raw(&model, &xs).unwrap();
        assert_eq!(&raw[..3], &[0.0; 3]);
        for v in &raw[3..] {
            assert!((v + 1.0 / 2f64.sqrt()).abs() < 1e-15);
        }
        let fv = fisher_encode(&model, &xs).unwrap();
        for v in &fv.values[3..] {
            assert!((f64::from(*v) + 1.0 / 3f64.sqrt()).abs() < 1e-7);
        }
    }

    #[test]
    fn power_l2_example() {
        let out = power_l2_normalize(&[-4.0, 0.0, 4.0]);
        let r = 1.0 / 2f64.sqrt();
        assert!((out[0] + r).abs() < 1e-15 && out[1] == 0.0 && (out[2] - r).abs() < 1e-15);
        assert_eq!(power_l2_normalize(&[0.0, 0.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn order_and_duplication_do_not_matter() {
        let model = random_model(4, 3, 5);
        let xs = random_set(30, 3, 6);
        let base = fisher_raw(&model, &xs).unwrap();

        let mut rows: Vec<Vec<f64>> = xs.iter_rows().map(|r| r.to_vec()).collect();
        rows.reverse();
        rows.swap(3, 17);
        let shuffled = fisher_raw(&model, &DataMatrix::from_rows(&rows).unwrap()).unwrap();
        let doubled: Vec<Vec<f64>> = rows.iter().chain(&rows).cloned().collect();
        let doubled = fisher_raw(&model, &DataMatrix::from_rows(&doubled).unwrap()).unwrap();
        for ((a, b), c) in base.iter().zip(&shuffled).zip(&doubled) {
            assert!((a - b).abs() < 1e-12);
            assert!((a - c).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_empty_and_mismatched() {
        let model = random_model(2, 3, 7);
        assert!(matches!(fisher_encode(&model, &DataMatrix::with_cols(3)), Err(Error::EmptyInput(_))));
        assert!(matches!(fisher_encode(&model, &random_set(2, 4, 0)), Err(Error::DimensionMismatch { .. })));
    }

    proptest! {
        #[test]
        fn normalize_keeps_signs_and_unit_norm(v in prop::collection::vec(-1e3f64..1e3, 1..40)) {
            let out = power_l2_normalize(&v);
            let norm: f64 = out.iter().map(|x| x * x).sum::<f64>().sqrt();
            if v.iter().any(|&x| x != 0.0) {
                prop_assert!((norm - 1.0).abs() < 1e-12);
            }
            for (a, b) in v.iter().zip(&out) {
                prop_assert!(a.signum() == b.signum() || *a == 0.0);
            }
        }

        #[test]
        fn encoded_vector_is_unit(seed in 0u64..100, t in 1usize..20) {
            let model = random_model(3, 4, seed);
            let fv = fisher_encode(&model, &random_set(t, 4, seed + 1000)).unwrap();
            let norm: f64 = fv.to_f64().iter().map(|x| x * x).sum::<f64>().sqrt();
            prop_assert!((norm - 1.0).abs() < 1e-6);
            prop_assert_eq!(fv.len(), 24);
        }
    }
}
