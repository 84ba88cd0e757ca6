//! Fits the encoder on random descriptor-like data: PCA down to 8
//! dimensions, a 4-component diagonal mixture, then Fisher vectors for
//! two differently distributed descriptor sets.
//!
//! ```bash
//! cargo run --release --example fisher_encoding
//! ```

use loadtex::encode::{fisher_encode, gmm_fit, pca_fit, DataMatrix, GmmConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn cloud(n: usize, dim: usize, shift: f64, rng: &mut ChaCha8Rng) -> DataMatrix {
    let mut m = DataMatrix::with_cols(dim);
    for _ in 0..n {
        let row: Vec<f64> = (0..dim).map(|j| rng.random::<f64>() + if j % 3 == 0 { shift } else { 0.0 }).collect();
        m.push_row(&row).expect("row width matches");
    }
    m
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let dim = 24;
    let train = cloud(2000, dim, 0.0, &mut rng);

    let pca = pca_fit(&train, 8, false)?;
    println!("top eigenvalues: {:.4?}", &pca.eigenvalues[..4]);
    let projected = pca.project_all(&train)?;

    let fit = gmm_fit(&projected, &GmmConfig { components: 4, seed: 1, ..GmmConfig::default() })?;
    println!(
        "EM: {} iterations, mean log-likelihood {:.4}, converged = {}",
        fit.log_likelihoods.len(),
        fit.log_likelihoods.last().copied().unwrap_or(f64::NAN),
        fit.converged
    );

    let a = fisher_encode(&fit.model, &pca.project_all(&cloud(300, dim, 0.0, &mut rng))?)?;
    let b = fisher_encode(&fit.model, &pca.project_all(&cloud(300, dim, 0.8, &mut rng))?)?;
    let dist: f64 = a.values.iter().zip(&b.values).map(|(x, y)| f64::from(x - y).powi(2)).sum::<f64>().sqrt();
    println!("Fisher vector length {} (2 x 8 x 4)", a.len());
    println!("distance between the two sets' vectors: {dist:.4}");
    Ok(())
}
