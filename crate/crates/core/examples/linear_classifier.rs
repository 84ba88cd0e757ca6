//! Trains a one-vs-all linear SVM on three Gaussian clusters, saves it and
//! reads it back.
//!
//! ```bash
//! cargo run --release --example linear_classifier
//! ```

use loadtex::classify::{train, SvmOptions};
use loadtex::encode::DataMatrix;
use loadtex::formats::{read_svm, write_svm};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let centers = [("grass", [0.0, 4.0]), ("bark", [4.0, 0.0]), ("sand", [-4.0, -2.0])];
    let noise = Normal::new(0.0, 0.8)?;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut x = DataMatrix::with_cols(2);
    let mut labels = Vec::new();
    for (name, c) in &centers {
        for _ in 0..50 {
            x.push_row(&[c[0] + noise.sample(&mut rng), c[1] + noise.sample(&mut rng)])?;
            labels.push(name.to_string());
        }
    }

    let model = train(&x, &labels, &SvmOptions::default())?;
    let correct =
        x.iter_rows().zip(&labels).filter(|(row, l)| model.predict_label(row).ok() == Some(l.as_str())).count();
    println!("training accuracy {correct}/{}", labels.len());
    for (c, class) in model.classes.iter().enumerate() {
        println!("{class:>6}: w = {:.3?}, b = {:.3}", model.weight_row(c), model.biases[c]);
    }

    let path = std::env::temp_dir().join("loadtex-example.lsvm");
    write_svm(&path, &model)?;
    let back = read_svm(&path)?;
    println!("reloaded model predicts {:?} for (3.5, 0.5)", back.predict_label(&[3.5, 0.5])?);
    Ok(())
}
