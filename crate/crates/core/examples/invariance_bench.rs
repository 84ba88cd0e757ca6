//! Measures how far dense LOAD descriptors move under 90-degree rotations
//! and affine intensity changes, next to the same measurement for
//! fixed-frame (plain LBP-coded) descriptors, then reports the
//! single-threaded extraction rate on a 300x300 image.
//!
//! ```bash
//! cargo run --release --example invariance_bench
//! ```

use loadtex::image::GrayImage;
use loadtex::load::{DenseConfig, FrameMode};
use loadtex::pipeline::{invariance_bench, measure_throughput};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn noise_image(size: usize, seed: u64) -> GrayImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    GrayImage::from_fn(size, size, |_, _| f64::from(rng.random::<u8>())).expect("valid size")
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let images: Vec<GrayImage> = (0..5).map(|s| noise_image(64, s)).collect();

    let adaptive = DenseConfig::default();
    let mut fixed = DenseConfig::default();
    fixed.load.frame = FrameMode::Fixed;

    println!("adaptive frame\n{}", invariance_bench(&images, &adaptive, 1)?.to_csv());
    println!("fixed frame\n{}", invariance_bench(&images, &fixed, 1)?.to_csv());

    let t = measure_throughput(&noise_image(300, 9), &adaptive, 2.0)?;
    println!("single thread: {} descriptors in {:.2} s = {:.0} descriptors/s", t.descriptors, t.seconds, t.per_second);
    Ok(())
}
