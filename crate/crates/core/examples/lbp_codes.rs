//! Uniform local binary patterns: the 58 uniform codes, a few codes on a
//! small image and the 59-bin histogram used by the baseline classifier.
//!
//! ```bash
//! cargo run --release --example lbp_codes
//! ```

use loadtex::image::GrayImage;
use loadtex::patterns::{is_uniform, lbp_code, lbp_histogram, transitions, PatternConfig, UniformTable};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let uniform: Vec<u8> = (0..=255u8).filter(|&p| is_uniform(p)).collect();
    println!("{} uniform patterns of 256", uniform.len());
    for p in [0b0000_0000u8, 0b0000_1111, 0b0101_0101] {
        println!("  {p:08b}: {} transitions, uniform = {}", transitions(p), is_uniform(p));
    }

    // a vertical edge: left half dark, right half bright
    let img = GrayImage::from_fn(8, 8, |x, _| if x < 4 { 40.0 } else { 200.0 })?;
    let cfg = PatternConfig::default();
    for x in 2..6 {
        println!("code at ({x}, 4): {:08b}", lbp_code(&img, (x, 4), &cfg)?);
    }

    let hist = lbp_histogram(&img, &cfg, UniformTable::shared())?;
    let used: Vec<(usize, f64)> = hist.iter().copied().enumerate().filter(|(_, v)| *v > 0.0).collect();
    println!("non-empty histogram bins (index, mass): {used:?}");
    Ok(())
}
