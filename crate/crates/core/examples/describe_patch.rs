//! Describes one patch of an image with LOAD, shows that the descriptor
//! survives a quarter turn and an intensity remap, then runs dense
//! multi-scale extraction over the whole image.
//!
//! ```bash
//! cargo run --release --example describe_patch -- [image.pgm|image.png]
//! ```

use loadtex::image::{load_image, GrayImage};
use loadtex::load::{extract, extract_dense, DenseConfig, LoadConfig};
use loadtex::patterns::UniformTable;
use loadtex::pipeline::noise_image;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let img: GrayImage = match std::env::args().nth(1) {
        Some(path) => load_image(path.as_ref())?,
        None => noise_image(96, 96, 3)?,
    };
    let table = UniformTable::shared();
    let cfg = LoadConfig::default();
    let center = (img.width() / 2, img.height() / 2);

    let d = extract(&img, center, &cfg, table)?;
    println!("descriptor length {} ({} scales x 59 bins)", d.len(), d.scales);
    println!("l2 norm {:.6}", d.l2_norm());

    // the same physical point after a quarter turn
    let turned = img.rotate90(1);
    let moved = img.rotated_point(center.0, center.1, 1);
    let d_rot = extract(&turned, moved, &cfg, table)?;
    println!("L1 to the rotated patch: {:.3e}", d.l1_distance(&d_rot));

    let d_lit = extract(&img.affine_intensity(1.7, -25.0)?, center, &cfg, table)?;
    println!("L1 to the relit patch:   {:.3e}", d.l1_distance(&d_lit));

    let dense = extract_dense(&img, &DenseConfig::default(), table)?;
    println!("dense extraction: {} descriptors across the pyramid", dense.len());
    Ok(())
}
