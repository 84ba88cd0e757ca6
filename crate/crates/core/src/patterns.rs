//! Sign thresholding, circular transition counts, the 59-bin uniform pattern
//! table, and the classic fixed-frame LBP operator used as a baseline.

use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::image::GrayImage;

/// Number of histogram bins for 8-neighbour uniform patterns (58 uniform
/// codes plus one catch-all).
pub const UNIFORM_BINS: usize = 59;
/// Bin shared by every non-uniform pattern.
pub const NON_UNIFORM_BIN: u8 = 58;

/// Ring offsets closer than this to a lattice coordinate are snapped onto
/// it, so cardinal neighbours read stored pixels instead of `1e-17` blends.
const SNAP_EPS: f64 = 1e-9;

/// Differences smaller than this fraction of the operands' magnitudes are
/// treated as exact ties. Interpolated reads carry rounding noise of order
/// 1e-16 relative; without the band, a tie in one image can flip sign in
/// its rotated or intensity-remapped copy.
pub const TIE_EPS: f64 = 1e-10;

/// 1 when `t >= 0`, else 0.
#[inline]
pub fn sign_threshold(t: f64) -> u8 {
    u8::from(t >= 0.0)
}

/// `x - y`, with differences inside the tie band reported as exactly 0.
#[inline]
pub fn tie_diff(x: f64, y: f64) -> f64 {
    let d = x - y;
    if d.abs() <= TIE_EPS * (x.abs() + y.abs()) {
        0.0
    } else {
        d
    }
}

/// Sign bit of `neighbor - center`, counting near-ties as 1.
#[inline]
pub fn compare_bit(neighbor: f64, center: f64) -> u8 {
    // same as sign_threshold(tie_diff(..)): only negative differences can
    // leave the band, so a single comparison against -tolerance suffices
    let d = neighbor - center;
    u8::from(d >= -(TIE_EPS * (neighbor.abs() + center.abs())))
}

/// Circular count of bit changes in an 8-bit pattern; bit 7 wraps to bit 0.
#[inline]
pub fn transitions(pattern: u8) -> u32 {
    (pattern ^ pattern.rotate_right(1)).count_ones()
}

#[inline]
pub fn is_uniform(pattern: u8) -> bool {
    transitions(pattern) <= 2
}

/// Offset of a sample on a ring of `radius` at `angle`, with y pointing down
/// (positive angles go up the image).
#[inline]
pub(crate) fn ring_offset(angle: f64, radius: f64) -> (f64, f64) {
    let (s, c) = angle.sin_cos();
    (snap(radius * c), snap(-radius * s))
}

#[inline]
fn snap(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() < SNAP_EPS {
        r
    } else {
        v
    }
}

/// Maps each 8-bit pattern to its histogram bin. Uniform patterns get bins
/// `0..58` in ascending code order; the rest share bin 58.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UniformTable {
    map: [u8; 256],
}

impl UniformTable {
    pub fn new() -> Self {
        let mut map = [NON_UNIFORM_BIN; 256];
        let mut next = 0u8;
        for code in 0..=255u8 {
            if is_uniform(code) {
                map[code as usize] = next;
                next += 1;
            }
        }
        debug_assert_eq!(next, NON_UNIFORM_BIN);
        UniformTable { map }
    }

    /// Process-wide table; it never changes once built.
    pub fn shared() -> &'static UniformTable {
        static TABLE: OnceLock<UniformTable> = OnceLock::new();
        TABLE.get_or_init(UniformTable::new)
    }

    #[inline]
    pub fn index(&self, pattern: u8) -> u8 {
        self.map[pattern as usize]
    }

    pub fn as_array(&self) -> &[u8; 256] {
        &self.map
    }
}

impl Default for UniformTable {
    fn default() -> Self {
        UniformTable::new()
    }
}

#[inline]
pub fn uniform_index(pattern: u8, table: &UniformTable) -> u8 {
    table.index(pattern)
}

/// Neighbour count and ring radius for the fixed-frame LBP operator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PatternConfig {
    pub neighbors: usize,
    pub radius: f64,
}

impl Default for PatternConfig {
    fn default() -> Self {
        PatternConfig { neighbors: 8, radius: 1.0 }
    }
}

impl PatternConfig {
    pub fn validate(&self) -> Result<()> {
        if !(4..=24).contains(&self.neighbors) {
            return Err(Error::Config(format!("neighbor count must be in 4..=24, got {}", self.neighbors)));
        }
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::Config(format!("radius must be positive, got {}", self.radius)));
        }
        Ok(())
    }

    /// Neighbour offsets; neighbour `p` sits at image-frame angle `2*pi*p/P`.
    pub fn offsets(&self) -> Vec<(f64, f64)> {
        (0..self.neighbors).map(|p| ring_offset(2.0 * PI * p as f64 / self.neighbors as f64, self.radius)).collect()
    }

    fn border(&self) -> usize {
        self.radius.ceil() as usize
    }
}

/// Fixed-frame LBP code of the pixel at `center`: bit `p` is set when the
/// neighbour at angle `2*pi*p/P` is at least as bright as the centre.
pub fn lbp_code(img: &GrayImage, center: (usize, usize), cfg: &PatternConfig) -> Result<u32> {
    cfg.validate()?;
    code_with_offsets(img, center, &cfg.offsets())
}

fn code_with_offsets(img: &GrayImage, (cx, cy): (usize, usize), offsets: &[(f64, f64)]) -> Result<u32> {
    let gc = img.get(cx, cy);
    let mut code = 0u32;
    for (p, &(dx, dy)) in offsets.iter().enumerate() {
        let gp = img.sample_offset(cx, cy, dx, dy)?;
        code |= u32::from(compare_bit(gp, gc)) << p;
    }
    Ok(code)
}

/// L1-normalised histogram of uniform LBP bins over every pixel whose ring
/// fits inside the image. Requires `P = 8`.
pub fn lbp_histogram(img: &GrayImage, cfg: &PatternConfig, table: &UniformTable) -> Result<Vec<f64>> {
    cfg.validate()?;
    if cfg.neighbors != 8 {
        return Err(Error::Config(format!("uniform histogram needs 8 neighbors, got {}", cfg.neighbors)));
    }
    let b = cfg.border();
    if img.width() < 2 * b + 1 || img.height() < 2 * b + 1 {
        return Err(Error::DegenerateOutput(format!(
            "{}x{} image too small for radius {}",
            img.width(),
            img.height(),
            cfg.radius
        )));
    }
    let offsets = cfg.offsets();
    let mut hist = vec![0.0; UNIFORM_BINS];
    let mut total = 0usize;
    for y in b..img.height() - b {
        for x in b..img.width() - b {
            let code = code_with_offsets(img, (x, y), &offsets)?;
            hist[table.index(code as u8) as usize] += 1.0;
            total += 1;
        }
    }
    let inv = 1.0 / total as f64;
    hist.iter_mut().for_each(|h| *h *= inv);
    Ok(hist)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sign_examples() {
        assert_eq!(sign_threshold(0.0), 1);
        assert_eq!(sign_threshold(-0.0), 1);
        assert_eq!(sign_threshold(-0.0001), 0);
        assert_eq!(sign_threshold(5.0), 1);
    }

    #[test]
    fn transition_examples() {
        assert_eq!(transitions(0b0000_0000), 0);
        assert_eq!(transitions(0b0000_1110), 2);
        assert_eq!(transitions(0b0101_0101), 8);
        assert_eq!(transitions(0b1000_0001), 2);
    }

    #[test]
    fn transitions_brute_force() {
        for code in 0..=255u8 {
            let bits: Vec<u8> = (0..8).map(|i| (code >> i) & 1).collect();
            let count = (0..8).filter(|&i| bits[i] != bits[(i + 1) % 8]).count() as u32;
            assert_eq!(transitions(code), count, "code {code:08b}");
            assert_eq!(count % 2, 0);
        }
    }

    #[test]
    fn uniform_table() {
        let t = UniformTable::new();
        assert!(t.index(0b1100_0011) < NON_UNIFORM_BIN);
        assert_eq!(t.index(0b0100_1110), NON_UNIFORM_BIN);
        assert_eq!((0..=255u8).filter(|&c| t.index(c) < NON_UNIFORM_BIN).count(), 58);
        // ascending enumeration
        assert_eq!(t.index(0), 0);
        assert_eq!(t.index(1), 1);
        assert_eq!(t.index(2), 2);
        assert_eq!(t.index(3), 3);
        assert_eq!(t.index(255), 57);
        let mut bins: Vec<u8> = (0..=255u8).map(|c| t.index(c)).filter(|&b| b < 58).collect();
        bins.dedup();
        assert_eq!(bins, (0..58).collect::<Vec<u8>>());
        assert_eq!(&t, UniformTable::shared());
    }

    #[test]
    fn config_validation() {
        assert!(PatternConfig { neighbors: 3, radius: 1.0 }.validate().is_err());
        assert!(PatternConfig { neighbors: 25, radius: 1.0 }.validate().is_err());
        assert!(PatternConfig { neighbors: 8, radius: 0.0 }.validate().is_err());
        assert!(PatternConfig { neighbors: 16, radius: 2.0 }.validate().is_ok());
        let img = GrayImage::constant(9, 9, 1.0).unwrap();
        let cfg16 = PatternConfig { neighbors: 16, radius: 2.0 };
        assert_eq!(lbp_code(&img, (4, 4), &cfg16).unwrap(), 0xffff);
        assert!(matches!(lbp_histogram(&img, &cfg16, UniformTable::shared()), Err(Error::Config(_))));
    }

    #[test]
    fn offsets_are_snapped() {
        let offs = PatternConfig::default().offsets();
        assert_eq!(offs[0], (1.0, 0.0));
        assert_eq!(offs[2], (0.0, -1.0));
        assert_eq!(offs[4], (-1.0, 0.0));
        assert_eq!(offs[6], (0.0, 1.0));
        assert!((offs[1].0 - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn lbp_code_examples() {
        let cfg = PatternConfig::default();
        let flat = GrayImage::constant(5, 5, 3.0).unwrap();
        assert_eq!(lbp_code(&flat, (2, 2), &cfg).unwrap(), 0xff);

        let peak = GrayImage::from_fn(5, 5, |x, y| if (x, y) == (2, 2) { 10.0 } else { 0.0 }).unwrap();
        assert_eq!(lbp_code(&peak, (2, 2), &cfg).unwrap(), 0);

        // dark left half, bright right half; the centre sits on the dark side
        // one level above its dark neighbours so ties do not set bits
        let step = GrayImage::from_fn(5, 5, |x, y| match (x, y) {
            (2, 2) => 1.0,
            (x, _) if x >= 3 => 255.0,
            _ => 0.0,
        })
        .unwrap();
        // right (0), upper right (1), lower right (7)
        assert_eq!(lbp_code(&step, (2, 2), &cfg).unwrap(), 0b1000_0011);

        // strictly right-facing bits with the centre on a mid-grey boundary
        let step = GrayImage::from_fn(5, 5, |x, _| match x {
            0 | 1 => 0.0,
            2 => 100.0,
            _ => 255.0,
        })
        .unwrap();
        assert_eq!(lbp_code(&step, (2, 2), &cfg).unwrap(), 0b1100_0111);
        assert!(lbp_code(&step, (0, 2), &cfg).is_err());
    }

    #[test]
    fn lbp_histogram_constant_and_normalised() {
        let t = UniformTable::shared();
        let cfg = PatternConfig::default();
        let flat = GrayImage::constant(8, 8, 9.0).unwrap();
        let h = lbp_histogram(&flat, &cfg, t).unwrap();
        assert_eq!(h[t.index(0xff) as usize], 1.0);
        assert_eq!(h.iter().sum::<f64>(), 1.0);

        let noise = GrayImage::from_fn(20, 17, |x, y| ((x * 31 + y * 17) * 7919 % 251) as f64).unwrap();
        let h = lbp_histogram(&noise, &cfg, t).unwrap();
        assert!((h.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(matches!(
            lbp_histogram(&GrayImage::constant(2, 9, 0.0).unwrap(), &cfg, t),
            Err(Error::DegenerateOutput(_))
        ));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn uniform_index_is_stable(code in any::<u8>()) {
                let a = UniformTable::new().index(code);
                prop_assert_eq!(a, UniformTable::shared().index(code));
                prop_assert_eq!(a < NON_UNIFORM_BIN, transitions(code) <= 2);
            }

            #[test]
            fn compare_bit_matches_tie_diff(x in -300.0f64..300.0, y in -300.0f64..300.0, nudge in -1e-8f64..1e-8) {
                for n in [x, y + nudge, y + y * nudge] {
                    prop_assert_eq!(compare_bit(n, y), sign_threshold(tie_diff(n, y)));
                }
            }

            #[test]
            fn lbp_code_affine_invariant(seed in any::<u64>(), a in 0.1f64..5.0, b in -50.0f64..50.0) {
                let img = GrayImage::from_fn(9, 9, |x, y| {
                    (seed.wrapping_mul(6364136223846793005).wrapping_add(((x * 9 + y) as u64).wrapping_mul(1442695040888963407)) >> 56) as f64
                }).unwrap();
                let t = img.affine_intensity(a, b).unwrap();
                let cfg = PatternConfig::default();
                for y in 1..8 {
                    for x in 1..8 {
                        prop_assert_eq!(lbp_code(&img, (x, y), &cfg).unwrap(), lbp_code(&t, (x, y), &cfg).unwrap());
                    }
                }
            }
        }
    }
}
