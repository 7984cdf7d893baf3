use ndarray::Array3;

use super::colour::OpponentImage;
use crate::error::{Error, Result};

/// 4 subbands × 3 opponent channels.
pub const HAAR_CHANNELS: usize = 12;

/// Undecimated Haar coefficients, `[y, x, channel * 4 + band]` with bands
/// ordered LL, LH, HL, HH.
#[derive(Clone, Debug, PartialEq)]
pub struct HaarStack {
    pub coeffs: Array3<f64>,
}

/// One-level stationary Haar transform of every opponent channel. Each output
/// pixel combines the 2×2 block whose top-left corner it is, wrapping
/// periodically at the right and bottom edges.
pub fn haar_features(opp: &OpponentImage) -> Result<HaarStack> {
    let (h, w, c) = opp.channels.dim();
    if h % 2 != 0 || w % 2 != 0 || h == 0 || w == 0 {
        return Err(Error::InvalidInput(format!(
            "Haar transform needs even dimensions, got {h}x{w}"
        )));
    }
    let mut coeffs = Array3::zeros((h, w, c * 4));
    for ch in 0..c {
        for y in 0..h {
            let y1 = (y + 1) % h;
            for x in 0..w {
                let x1 = (x + 1) % w;
                let a = opp.channels[[y, x, ch]];
                let b = opp.channels[[y, x1, ch]];
                let cc = opp.channels[[y1, x, ch]];
                let d = opp.channels[[y1, x1, ch]];
                coeffs[[y, x, ch * 4]] = (a + b + cc + d) / 2.0;
                coeffs[[y, x, ch * 4 + 1]] = (a + b - cc - d) / 2.0;
                coeffs[[y, x, ch * 4 + 2]] = (a - b + cc - d) / 2.0;
                coeffs[[y, x, ch * 4 + 3]] = (a - b - cc + d) / 2.0;
            }
        }
    }
    Ok(HaarStack { coeffs })
}
