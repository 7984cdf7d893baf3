use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Logits are clamped to this magnitude so the sigmoid stays strictly inside
/// (0, 1) in double precision.
const LOGIT_CLAMP: f64 = 30.0;

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SaliencyWeights {
    pub w_int: f64,
    pub w_ori: f64,
    pub alpha_sym: f64,
}

impl Default for SaliencyWeights {
    fn default() -> Self {
        Self {
            w_int: 1.0,
            w_ori: 1.0,
            alpha_sym: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SaliencyMap {
    pub values: Array2<f64>,
}

/// Centred isotropic Gaussian bump (σ = H/4 vertically, W/4 horizontally),
/// min-max normalised to [0, 1].
pub fn symmetry_prior(height: usize, width: usize) -> Array2<f64> {
    let (cy, cx) = ((height as f64 - 1.0) / 2.0, (width as f64 - 1.0) / 2.0);
    let (sy, sx) = (height as f64 / 4.0, width as f64 / 4.0);
    let raw = Array2::from_shape_fn((height, width), |(y, x)| {
        let dy = (y as f64 - cy) / sy;
        let dx = (x as f64 - cx) / sx;
        (-(dy * dy + dx * dx) / 2.0).exp()
    });
    let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi > lo {
        raw.mapv(|v| (v - lo) / (hi - lo))
    } else {
        Array2::ones((height, width))
    }
}

/// `S = sigmoid(w_int·I + w_ori·Ō + α_sym·P_sym)` elementwise.
pub fn saliency_map(
    intensity: &Array2<f64>,
    mean_orientation_energy: &Array2<f64>,
    prior: &Array2<f64>,
    w: &SaliencyWeights,
) -> Result<SaliencyMap> {
    let dim = intensity.dim();
    if mean_orientation_energy.dim() != dim || prior.dim() != dim {
        return Err(Error::InvalidInput("saliency inputs differ in shape".into()));
    }
    if intensity.iter().chain(mean_orientation_energy.iter()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite saliency input".into()));
    }
    let values = Zip::from(intensity)
        .and(mean_orientation_energy)
        .and(prior)
        .map_collect(|&i, &o, &p| {
            let logit = w.w_int * i + w.w_ori * o + w.alpha_sym * p;
            sigmoid(logit.clamp(-LOGIT_CLAMP, LOGIT_CLAMP))
        });
    Ok(SaliencyMap { values })
}
