use std::f64::consts::PI;

use ndarray::{Array2, Array3, ArrayView3, Axis, s};
use serde::{Deserialize, Serialize};

use super::conv::GaborEnergyPlan;
use crate::error::{Error, Result};

pub const N_FREQUENCIES: usize = 7;
pub const N_ORIENTATIONS: usize = 7;
/// Additive floor on every energy value.
pub const GABOR_EPSILON: f64 = 1e-6;

/// Seven geometrically spaced frequencies from 0.05 to 0.40 cycles/pixel
/// (ratio √2).
pub fn default_frequencies() -> [f64; N_FREQUENCIES] {
    std::array::from_fn(|k| 0.05 * 2f64.sqrt().powi(k as i32))
}

/// One quadrature pair (phase 0 and phase π/2) at a single frequency and
/// orientation. Both kernels are (2·radius+1)² and zero-mean.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaborKernel {
    pub frequency: f64,
    pub theta: f64,
    pub sigma: f64,
    pub radius: usize,
    pub re: Array2<f64>,
    pub im: Array2<f64>,
}

impl GaborKernel {
    pub fn new(frequency: f64, theta: f64) -> Self {
        let sigma = 0.56 / frequency;
        let radius = (3.0 * sigma).ceil() as usize;
        let size = 2 * radius + 1;
        let (ct, st) = (theta.cos(), theta.sin());
        let r = radius as f64;
        let mut re = Array2::zeros((size, size));
        let mut im = Array2::zeros((size, size));
        for iy in 0..size {
            let y = iy as f64 - r;
            for ix in 0..size {
                let x = ix as f64 - r;
                let xt = x * ct + y * st;
                let yt = -x * st + y * ct;
                let env = (-(xt * xt + yt * yt) / (2.0 * sigma * sigma)).exp();
                let phase = 2.0 * PI * frequency * xt;
                re[[iy, ix]] = env * phase.cos();
                im[[iy, ix]] = env * (phase + PI / 2.0).cos();
            }
        }
        // Remove DC so constant inputs give zero response, then scale the pair
        // jointly to unit L1 mass per kernel on average.
        let n = (size * size) as f64;
        let (mre, mim) = (re.sum() / n, im.sum() / n);
        re.mapv_inplace(|v| v - mre);
        im.mapv_inplace(|v| v - mim);
        let l1 = re.iter().map(|v: &f64| v.abs()).sum::<f64>() + im.iter().map(|v: &f64| v.abs()).sum::<f64>();
        if l1 > 0.0 {
            let c = 2.0 / l1;
            re.mapv_inplace(|v| v * c);
            im.mapv_inplace(|v| v * c);
        }
        Self {
            frequency,
            theta,
            sigma,
            radius,
            re,
            im,
        }
    }

    pub fn size(&self) -> usize {
        2 * self.radius + 1
    }
}

/// All kernel pairs, indexed `frequency_index * n_theta + orientation_index`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaborBank {
    pub frequencies: Vec<f64>,
    pub n_theta: usize,
    pub kernels: Vec<GaborKernel>,
}

impl GaborBank {
    pub fn kernel(&self, f: usize, t: usize) -> &GaborKernel {
        &self.kernels[f * self.n_theta + t]
    }
}

/// Builds the bank with orientations `kπ/n_theta`, `k = 0..n_theta`.
pub fn build_gabor_bank(frequencies: &[f64], n_theta: usize) -> Result<GaborBank> {
    if frequencies.is_empty() || n_theta == 0 {
        return Err(Error::Config("Gabor bank needs at least one frequency and orientation".into()));
    }
    for &f in frequencies {
        if !(f > 0.0 && f <= 0.5) {
            return Err(Error::Config(format!(
                "Gabor frequency {f} must lie in (0, 0.5] cycles/pixel"
            )));
        }
    }
    let kernels = frequencies
        .iter()
        .flat_map(|&f| (0..n_theta).map(move |t| GaborKernel::new(f, t as f64 * PI / n_theta as f64)))
        .collect();
    Ok(GaborBank {
        frequencies: frequencies.to_vec(),
        n_theta,
        kernels,
    })
}

/// Gabor energy maps, `[stream, y, x]` with stream = `f * n_theta + θ`.
#[derive(Clone, Debug, PartialEq)]
pub struct StreamStack {
    pub energies: Array3<f64>,
    pub n_frequencies: usize,
    pub n_theta: usize,
}

impl StreamStack {
    pub fn n_streams(&self) -> usize {
        self.energies.dim().0
    }

    /// The `n_theta` orientation maps of frequency `f`.
    pub fn frequency_stream(&self, f: usize) -> ArrayView3<'_, f64> {
        self.energies
            .slice(s![f * self.n_theta..(f + 1) * self.n_theta, .., ..])
    }

    /// Mean over all (frequency, orientation) maps.
    pub fn mean_map(&self) -> Array2<f64> {
        self.energies
            .mean_axis(Axis(0))
            .expect("stream stack is never empty")
    }
}

/// One-shot energy computation; prefer a reused [`GaborEnergyPlan`] in loops.
pub fn gabor_energy(lum: &Array2<f64>, bank: &GaborBank, epsilon: f64) -> Result<StreamStack> {
    let (h, w) = lum.dim();
    GaborEnergyPlan::new(bank, h, w)?.energy(lum, epsilon)
}
