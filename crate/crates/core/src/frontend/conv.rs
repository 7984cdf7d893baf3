//! "Same"-size 2-D convolution with reflect padding, in a direct form (used
//! as a reference) and an FFT form that evaluates a whole Gabor bank at once.

use std::sync::Arc;

use ndarray::{Array2, Array3};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::gabor::{GaborBank, StreamStack};
use crate::error::{Error, Result};

/// Maps an arbitrary (possibly negative or overlong) index into `0..n` by
/// mirror reflection without repeating the edge sample (`dcb|abcd|cba`).
/// The reflection is periodic with period `2(n-1)`, so kernels larger than
/// the image are still well defined.
pub fn reflect_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m >= n as isize {
        (period - m) as usize
    } else {
        m as usize
    }
}

/// Direct O(H·W·K²) convolution with reflect padding; output has the input's
/// shape. The kernel must be odd-sized in both directions.
pub fn convolve_same_direct(img: &Array2<f64>, kernel: &Array2<f64>) -> Array2<f64> {
    let (h, w) = img.dim();
    let (kh, kw) = kernel.dim();
    let (ry, rx) = ((kh / 2) as isize, (kw / 2) as isize);
    Array2::from_shape_fn((h, w), |(y, x)| {
        let mut acc = 0.0;
        for ky in 0..kh {
            let sy = reflect_index(y as isize - (ky as isize - ry), h);
            for kx in 0..kw {
                let sx = reflect_index(x as isize - (kx as isize - rx), w);
                acc += kernel[[ky, kx]] * img[[sy, sx]];
            }
        }
        acc
    })
}

/// Precomputed spectra for evaluating every kernel pair of a [`GaborBank`] on
/// images of one fixed size.
///
/// The image is reflect-padded by the largest kernel radius; with that much
/// padding a circular convolution is exact on the original pixel area. Each
/// quadrature pair is packed as one complex kernel `re + i·im`, so a single
/// inverse transform yields both responses.
#[derive(Clone)]
pub struct GaborEnergyPlan {
    height: usize,
    width: usize,
    pad: usize,
    rows: usize,
    cols: usize,
    n_frequencies: usize,
    n_theta: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
    spectra: Vec<Vec<Complex<f64>>>,
}

impl std::fmt::Debug for GaborEnergyPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GaborEnergyPlan")
            .field("height", &self.height)
            .field("width", &self.width)
            .field("pad", &self.pad)
            .field("kernels", &self.spectra.len())
            .finish()
    }
}

fn fft2_inplace(
    data: &mut [Complex<f64>],
    rows: usize,
    cols: usize,
    row_fft: &dyn Fft<f64>,
    col_fft: &dyn Fft<f64>,
) {
    for r in data.chunks_exact_mut(cols) {
        row_fft.process(r);
    }
    let mut buf = vec![Complex::new(0.0, 0.0); rows];
    for c in 0..cols {
        for r in 0..rows {
            buf[r] = data[r * cols + c];
        }
        col_fft.process(&mut buf);
        for r in 0..rows {
            data[r * cols + c] = buf[r];
        }
    }
}

impl GaborEnergyPlan {
    pub fn new(bank: &GaborBank, height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidInput("empty image size".into()));
        }
        let pad = bank.kernels.iter().map(|k| k.radius).max().unwrap_or(0);
        let rows = height + 2 * pad;
        let cols = width + 2 * pad;
        let mut planner = FftPlanner::new();
        let row_fwd = planner.plan_fft_forward(cols);
        let col_fwd = planner.plan_fft_forward(rows);
        let row_inv = planner.plan_fft_inverse(cols);
        let col_inv = planner.plan_fft_inverse(rows);
        let spectra = bank
            .kernels
            .iter()
            .map(|k| {
                let mut buf = vec![Complex::new(0.0, 0.0); rows * cols];
                let r = k.radius as isize;
                let size = 2 * k.radius + 1;
                for ky in 0..size {
                    let dy = (ky as isize - r).rem_euclid(rows as isize) as usize;
                    for kx in 0..size {
                        let dx = (kx as isize - r).rem_euclid(cols as isize) as usize;
                        buf[dy * cols + dx] = Complex::new(k.re[[ky, kx]], k.im[[ky, kx]]);
                    }
                }
                fft2_inplace(&mut buf, rows, cols, row_fwd.as_ref(), col_fwd.as_ref());
                buf
            })
            .collect();
        Ok(Self {
            height,
            width,
            pad,
            rows,
            cols,
            n_frequencies: bank.frequencies.len(),
            n_theta: bank.n_theta,
            row_fwd,
            col_fwd,
            row_inv,
            col_inv,
            spectra,
        })
    }

    /// Phase-invariant energy `sqrt(re² + im²) + epsilon` for every kernel pair.
    pub fn energy(&self, lum: &Array2<f64>, epsilon: f64) -> Result<StreamStack> {
        if lum.dim() != (self.height, self.width) {
            return Err(Error::InvalidInput(format!(
                "plan built for {}x{}, got {:?}",
                self.height,
                self.width,
                lum.dim()
            )));
        }
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::InvalidInput(format!("epsilon must be > 0, got {epsilon}")));
        }
        if lum.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite luminance".into()));
        }
        let (rows, cols, pad) = (self.rows, self.cols, self.pad);
        let mut padded = vec![Complex::new(0.0, 0.0); rows * cols];
        for py in 0..rows {
            let sy = reflect_index(py as isize - pad as isize, self.height);
            for px in 0..cols {
                let sx = reflect_index(px as isize - pad as isize, self.width);
                padded[py * cols + px] = Complex::new(lum[[sy, sx]], 0.0);
            }
        }
        fft2_inplace(&mut padded, rows, cols, self.row_fwd.as_ref(), self.col_fwd.as_ref());

        let scale = 1.0 / (rows * cols) as f64;
        let mut out = Array3::zeros((self.spectra.len(), self.height, self.width));
        let mut work = vec![Complex::new(0.0, 0.0); rows * cols];
        let mut col_buf = vec![Complex::new(0.0, 0.0); rows];
        for (s, spec) in self.spectra.iter().enumerate() {
            for ((w, a), b) in work.iter_mut().zip(&padded).zip(spec) {
                *w = a * b;
            }
            for c in 0..cols {
                for r in 0..rows {
                    col_buf[r] = work[r * cols + c];
                }
                self.col_inv.process(&mut col_buf);
                for r in 0..rows {
                    work[r * cols + c] = col_buf[r];
                }
            }
            for y in 0..self.height {
                let row = &mut work[(y + pad) * cols..(y + pad + 1) * cols];
                self.row_inv.process(row);
                for x in 0..self.width {
                    out[[s, y, x]] = (row[x + pad] * scale).norm() + epsilon;
                }
            }
        }
        Ok(StreamStack {
            energies: out,
            n_frequencies: self.n_frequencies,
            n_theta: self.n_theta,
        })
    }
}
