//! Local weight-update rules.
//!
//! Every function here is a pure delta computation: it sees only the pre- and
//! post-synaptic activity of one connection bundle and that bundle's current
//! weights, and returns the change. Applying deltas is the engine's job.
//!
//! Batches are row-major: `x` is B×n_in, `y` is B×n_out, `W` is n_out×n_in.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Clip range for the per-neuron plasticity gain.
pub const RHO_RANGE: (f64, f64) = (0.5, 1.5);
/// Per-batch EMA decay of the activity trace behind ρ.
pub const TRACE_DECAY: f64 = 0.9;

/// Coefficients of the four core rules. A rule is disabled iff its
/// coefficient is zero.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RuleCoefficients {
    pub alpha_h: f64,
    pub delta_h: f64,
    pub alpha_a: f64,
    pub lambda_f: f64,
    pub alpha_r: f64,
    pub delta_r: f64,
}

impl Default for RuleCoefficients {
    fn default() -> Self {
        Self {
            alpha_h: 5e-3,
            delta_h: 1e-4,
            alpha_a: 2e-3,
            lambda_f: 3e-3,
            alpha_r: 1e-3,
            delta_r: 1e-4,
        }
    }
}

impl RuleCoefficients {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha_h", self.alpha_h),
            ("delta_h", self.delta_h),
            ("alpha_a", self.alpha_a),
            ("lambda_f", self.lambda_f),
            ("alpha_r", self.alpha_r),
            ("delta_r", self.delta_r),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

fn batch_outer(y: ArrayView2<'_, f64>, x: ArrayView2<'_, f64>) -> Array2<f64> {
    let b = y.nrows().max(1) as f64;
    y.t().dot(&x) / b
}

/// `Δ_ij = ⟨y_i x_j⟩ − δ_H W_ij`.
pub fn hebbian_delta(
    x: ArrayView2<'_, f64>,
    y: ArrayView2<'_, f64>,
    w: &Array2<f64>,
    delta_h: f64,
) -> Array2<f64> {
    batch_outer(y, x) - w * delta_h
}

/// `Δ_ij = −⟨y_i y_j⟩` for `i ≠ j`, zero on the diagonal.
pub fn anti_hebbian_delta(y: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut d = -batch_outer(y, y);
    d.diag_mut().fill(0.0);
    d
}

/// The anti-Hebbian delta restricted to a band of half-width `radius`, in the
/// storage layout of [`crate::hierarchy::LateralWeights`]
/// (`out[[i, k]]` is the entry for `j = i + k − radius`). Avoids forming the
/// dense n×n correlation for wide layers.
pub fn anti_hebbian_band(y: ArrayView2<'_, f64>, radius: usize) -> Array2<f64> {
    let (b, n) = y.dim();
    let mut out = Array2::zeros((n, 2 * radius + 1));
    let inv_b = 1.0 / b.max(1) as f64;
    for i in 0..n {
        for k in 0..2 * radius + 1 {
            if k == radius {
                continue;
            }
            let j = i as isize + k as isize - radius as isize;
            if j < 0 || j as usize >= n {
                continue;
            }
            let j = j as usize;
            let s: f64 = (0..b).map(|r| y[[r, i]] * y[[r, j]]).sum();
            out[[i, k]] = -s * inv_b;
        }
    }
    out
}

/// `Δ_ij = ⟨y_i (x_j − x̂_j)⟩ − λ_F W_ij` with `x̂ = Wᵀ y` from this layer only.
pub fn free_energy_delta(
    x: ArrayView2<'_, f64>,
    y: ArrayView2<'_, f64>,
    w: &Array2<f64>,
    lambda_f: f64,
) -> Array2<f64> {
    let x_hat = y.dot(w);
    let err = &x - &x_hat;
    batch_outer(y, err.view()) - w * lambda_f
}

/// Mean squared reconstruction error `‖x − Wᵀy‖²` over the batch.
pub fn reconstruction_error(x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>, w: &Array2<f64>) -> f64 {
    let err = &x - &y.dot(w);
    err.iter().map(|e| e * e).sum::<f64>() / x.nrows().max(1) as f64
}

/// `Δ_ij = ⟨y_i^(pass 2) x_j^(pass 1)⟩ − δ_R W_ij`: post-synaptic activity of
/// the second pass against the pre-synaptic activity of the first.
pub fn recursive_delta(
    y_pass2: ArrayView2<'_, f64>,
    x_pass1: ArrayView2<'_, f64>,
    w: &Array2<f64>,
    delta_r: f64,
) -> Array2<f64> {
    batch_outer(y_pass2, x_pass1) - w * delta_r
}

/// `ΔW = clip(ρ)_i · Σ_k c_k T_k`, with ρ applied per row (post-synaptic
/// neuron). Terms with a zero coefficient are skipped entirely.
pub fn compose_delta(rho: &Array1<f64>, terms: &[(f64, &Array2<f64>)]) -> Result<Array2<f64>> {
    let shape = terms
        .first()
        .map(|(_, t)| t.raw_dim())
        .ok_or_else(|| Error::InvalidInput("compose_delta needs at least one term".into()))?;
    if terms.iter().any(|(_, t)| t.raw_dim() != shape) {
        return Err(Error::InvalidInput("compose_delta terms differ in shape".into()));
    }
    if rho.len() != shape[0] {
        return Err(Error::InvalidInput(format!(
            "rho has {} entries for {} rows",
            rho.len(),
            shape[0]
        )));
    }
    let mut out = Array2::zeros(shape);
    for &(c, t) in terms {
        if c != 0.0 {
            out.scaled_add(c, t);
        }
    }
    for (mut row, &r) in out.axis_iter_mut(Axis(0)).zip(rho) {
        let r = r.clamp(RHO_RANGE.0, RHO_RANGE.1);
        row.mapv_inplace(|v| v * r);
    }
    Ok(out)
}

/// Per-neuron plasticity gain `ρ`, driven homeostatically by an activity
/// trace: `ρ = clip(1 + γ (θ − trace), 0.5, 1.5)`. θ is fixed to the layer's
/// mean activity at the first update. In strict mode ρ stays at 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlasticityGain {
    pub rho: Array1<f64>,
    pub trace: Array1<f64>,
    pub gamma: f64,
    pub theta_target: Option<f64>,
    pub strict: bool,
}

impl PlasticityGain {
    pub fn new(n: usize, gamma: f64, strict: bool) -> Self {
        Self {
            rho: Array1::ones(n),
            trace: Array1::zeros(n),
            gamma,
            theta_target: None,
            strict,
        }
    }
}

pub fn gain_update(gain: &mut PlasticityGain, batch_acts: ArrayView2<'_, f64>) {
    let n = gain.rho.len();
    let mean = batch_acts.mean_axis(Axis(0)).unwrap_or_else(|| Array1::zeros(n));
    match gain.theta_target {
        None => {
            gain.theta_target = Some(mean.mean().unwrap_or(0.0));
            gain.trace = mean;
        }
        Some(_) => Zip::from(&mut gain.trace)
            .and(&mean)
            .for_each(|t, &m| *t = TRACE_DECAY * *t + (1.0 - TRACE_DECAY) * m),
    }
    if gain.strict {
        gain.rho.fill(1.0);
        return;
    }
    let theta = gain.theta_target.unwrap_or(0.0);
    let g = gain.gamma;
    Zip::from(&mut gain.rho)
        .and(&gain.trace)
        .for_each(|r, &t| *r = (1.0 + g * (theta - t)).clamp(RHO_RANGE.0, RHO_RANGE.1));
}

// ---------------------------------------------------------------------------
// Supplementary rules (extended rule set only).

fn fft_pair(u: ArrayView1<'_, f64>, v: ArrayView1<'_, f64>) -> (Vec<Complex<f64>>, Vec<Complex<f64>>) {
    let n = u.len();
    let fft = FftPlanner::new().plan_fft_forward(n);
    let mut a: Vec<Complex<f64>> = u.iter().map(|&x| Complex::new(x, 0.0)).collect();
    let mut b: Vec<Complex<f64>> = v.iter().map(|&x| Complex::new(x, 0.0)).collect();
    fft.process(&mut a);
    fft.process(&mut b);
    (a, b)
}

fn ifft_real(mut s: Vec<Complex<f64>>) -> Array1<f64> {
    let n = s.len();
    FftPlanner::new().plan_fft_inverse(n).process(&mut s);
    s.iter().map(|c| c.re / n as f64).collect()
}

/// Circular convolution `(u ⊛ v)_k = Σ_j u_j v_{(k − j) mod n}`.
pub fn circular_convolution(u: ArrayView1<'_, f64>, v: ArrayView1<'_, f64>) -> Array1<f64> {
    if u.is_empty() {
        return Array1::zeros(0);
    }
    let (a, b) = fft_pair(u, v);
    ifft_real(a.iter().zip(&b).map(|(x, y)| x * y).collect())
}

/// Circular correlation `(u ⋆ v)_k = Σ_j u_j v_{(j + k) mod n}`.
pub fn circular_correlation(u: ArrayView1<'_, f64>, v: ArrayView1<'_, f64>) -> Array1<f64> {
    if u.is_empty() {
        return Array1::zeros(0);
    }
    let (a, b) = fft_pair(u, v);
    ifft_real(a.iter().zip(&b).map(|(x, y)| x.conj() * y).collect())
}

/// Holographic binding: every row is pulled towards
/// `(1 − α_c)(u ⊛ v) + α_c (u ⋆ v)` at rate `η_H`.
pub fn hrr_delta(
    u: ArrayView1<'_, f64>,
    v: ArrayView1<'_, f64>,
    w: &Array2<f64>,
    alpha_c: f64,
    eta_h: f64,
) -> Result<Array2<f64>> {
    if u.len() != v.len() || u.len() != w.ncols() {
        return Err(Error::InvalidInput(format!(
            "HRR needs equal lengths: u {}, v {}, W cols {}",
            u.len(),
            v.len(),
            w.ncols()
        )));
    }
    let bound = circular_convolution(u, v) * (1.0 - alpha_c) + circular_correlation(u, v) * alpha_c;
    let mut d = -w.clone();
    for mut row in d.axis_iter_mut(Axis(0)) {
        row += &bound;
    }
    Ok(d * eta_h)
}

/// Radius rows are rescaled to when they leave the open unit ball.
pub const BALL_RADIUS: f64 = 0.99;

/// Rescales rows with norm ≥ 1 to norm [`BALL_RADIUS`].
pub fn project_to_ball(w: &Array2<f64>) -> Array2<f64> {
    let mut out = w.clone();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let n = row.dot(&row).sqrt();
        if n >= 1.0 {
            row.mapv_inplace(|v| v * BALL_RADIUS / n);
        }
    }
    out
}

/// Poincaré-ball distance.
pub fn poincare_distance(u: ArrayView1<'_, f64>, v: ArrayView1<'_, f64>) -> f64 {
    let diff = &u - &v;
    let delta = diff.dot(&diff);
    let a = 1.0 - u.dot(&u);
    let b = 1.0 - v.dot(&v);
    (1.0 + 2.0 * delta / (a * b)).acosh()
}

/// Gradient of `d(u, v)` with respect to `u`.
pub fn poincare_distance_grad(u: ArrayView1<'_, f64>, v: ArrayView1<'_, f64>) -> Array1<f64> {
    let diff = &u - &v;
    let delta = diff.dot(&diff);
    let a = 1.0 - u.dot(&u);
    let b = 1.0 - v.dot(&v);
    let x = 1.0 + 2.0 * delta / (a * b);
    let scale = 4.0 / (a * b * (x * x - 1.0).sqrt());
    (&diff + &(&u * (delta / a))) * scale
}

/// Hyperbolic repulsion `Δ_i = −λ_h ∇_{w_i} Σ_{j≠i} d(w_i, w_j)^{-2}`,
/// evaluated at the ball-projected rows. Coincident rows contribute nothing.
pub fn hyperbolic_delta(w: &Array2<f64>, lambda_h: f64) -> Array2<f64> {
    let p = project_to_ball(w);
    let m = p.nrows();
    let mut d = Array2::zeros(p.dim());
    for i in 0..m {
        let wi = p.row(i);
        let mut acc = Array1::<f64>::zeros(p.ncols());
        for j in 0..m {
            if j == i {
                continue;
            }
            let wj = p.row(j);
            let diff = &wi - &wj;
            if diff.dot(&diff) < 1e-24 {
                continue;
            }
            let dist = poincare_distance(wi, wj);
            // ∇ d^{-2} = −2 d^{-3} ∇d
            acc.scaled_add(-2.0 / dist.powi(3), &poincare_distance_grad(wi, wj));
        }
        d.row_mut(i).assign(&(acc * -lambda_h));
    }
    d
}

/// Full multi-level orthonormal 1-D Haar transform (length a power of two).
/// Output layout: `[approx, coarsest detail, …, finest details]`.
pub fn haar1d_forward(x: &[f64]) -> Vec<f64> {
    let mut a = x.to_vec();
    let mut len = a.len();
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut tmp = vec![0.0; len];
    while len > 1 {
        let half = len / 2;
        for k in 0..half {
            tmp[k] = (a[2 * k] + a[2 * k + 1]) * s;
            tmp[half + k] = (a[2 * k] - a[2 * k + 1]) * s;
        }
        a[..len].copy_from_slice(&tmp[..len]);
        len = half;
    }
    a
}

pub fn haar1d_inverse(c: &[f64]) -> Vec<f64> {
    let mut a = c.to_vec();
    let n = a.len();
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut tmp = vec![0.0; n];
    let mut len = 1;
    while len < n {
        for k in 0..len {
            tmp[2 * k] = (a[k] + a[len + k]) * s;
            tmp[2 * k + 1] = (a[k] - a[len + k]) * s;
        }
        a[..2 * len].copy_from_slice(&tmp[..2 * len]);
        len *= 2;
    }
    a
}

pub fn soft_threshold(v: f64, tau: f64) -> f64 {
    v.signum() * (v.abs() - tau).max(0.0)
}

/// `Δ_i = −λ_w · H⁻¹(S_τ(H(w_i)))`, rows zero-padded to a power of two and
/// truncated back afterwards.
pub fn wavelet_delta(w: &Array2<f64>, tau_w: f64, lambda_w: f64) -> Array2<f64> {
    let n = w.ncols();
    let padded = n.next_power_of_two().max(1);
    let mut out = Array2::zeros(w.dim());
    for (row, mut o) in w.axis_iter(Axis(0)).zip(out.axis_iter_mut(Axis(0))) {
        let mut buf = vec![0.0; padded];
        for (b, v) in buf.iter_mut().zip(row.iter()) {
            *b = *v;
        }
        let coeffs: Vec<f64> = haar1d_forward(&buf).into_iter().map(|c| soft_threshold(c, tau_w)).collect();
        let rec = haar1d_inverse(&coeffs);
        for (k, v) in o.iter_mut().enumerate() {
            *v = -lambda_w * rec[k];
        }
    }
    out
}
