//! The linear softmax probe, the only consumer of labels, and the
//! stop-gradient barrier in front of it.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::check_finite;

/// Adam settings for the probe (weight decay is added to the gradient).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 3e-4,
            weight_decay: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// A representation copy with no route back to the model. The probe only
/// ever receives this type.
#[derive(Clone, Debug, PartialEq)]
pub struct Detached(Array2<f64>);

impl Detached {
    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }

    pub fn nrows(&self) -> usize {
        self.0.nrows()
    }
}

/// The boundary between representation and probe.
pub trait GradientBarrier: Sync {
    fn detach(&self, z: &Array2<f64>) -> Detached {
        Detached(z.clone())
    }

    /// Gradient handed back to the representation for an upstream gradient
    /// `grad_z` with respect to the probe input.
    fn backward(&self, grad_z: &Array2<f64>) -> Array2<f64>;
}

/// The real barrier: nothing flows back.
#[derive(Clone, Copy, Debug, Default)]
pub struct StopGradient;

impl GradientBarrier for StopGradient {
    fn backward(&self, grad_z: &Array2<f64>) -> Array2<f64> {
        Array2::zeros(grad_z.raw_dim())
    }
}

/// Deliberately broken barrier that lets the probe gradient through; exists
/// only so the audit can be shown to fire.
#[derive(Clone, Copy, Debug, Default)]
pub struct LeakyBarrier;

impl GradientBarrier for LeakyBarrier {
    fn backward(&self, grad_z: &Array2<f64>) -> Array2<f64> {
        grad_z.clone()
    }
}

/// Loss and gradients of one probe evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbeGradients {
    pub loss: f64,
    pub grad_w: Array2<f64>,
    pub grad_b: Array1<f64>,
    /// `∂L/∂z`, B × D.
    pub grad_z: Array2<f64>,
}

/// Floor on the running rate of the probe's input statistics.
pub const INPUT_STATS_MOMENTUM: f64 = 0.01;
/// Variance floor of the input standardisation.
pub const INPUT_STATS_EPS: f64 = 1e-5;

/// `ŷ = softmax(W ẑ + b)` with Adam state, where `ẑ = (z − μ) / √(σ² + ε)`
/// standardises each input feature with running statistics of the probe's
/// own (detached, label-free) training inputs. The standardisation is a fixed
/// affine map at evaluation time, so the classifier stays linear in `z`; it
/// keeps Adam's step size meaningful while the representation's scale drifts.
/// Until the first training step the statistics are unused (`ẑ = z`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearProbe {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
    pub m_w: Array2<f64>,
    pub v_w: Array2<f64>,
    pub m_b: Array1<f64>,
    pub v_b: Array1<f64>,
    pub step: u64,
    pub input_mean: Array1<f64>,
    pub input_var: Array1<f64>,
    /// Batches folded into the input statistics.
    pub input_batches: u64,
}

fn softmax_rows(logits: &mut Array2<f64>) {
    for mut row in logits.axis_iter_mut(Axis(0)) {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
}

impl LinearProbe {
    /// `U(±1/√D)` initialisation of weights and biases.
    pub fn new(classes: usize, dim: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (dim.max(1) as f64).sqrt();
        Self::from_params(
            Array2::from_shape_simple_fn((classes, dim), || rng.random_range(-bound..=bound)),
            Array1::from_shape_simple_fn(classes, || rng.random_range(-bound..=bound)),
        )
    }

    pub fn from_params(w: Array2<f64>, b: Array1<f64>) -> Self {
        Self {
            m_w: Array2::zeros(w.raw_dim()),
            v_w: Array2::zeros(w.raw_dim()),
            m_b: Array1::zeros(b.len()),
            v_b: Array1::zeros(b.len()),
            input_mean: Array1::zeros(w.ncols()),
            input_var: Array1::ones(w.ncols()),
            input_batches: 0,
            w,
            b,
            step: 0,
        }
    }

    /// Per-feature factor `1 / √(σ² + ε)`, or 1 before any statistics exist.
    fn input_scale(&self) -> Array1<f64> {
        if self.input_batches == 0 {
            Array1::ones(self.dim())
        } else {
            self.input_var.mapv(|v| 1.0 / (v + INPUT_STATS_EPS).sqrt())
        }
    }

    /// The standardised probe input `ẑ`.
    pub fn standardise(&self, z: ArrayView2<'_, f64>) -> Array2<f64> {
        if self.input_batches == 0 {
            return z.to_owned();
        }
        (&z - &self.input_mean) * &self.input_scale()
    }

    /// Folds a batch into the running input statistics; the first batch sets
    /// them outright, later ones blend in at rate `max(1/n, momentum)`.
    pub fn update_input_stats(&mut self, z: ArrayView2<'_, f64>) {
        if z.nrows() == 0 {
            return;
        }
        self.input_batches += 1;
        let rate = (1.0 / self.input_batches as f64).max(INPUT_STATS_MOMENTUM);
        let mean = z.mean_axis(Axis(0)).expect("non-empty batch");
        let var = z.var_axis(Axis(0), 0.0);
        self.input_mean = &self.input_mean * (1.0 - rate) + &mean * rate;
        self.input_var = &self.input_var * (1.0 - rate) + &var * rate;
    }

    fn logits(&self, z: ArrayView2<'_, f64>) -> Array2<f64> {
        self.standardise(z).dot(&self.w.t()) + &self.b
    }

    pub fn classes(&self) -> usize {
        self.w.nrows()
    }

    pub fn dim(&self) -> usize {
        self.w.ncols()
    }

    pub fn probabilities(&self, z: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut logits = self.logits(z);
        softmax_rows(&mut logits);
        logits
    }

    pub fn predict(&self, z: ArrayView2<'_, f64>) -> Vec<usize> {
        let logits = self.logits(z);
        logits
            .axis_iter(Axis(0))
            .map(|r| {
                r.iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
                    .0
            })
            .collect()
    }

    pub fn accuracy(&self, z: ArrayView2<'_, f64>, labels: &[u8]) -> f64 {
        accuracy(&self.predict(z), labels)
    }

    /// Mean cross-entropy.
    pub fn loss(&self, z: ArrayView2<'_, f64>, labels: &[u8]) -> f64 {
        let p = self.probabilities(z);
        labels
            .iter()
            .enumerate()
            .map(|(i, &y)| -p[[i, usize::from(y)]].max(f64::MIN_POSITIVE).ln())
            .sum::<f64>()
            / labels.len().max(1) as f64
    }

    /// Closed-form gradients of the mean cross-entropy with the input
    /// statistics held fixed: `∂L/∂W = (ŷ − onehot)ᵀ ẑ / B`,
    /// `∂L/∂b = mean(ŷ − onehot)`, `∂L/∂z = ((ŷ − onehot) W / B) ⊙ s` with `s`
    /// the per-feature standardisation factor.
    pub fn gradients(&self, z: ArrayView2<'_, f64>, labels: &[u8]) -> Result<ProbeGradients> {
        if z.nrows() != labels.len() || z.ncols() != self.dim() {
            return Err(Error::InvalidInput(format!(
                "probe expects B×{} features with B labels, got {:?} and {}",
                self.dim(),
                z.dim(),
                labels.len()
            )));
        }
        if let Some(&y) = labels.iter().find(|&&y| usize::from(y) >= self.classes()) {
            return Err(Error::InvalidInput(format!("label {y} outside {} classes", self.classes())));
        }
        let b = labels.len().max(1) as f64;
        let mut err = self.probabilities(z);
        let mut loss = 0.0;
        for (i, &y) in labels.iter().enumerate() {
            let y = usize::from(y);
            loss -= err[[i, y]].max(f64::MIN_POSITIVE).ln();
            err[[i, y]] -= 1.0;
        }
        let grad_w = err.t().dot(&self.standardise(z)) / b;
        let grad_b = err.sum_axis(Axis(0)) / b;
        let grad_z = err.dot(&self.w) / b * &self.input_scale();
        Ok(ProbeGradients {
            loss: loss / b,
            grad_w,
            grad_b,
            grad_z,
        })
    }

    /// One Adam step on a detached batch (after folding it into the input
    /// statistics); returns the loss and `∂L/∂z`.
    pub fn step(&mut self, z: &Detached, labels: &[u8], cfg: &AdamConfig) -> Result<ProbeGradients> {
        if z.view().ncols() != self.dim() {
            return Err(Error::InvalidInput(format!(
                "probe expects {} features, got {}",
                self.dim(),
                z.view().ncols()
            )));
        }
        self.update_input_stats(z.view());
        let g = self.gradients(z.view(), labels)?;
        check_finite(g.grad_w.view(), "probe gradient")?;
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - cfg.beta1.powi(t);
        let c2 = 1.0 - cfg.beta2.powi(t);
        let update = |p: &mut f64, grad: f64, m: &mut f64, v: &mut f64| {
            let g = grad + cfg.weight_decay * *p;
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            *p -= cfg.lr * (*m / c1) / ((*v / c2).sqrt() + cfg.eps);
        };
        ndarray::Zip::from(&mut self.w)
            .and(&g.grad_w)
            .and(&mut self.m_w)
            .and(&mut self.v_w)
            .for_each(|p, &gr, m, v| update(p, gr, m, v));
        ndarray::Zip::from(&mut self.b)
            .and(&g.grad_b)
            .and(&mut self.m_b)
            .and(&mut self.v_b)
            .for_each(|p, &gr, m, v| update(p, gr, m, v));
        Ok(g)
    }
}

pub fn accuracy(pred: &[usize], labels: &[u8]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = pred.iter().zip(labels).filter(|(p, &y)| **p == usize::from(y)).count();
    hits as f64 / labels.len() as f64
}
