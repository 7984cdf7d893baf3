//! Shared fixtures for the integration tests and the acceptance report.
#![allow(dead_code)]

pub mod criteria;

use ndarray::{Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use visnet_plastic::cli::{DatasetKind, RunConfig, MEMORY_MODE_HOPFIELD};
use visnet_plastic::engine::mean_abs_offdiag_corr;
use visnet_plastic::hierarchy::{HomeostasisParams, Hierarchy, LayerParams};
use visnet_plastic::plasticity::{anti_hebbian_band, hebbian_delta, RuleCoefficients};
use visnet_plastic::util::{cap_row_norms, MAX_ROW_NORM};

pub const TOY_INPUT: usize = 8;
pub const TOY_WIDTHS: [usize; 2] = [6, 4];
pub const TOY_LATENTS: usize = 2;
pub const TOY_BATCHES: usize = 500;
pub const TOY_BATCH: usize = 16;

/// Correlated Gaussian input: a fixed mixing of a few shared latents plus
/// independent noise.
pub struct CorrelatedGaussian {
    mixing: Array2<f64>,
    noise: f64,
    rng: ChaCha8Rng,
}

impl CorrelatedGaussian {
    pub fn new(dim: usize, latents: usize, noise: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mixing = Array2::from_shape_simple_fn((latents, dim), || rng.random_range(0.2..1.0));
        Self { mixing, noise, rng }
    }

    pub fn sample(&mut self, n: usize) -> Array2<f64> {
        let (k, d) = self.mixing.dim();
        let z = Array2::from_shape_simple_fn((n, k), || StandardNormal.sample(&mut self.rng));
        let e: Array2<f64> = Array2::from_shape_simple_fn((n, d), || StandardNormal.sample(&mut self.rng));
        z.dot(&self.mixing) + e * self.noise
    }
}

/// Trains a two-layer toy hierarchy with the Hebbian rule and, when
/// `alpha_a > 0`, anti-Hebbian lateral learning; returns the mean
/// |off-diagonal correlation| of the top-layer output on held-out data.
pub fn decorrelation_toy(alpha_a: f64, seed: u64) -> f64 {
    *decorrelation_toy_layers(alpha_a, seed).last().unwrap()
}

/// Same training run as [`decorrelation_toy`], reporting the held-out
/// mean |off-diagonal correlation| of every layer, bottom first.
pub fn decorrelation_toy_layers(alpha_a: f64, seed: u64) -> Vec<f64> {
    let rules = RuleCoefficients::default();
    let mut h = Hierarchy::new(
        &[TOY_INPUT],
        &TOY_WIDTHS,
        LayerParams::default(),
        HomeostasisParams::default(),
        &mut ChaCha8Rng::seed_from_u64(seed),
    )
    .unwrap();
    let mut data = CorrelatedGaussian::new(TOY_INPUT, TOY_LATENTS, 0.3, seed ^ 0xDA7A);
    for _ in 0..TOY_BATCHES {
        let x = data.sample(TOY_BATCH);
        let acts = h.forward(&[x.clone()]).unwrap();
        for l in 0..h.layers.len() {
            let input = if l == 0 { x.view() } else { acts[l - 1].acts.view() };
            let y = acts[l].acts.view();
            let d = hebbian_delta(input, y, &h.layers[l].weights[0], rules.delta_h) * rules.alpha_h;
            let w = &mut h.layers[l].weights[0];
            *w += &d;
            cap_row_norms(w, MAX_ROW_NORM);
            if alpha_a > 0.0 {
                let radius = h.layers[l].lateral.radius;
                let band = anti_hebbian_band(y, radius) * -alpha_a;
                h.layers[l].lateral.add_band(&band);
            }
        }
    }
    let test = data.sample(4000);
    h.forward(&[test])
        .unwrap()
        .iter()
        .map(|a| mean_abs_offdiag_corr(a.acts.view()))
        .collect()
}

/// Mean of each column, used to sanity-check toy activity.
pub fn column_means(a: &Array2<f64>) -> Vec<f64> {
    a.mean_axis(Axis(0)).unwrap().to_vec()
}

/// A small, fast, fully specified run on the synthetic dataset.
pub fn synthetic_config(n_train: usize, n_test: usize, epochs: usize, seeds: Vec<u64>) -> RunConfig {
    RunConfig {
        memory_mode: MEMORY_MODE_HOPFIELD.into(),
        dataset: DatasetKind::Synthetic,
        subset: Some(n_train),
        test_subset: Some(n_test),
        epochs,
        seeds,
        batch_size: 4,
        n_boot: 2000,
        ..RunConfig::default()
    }
}
