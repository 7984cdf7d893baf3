//! The four-layer competitive main pathway.
//!
//! Each layer holds one feedforward matrix per active stream. Units of all
//! streams are concatenated into one layer vector; recurrent lateral
//! inhibition acts on a band of neighbouring units in that vector, and
//! divisive normalisation pools over the whole layer (global term) and over a
//! 3×3 neighbourhood of each unit on its stream's 2-D unit grid (local term).
//! Slow homeostatic gains bias the pre-activations of units whose long-run
//! activity leaves the dead-band.

use ndarray::{s, Array1, Array2, ArrayView2, Axis, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::{check_finite, kaiming_uniform, relu};

/// Homeostatic dead-band for the gains.
pub const GAIN_BAND: (f64, f64) = (0.75, 1.25);

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub alpha_inhib: f64,
    pub alpha_div: f64,
    pub beta_div: f64,
    pub w_g: f64,
    pub w_l: f64,
    pub n_iters: usize,
    pub lateral_radius: usize,
}

impl Default for LayerParams {
    fn default() -> Self {
        Self {
            alpha_inhib: 0.2,
            alpha_div: 1.0,
            beta_div: 0.5,
            w_g: 0.5,
            w_l: 0.5,
            n_iters: 3,
            lateral_radius: 2,
        }
    }
}

impl LayerParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_div > 0.0) {
            return Err(Error::Config(format!("alpha_div must be > 0, got {}", self.alpha_div)));
        }
        if self.n_iters == 0 {
            return Err(Error::Config("n_iters must be >= 1".into()));
        }
        for (name, v) in [
            ("alpha_inhib", self.alpha_inhib),
            ("beta_div", self.beta_div),
            ("w_g", self.w_g),
            ("w_l", self.w_l),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Row-major placement of a stream's units on a near-square grid, used for
/// local pooling and for mapping spatial maps onto units.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnitGrid {
    pub n: usize,
    pub rows: usize,
    pub cols: usize,
}

impl UnitGrid {
    pub fn new(n: usize) -> Self {
        let cols = (n as f64).sqrt().ceil().max(1.0) as usize;
        let rows = n.div_ceil(cols).max(1);
        Self { n, rows, cols }
    }

    /// Mean over the existing units of the 3×3 neighbourhood (self included).
    pub fn pool3x3(&self, a: &[f64], out: &mut [f64]) {
        for i in 0..self.n {
            let (r, c) = (i / self.cols, i % self.cols);
            let mut acc = 0.0;
            let mut cnt = 0usize;
            for rr in r.saturating_sub(1)..=(r + 1).min(self.rows - 1) {
                for cc in c.saturating_sub(1)..=(c + 1).min(self.cols - 1) {
                    let j = rr * self.cols + cc;
                    if j < self.n {
                        acc += a[j];
                        cnt += 1;
                    }
                }
            }
            out[i] = acc / cnt as f64;
        }
    }

    /// Area-average resampling of an H×W map onto this grid; entry `i` is the
    /// value for unit `i` (cells past `n` are dropped).
    pub fn resample_area(&self, map: &Array2<f64>) -> Array1<f64> {
        let (h, w) = map.dim();
        let span = |k: usize, parts: usize, len: usize| {
            let lo = k as f64 * len as f64 / parts as f64;
            let hi = (k + 1) as f64 * len as f64 / parts as f64;
            (lo, hi)
        };
        let overlap = |lo: f64, hi: f64, p: usize| (hi.min(p as f64 + 1.0) - lo.max(p as f64)).max(0.0);
        Array1::from_shape_fn(self.n, |i| {
            let (r, c) = (i / self.cols, i % self.cols);
            let (y0, y1) = span(r, self.rows, h);
            let (x0, x1) = span(c, self.cols, w);
            let mut acc = 0.0;
            let mut area = 0.0;
            for py in y0.floor() as usize..(y1.ceil() as usize).min(h) {
                let wy = overlap(y0, y1, py);
                for px in x0.floor() as usize..(x1.ceil() as usize).min(w) {
                    let wt = wy * overlap(x0, x1, px);
                    acc += wt * map[[py, px]];
                    area += wt;
                }
            }
            acc / area
        })
    }
}

/// Banded lateral inhibition weights `L ⊙ M`: unit `i` is inhibited by units
/// `j` with `0 < |i − j| ≤ radius`. Stored as magnitudes (inhibition is
/// subtracted), `band[[i, k]] = L[i, i + k − radius]`; the centre column and
/// out-of-range entries are always zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LateralWeights {
    pub radius: usize,
    pub band: Array2<f64>,
}

impl LateralWeights {
    pub fn zeros(n: usize, radius: usize) -> Self {
        Self {
            radius,
            band: Array2::zeros((n, 2 * radius + 1)),
        }
    }

    pub fn n(&self) -> usize {
        self.band.nrows()
    }

    /// Whether `(i, j)` lies in the inhibition neighbourhood (symmetric).
    pub fn mask(&self, i: usize, j: usize) -> bool {
        i != j && i.abs_diff(j) <= self.radius && i < self.n() && j < self.n()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if self.mask(i, j) {
            self.band[[i, j + self.radius - i]]
        } else {
            0.0
        }
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        assert!(self.mask(i, j), "({i}, {j}) is outside the lateral mask");
        self.band[[i, j + self.radius - i]] = v;
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let n = self.n();
        Array2::from_shape_fn((n, n), |(i, j)| self.get(i, j))
    }

    /// `(L ⊙ M) y` for each row of a B×n batch.
    pub fn apply(&self, y: ArrayView2<'_, f64>) -> Array2<f64> {
        let n = self.n();
        let r = self.radius;
        let mut out = Array2::zeros(y.dim());
        for (yb, mut ob) in y.axis_iter(Axis(0)).zip(out.axis_iter_mut(Axis(0))) {
            for i in 0..n {
                let lo = i.saturating_sub(r);
                let hi = (i + r).min(n - 1);
                let mut acc = 0.0;
                for j in lo..=hi {
                    if j != i {
                        acc += self.band[[i, j + r - i]] * yb[j];
                    }
                }
                ob[i] = acc;
            }
        }
        out
    }

    /// Adds a dense update restricted to the mask, then clips to `[0, 1]`.
    pub fn add_masked(&mut self, delta: &Array2<f64>) {
        let n = self.n();
        let r = self.radius;
        for i in 0..n {
            for j in i.saturating_sub(r)..=(i + r).min(n - 1) {
                if j != i {
                    let v = &mut self.band[[i, j + r - i]];
                    *v = (*v + delta[[i, j]]).clamp(0.0, 1.0);
                }
            }
        }
    }

    /// Adds a band-shaped update (same layout as `band`), then clips to `[0, 1]`.
    pub fn add_band(&mut self, delta: &Array2<f64>) {
        let n = self.n();
        let r = self.radius;
        for i in 0..n {
            for k in 0..2 * r + 1 {
                let j = i as isize + k as isize - r as isize;
                if k != r && j >= 0 && (j as usize) < n {
                    let v = &mut self.band[[i, k]];
                    *v = (*v + delta[[i, k]]).clamp(0.0, 1.0);
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HomeostasisParams {
    pub eta_g: f64,
    pub kappa_g: f64,
}

impl Default for HomeostasisParams {
    fn default() -> Self {
        Self {
            eta_g: 0.01,
            kappa_g: 0.1,
        }
    }
}

/// Per-unit slow gains `g` (EMA of batch-mean activity), initialised to 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerState {
    pub gains: Array1<f64>,
}

impl LayerState {
    pub fn new(n: usize) -> Self {
        Self {
            gains: Array1::ones(n),
        }
    }
}

/// `κ_g (g − clip(g, 0.75, 1.25))`, subtracted from the pre-activations.
pub fn homeostatic_correction(gains: &Array1<f64>, kappa_g: f64) -> Array1<f64> {
    gains.mapv(|g| kappa_g * (g - g.clamp(GAIN_BAND.0, GAIN_BAND.1)))
}

/// `g ← (1 − η_g) g + η_g ȳ` with ȳ the batch mean of each unit's activity.
pub fn homeostasis_update(state: &mut LayerState, batch_acts: ArrayView2<'_, f64>, eta_g: f64) {
    let mean = batch_acts
        .mean_axis(Axis(0))
        .unwrap_or_else(|| Array1::zeros(state.gains.len()));
    Zip::from(&mut state.gains)
        .and(&mean)
        .for_each(|g, &m| *g = (1.0 - eta_g) * *g + eta_g * m);
}

/// Divisive denominator `sqrt(α_div + β_div (w_g ā + w_l a_local)²)` for a
/// batch of rectified drives `a` (B×n), pooling locally on each stream grid.
pub fn divisive_denominator(
    a: &Array2<f64>,
    grids: &[(usize, UnitGrid)],
    p: &LayerParams,
) -> Array2<f64> {
    let (b, n) = a.dim();
    let mut den = Array2::zeros((b, n));
    let mut local = vec![0.0; n];
    for (ab, mut db) in a.axis_iter(Axis(0)).zip(den.axis_iter_mut(Axis(0))) {
        let row = ab.to_vec();
        let abar = row.iter().sum::<f64>() / n.max(1) as f64;
        for &(off, grid) in grids {
            grid.pool3x3(&row[off..off + grid.n], &mut local[off..off + grid.n]);
        }
        for i in 0..n {
            let pooled = p.w_g * abar + p.w_l * local[i];
            db[i] = (p.alpha_div + p.beta_div * pooled * pooled).sqrt();
        }
    }
    den
}

/// All fixed-point iterates `y⁽⁰⁾ … y⁽ⁿ⁾` of
/// `y ← ReLU(h̃ − α (L⊙M) y) / den`, starting from `ReLU(h̃) / den`.
pub fn fixed_point_iterates(
    h_tilde: &Array2<f64>,
    den: &Array2<f64>,
    lateral: &LateralWeights,
    alpha: f64,
    n_iters: usize,
) -> Vec<Array2<f64>> {
    let mut y = Zip::from(h_tilde).and(den).map_collect(|&h, &d| relu(h) / d);
    let mut out = Vec::with_capacity(n_iters + 1);
    out.push(y.clone());
    for _ in 0..n_iters {
        let inhib = lateral.apply(y.view());
        y = Zip::from(h_tilde)
            .and(&inhib)
            .and(den)
            .map_collect(|&h, &li, &d| relu(h - alpha * li) / d);
        out.push(y.clone());
    }
    out
}

/// Result of one layer's forward pass over a batch.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerActivity {
    /// Raw drive `h = W x`, B×n.
    pub pre: Array2<f64>,
    /// Competitive output `y ≥ 0`, B×n.
    pub acts: Array2<f64>,
}

/// One layer: a feedforward matrix per stream, shared lateral weights and
/// homeostatic gains over the concatenated units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weights: Vec<Array2<f64>>,
    pub offsets: Vec<usize>,
    pub grids: Vec<UnitGrid>,
    pub lateral: LateralWeights,
    pub state: LayerState,
}

impl Layer {
    pub fn new(stream_shapes: &[(usize, usize)], radius: usize, rng: &mut impl rand::Rng) -> Self {
        let mut offsets = Vec::with_capacity(stream_shapes.len());
        let mut n = 0;
        for &(units, _) in stream_shapes {
            offsets.push(n);
            n += units;
        }
        Self {
            weights: stream_shapes
                .iter()
                .map(|&(units, fan_in)| kaiming_uniform(units, fan_in, rng))
                .collect(),
            offsets,
            grids: stream_shapes.iter().map(|&(u, _)| UnitGrid::new(u)).collect(),
            lateral: LateralWeights::zeros(n, radius),
            state: LayerState::new(n),
        }
    }

    pub fn n_units(&self) -> usize {
        self.lateral.n()
    }

    pub fn stream_range(&self, s: usize) -> std::ops::Range<usize> {
        self.offsets[s]..self.offsets[s] + self.weights[s].nrows()
    }

    fn grid_offsets(&self) -> Vec<(usize, UnitGrid)> {
        self.offsets.iter().copied().zip(self.grids.iter().copied()).collect()
    }

    /// Forward pass; `inputs[s]` is the B×fan_in input of stream `s`.
    pub fn forward(
        &self,
        inputs: &[ArrayView2<'_, f64>],
        p: &LayerParams,
        kappa_g: f64,
    ) -> Result<LayerActivity> {
        if inputs.len() != self.weights.len() {
            return Err(Error::InvalidInput(format!(
                "layer has {} streams, got {} inputs",
                self.weights.len(),
                inputs.len()
            )));
        }
        let b = inputs.first().map_or(0, |x| x.nrows());
        let mut pre = Array2::zeros((b, self.n_units()));
        for (s, (x, w)) in inputs.iter().zip(&self.weights).enumerate() {
            if x.ncols() != w.ncols() || x.nrows() != b {
                return Err(Error::InvalidInput(format!(
                    "stream {s}: input {:?} does not fit weights {:?}",
                    x.dim(),
                    w.dim()
                )));
            }
            pre.slice_mut(s![.., self.stream_range(s)]).assign(&x.dot(&w.t()));
        }
        let corr = homeostatic_correction(&self.state.gains, kappa_g);
        let h_tilde = &pre - &corr.insert_axis(Axis(0));
        let a = h_tilde.mapv(relu);
        let den = divisive_denominator(&a, &self.grid_offsets(), p);
        let acts = fixed_point_iterates(&h_tilde, &den, &self.lateral, p.alpha_inhib, p.n_iters)
            .pop()
            .expect("at least one iterate");
        Ok(LayerActivity { pre, acts })
    }
}

/// A stack of competitive layers sharing stream structure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hierarchy {
    pub layers: Vec<Layer>,
    pub params: LayerParams,
    pub homeostasis: HomeostasisParams,
}

impl Hierarchy {
    /// `input_dims[s]` is the input size of stream `s`; `widths[l]` the
    /// per-stream unit count of layer `l`.
    pub fn new(
        input_dims: &[usize],
        widths: &[usize],
        params: LayerParams,
        homeostasis: HomeostasisParams,
        rng: &mut impl rand::Rng,
    ) -> Result<Self> {
        params.validate()?;
        if input_dims.is_empty() || widths.is_empty() {
            return Err(Error::Config("hierarchy needs at least one stream and one layer".into()));
        }
        let mut fan_in = input_dims.to_vec();
        let mut layers = Vec::with_capacity(widths.len());
        for &w in widths {
            let shapes: Vec<(usize, usize)> = fan_in.iter().map(|&f| (w, f)).collect();
            layers.push(Layer::new(&shapes, params.lateral_radius, rng));
            fan_in = vec![w; input_dims.len()];
        }
        Ok(Self {
            layers,
            params,
            homeostasis,
        })
    }

    pub fn n_streams(&self) -> usize {
        self.layers[0].weights.len()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, Layer::n_units)
    }

    /// Runs every layer; `inputs[s]` is stream `s`'s B×d input.
    pub fn forward(&self, inputs: &[Array2<f64>]) -> Result<Vec<LayerActivity>> {
        let mut out: Vec<LayerActivity> = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate() {
            let views: Vec<ArrayView2<'_, f64>> = match out.last() {
                None => inputs.iter().map(|x| x.view()).collect(),
                Some(prev) => (0..layer.weights.len())
                    .map(|s| prev.acts.slice(s![.., self.layers[l - 1].stream_range(s)]))
                    .collect(),
            };
            let act = layer.forward(&views, &self.params, self.homeostasis.kappa_g)?;
            check_finite(act.acts.view(), &format!("hierarchy layer {}", l + 1))?;
            out.push(act);
        }
        Ok(out)
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.iter().map(|w| w.len()).sum::<usize>())
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::util::group_rng;
    use proptest::prelude::*;
    use rand::Rng;

    fn single_layer(n_in: usize, n: usize) -> Layer {
        Layer::new(&[(n, n_in)], 2, &mut group_rng(3, 0))
    }

    #[test]
    fn collapses_to_relu_without_competition() {
        let layer = single_layer(6, 5);
        let p = LayerParams {
            alpha_inhib: 0.0,
            beta_div: 0.0,
            alpha_div: 1.0,
            ..LayerParams::default()
        };
        let mut rng = group_rng(9, 0);
        let x = Array2::from_shape_simple_fn((4, 6), || rng.random_range(-1.0..1.0));
        let out = layer.forward(&[x.view()], &p, 0.1).unwrap();
        let expect = x.dot(&layer.weights[0].t()).mapv(relu);
        assert_eq!(out.acts, expect);
    }

    #[test]
    fn zero_input_gives_zero_output() {
        let mut layer = single_layer(6, 5);
        layer.lateral.band.fill(0.5);
        let out = layer
            .forward(&[Array2::zeros((2, 6)).view()], &LayerParams::default(), 0.1)
            .unwrap();
        assert!(out.acts.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn two_unit_fixed_point_matches_long_iteration() {
        let mut lat = LateralWeights::zeros(2, 2);
        lat.set(0, 1, 0.8);
        lat.set(1, 0, 0.6);
        let h = Array2::from_shape_vec((1, 2), vec![1.0, 0.9]).unwrap();
        let den = Array2::from_shape_vec((1, 2), vec![1.1, 1.2]).unwrap();
        let default_iters = fixed_point_iterates(&h, &den, &lat, 0.2, 3).pop().unwrap();
        let short = fixed_point_iterates(&h, &den, &lat, 0.2, 8).pop().unwrap();
        let long = fixed_point_iterates(&h, &den, &lat, 0.2, 1000).pop().unwrap();
        // Closed form for the linear regime (both units stay active).
        let (a, l01, l10) = (0.2, 0.8, 0.6);
        let (d0, d1) = (1.1, 1.2);
        // y0 = (1 − a l01 y1)/d0, y1 = (0.9 − a l10 y0)/d1
        let y0 = (1.0 / d0 - a * l01 * 0.9 / (d0 * d1)) / (1.0 - a * a * l01 * l10 / (d0 * d1));
        let y1 = (0.9 - a * l10 * y0) / d1;
        assert!((long[[0, 0]] - y0).abs() < 1e-12);
        assert!((long[[0, 1]] - y1).abs() < 1e-12);
        for (s, l) in short.iter().zip(long.iter()) {
            assert!((s - l).abs() < 1e-6, "{s} vs {l}");
        }
        // The default three sweeps already land within 1e-3 on this strongly coupled pair.
        for (s, l) in default_iters.iter().zip(long.iter()) {
            assert!((s - l).abs() < 1e-3, "{s} vs {l}");
        }
    }

    #[test]
    fn lateral_band_matches_dense() {
        let mut rng = group_rng(4, 4);
        let mut lat = LateralWeights::zeros(7, 2);
        lat.band.mapv_inplace(|_| rng.random_range(0.0..1.0));
        // Entries outside the mask must not contribute even if nonzero in storage.
        let y = Array2::from_shape_simple_fn((3, 7), || rng.random_range(0.0..1.0));
        let dense = lat.to_dense();
        let expect = y.dot(&dense.t());
        let got = lat.apply(y.view());
        for (a, b) in expect.iter().zip(got.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        for i in 0..7 {
            assert_eq!(dense[[i, i]], 0.0);
            for j in 0..7 {
                assert_eq!(lat.mask(i, j), lat.mask(j, i));
            }
        }
    }

    #[test]
    fn homeostasis_examples() {
        assert_eq!(homeostatic_correction(&Array1::from_elem(3, 1.0), 0.1), Array1::<f64>::zeros(3));
        let c = homeostatic_correction(&Array1::from_elem(1, 2.0), 0.1);
        assert!((c[0] - 0.075).abs() < 1e-15);
        let mut st = LayerState::new(2);
        homeostasis_update(&mut st, Array2::zeros((4, 2)).view(), 0.01);
        assert!((st.gains[0] - 0.99).abs() < 1e-15);
    }

    #[test]
    fn dead_band_makes_kappa_irrelevant() {
        let mut layer = single_layer(5, 9);
        layer.state.gains = Array1::from_shape_fn(9, |i| 0.75 + 0.05 * i as f64);
        let mut rng = group_rng(2, 2);
        let x = Array2::from_shape_simple_fn((3, 5), || rng.random_range(-1.0..1.0));
        let p = LayerParams::default();
        let a = layer.forward(&[x.view()], &p, 0.1).unwrap();
        let b = layer.forward(&[x.view()], &p, 0.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn unit_grid_shapes_and_pooling() {
        let g = UnitGrid::new(10);
        assert_eq!((g.rows, g.cols), (3, 4));
        let a: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let mut out = vec![0.0; 10];
        g.pool3x3(&a, &mut out);
        // Unit 0 neighbours: 0, 1, 4, 5.
        assert!((out[0] - 2.5).abs() < 1e-15);
        // Unit 9 (row 2, col 1) neighbours: 4, 5, 6, 8, 9.
        assert!((out[9] - 32.0 / 5.0).abs() < 1e-12);
    }

    #[test]
    fn area_resampling_preserves_constants_and_means() {
        let g = UnitGrid::new(25);
        let c = g.resample_area(&Array2::from_elem((32, 32), 0.3));
        assert!(c.iter().all(|v| (v - 0.3).abs() < 1e-12));
        let map = Array2::from_shape_fn((32, 32), |(y, x)| (y * 32 + x) as f64);
        let r = g.resample_area(&map);
        let mean_r = r.sum() / 25.0;
        assert!((mean_r - map.mean().unwrap()).abs() < 1e-9);
    }

    #[test]
    fn hierarchy_shapes_and_nonnegative() {
        let mut rng = group_rng(0, 0);
        let h = Hierarchy::new(
            &[12, 20],
            &[10, 8, 6, 4],
            LayerParams::default(),
            HomeostasisParams::default(),
            &mut rng,
        )
        .unwrap();
        assert_eq!(h.output_dim(), 8);
        assert_eq!(h.param_count(), 10 * 12 + 10 * 20 + 2 * (8 * 10 + 6 * 8 + 4 * 6));
        let x1 = Array2::from_shape_simple_fn((3, 12), || rng.random_range(-1.0..1.0));
        let x2 = Array2::from_shape_simple_fn((3, 20), || rng.random_range(-1.0..1.0));
        let acts = h.forward(&[x1, x2]).unwrap();
        assert_eq!(acts.len(), 4);
        assert!(acts.iter().all(|a| a.acts.iter().all(|v| *v >= 0.0)));
    }

    #[test]
    fn non_finite_input_is_a_numerical_error() {
        let mut rng = group_rng(0, 0);
        let h = Hierarchy::new(&[4], &[3, 3], LayerParams::default(), HomeostasisParams::default(), &mut rng)
            .unwrap();
        let mut x = Array2::zeros((1, 4));
        x[[0, 1]] = f64::INFINITY;
        match h.forward(&[x]) {
            Err(Error::Numerical { location, .. }) => assert!(location.contains("layer 1")),
            other => panic!("expected numerical error, got {other:?}"),
        }
    }

    #[test]
    fn params_validation() {
        let p = LayerParams {
            alpha_div: 0.0,
            ..LayerParams::default()
        };
        assert!(matches!(p.validate(), Err(Error::Config(_))));
    }

    proptest! {
        #[test]
        fn denominator_bounded_below(v in prop::collection::vec(0.0f64..100.0, 12)) {
            let a = Array2::from_shape_vec((2, 6), v).unwrap();
            let p = LayerParams::default();
            let den = divisive_denominator(&a, &[(0, UnitGrid::new(6))], &p);
            prop_assert!(den.iter().all(|d| *d >= p.alpha_div.sqrt()));
        }

        #[test]
        fn fixed_point_contracts(seed in 0u64..10_000) {
            let mut rng = group_rng(seed, 1);
            let n = 6;
            let mut lat = LateralWeights::zeros(n, 2);
            lat.band.mapv_inplace(|_| rng.random_range(0.0..1.0));
            let h = Array2::from_shape_simple_fn((2, n), || rng.random_range(-1.0..2.0));
            let a = h.mapv(relu);
            let den = divisive_denominator(&a, &[(0, UnitGrid::new(n))], &LayerParams::default());
            let it = fixed_point_iterates(&h, &den, &lat, 0.2, 8);
            let dist: Vec<f64> = it
                .windows(2)
                .map(|w| (&w[1] - &w[0]).iter().fold(0.0f64, |m, d| m.max(d.abs())))
                .collect();
            for k in 2..dist.len() {
                prop_assert!(dist[k] <= dist[k - 1] + 1e-15, "{dist:?}");
            }
        }
    }
}
