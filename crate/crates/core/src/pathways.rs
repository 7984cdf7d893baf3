//! Side branch, cross-gate fusion, associative memory and feedback.
//!
//! Forward functions and their local updates live side by side. All batch
//! tensors are row-major (B × features); weight deltas are batch means.

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frontend::sigmoid;
use crate::hierarchy::Layer;
use crate::util::{check_finite, kaiming_uniform, relu};

/// Mix strength of the cross-gate in both directions.
pub const CROSS_GATE_STRENGTH: f64 = 0.35;
/// Mix of the memory readout into side layer 1 during the second pass.
pub const FB_SIDE_MIX: f64 = 0.05;
/// Additive mix of the memory readout into the first-layer input map.
pub const FB_INPUT_MIX: f64 = 0.12;
/// Multiplicative gate strength on the first-layer input map.
pub const FB_GATE_MIX: f64 = 0.35;
/// Number of memory slots.
pub const MEMORY_SLOTS: usize = 96;
/// Spatial positions of the pooled first-layer input map (8×8).
pub const INPUT_POSITIONS: usize = 64;

fn batch_outer(post: ArrayView2<'_, f64>, pre: ArrayView2<'_, f64>) -> Array2<f64> {
    post.t().dot(&pre) / post.nrows().max(1) as f64
}

// ---------------------------------------------------------------------------
// Side branch

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SideParams {
    pub eta_d: f64,
    pub delta_d: f64,
    pub alpha_d: f64,
}

impl Default for SideParams {
    fn default() -> Self {
        Self {
            eta_d: 2e-3,
            delta_d: 1e-4,
            alpha_d: 5e-4,
        }
    }
}

/// How the side-branch gate is formed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateMode {
    /// The fixed saliency map.
    Saliency,
    /// `S ≡ 1`.
    Uniform,
    /// The saliency map with its pixels shuffled by a fixed per-seed permutation.
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SideBranch {
    pub w_d1: Array2<f64>,
    pub w_d2: Array2<f64>,
}

impl SideBranch {
    pub fn new(input: usize, hidden: usize, output: usize, rng: &mut impl rand::Rng) -> Self {
        Self {
            w_d1: kaiming_uniform(hidden, input, rng),
            w_d2: kaiming_uniform(output, hidden, rng),
        }
    }

    /// Layer 1 alone: `r = ReLU(W_d1 g)`.
    pub fn layer1(&self, gated: ArrayView2<'_, f64>) -> Array2<f64> {
        gated.dot(&self.w_d1.t()).mapv(relu)
    }

    /// Layer 2 alone: `z = ReLU(W_d2 r)`.
    pub fn layer2(&self, r: ArrayView2<'_, f64>) -> Array2<f64> {
        r.dot(&self.w_d2.t()).mapv(relu)
    }

    pub fn param_count(&self) -> usize {
        self.w_d1.len() + self.w_d2.len()
    }
}

/// Saliency resampled onto every unit of `layer`: each stream's units sit on
/// their own grid, and each unit receives the area average of the map over
/// its grid cell.
pub fn saliency_per_unit(map: &Array2<f64>, layer: &Layer) -> Array1<f64> {
    let mut out = Array1::zeros(layer.n_units());
    for (s, grid) in layer.grids.iter().enumerate() {
        out.slice_mut(s![layer.stream_range(s)])
            .assign(&grid.resample_area(map));
    }
    out
}

/// Applies a pixel permutation to a map (`out[i] = map[perm[i]]` in
/// row-major order).
pub fn permute_map(map: &Array2<f64>, perm: &[usize]) -> Array2<f64> {
    let flat: Vec<f64> = map.iter().copied().collect();
    Array2::from_shape_fn(map.dim(), |(y, x)| flat[perm[y * map.ncols() + x]])
}

/// `S ⊙ y_L2`, with `s_units` the per-unit saliency (B × n).
pub fn gate_input(s_units: ArrayView2<'_, f64>, y_l2: ArrayView2<'_, f64>) -> Array2<f64> {
    &s_units * &y_l2
}

/// `(r_d1, z_side)` for per-unit saliency `s_units` and layer-2 activity.
pub fn side_branch_forward(
    s_units: ArrayView2<'_, f64>,
    y_l2: ArrayView2<'_, f64>,
    w: &SideBranch,
) -> (Array2<f64>, Array2<f64>) {
    let gated = gate_input(s_units, y_l2);
    let r = w.layer1(gated.view());
    let z = w.layer2(r.view());
    (r, z)
}

/// `(ΔW_d1, ΔW_d2)`: Hebbian plus decay on both layers, plus off-diagonal
/// anti-Hebbian decorrelation of the side output on layer 2.
pub fn side_branch_deltas(
    w: &SideBranch,
    gated: ArrayView2<'_, f64>,
    r: ArrayView2<'_, f64>,
    z: ArrayView2<'_, f64>,
    p: &SideParams,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let d1 = (batch_outer(r, gated) - &w.w_d1 * p.delta_d) * p.eta_d;
    let mut d2 = (batch_outer(z, r) - &w.w_d2 * p.delta_d) * p.eta_d;
    if p.alpha_d != 0.0 {
        if d2.nrows() != d2.ncols() {
            return Err(Error::InvalidInput(format!(
                "side decorrelation needs a square second layer, got {:?}",
                d2.dim()
            )));
        }
        let mut zz = batch_outer(z, z);
        zz.diag_mut().fill(0.0);
        d2.scaled_add(-p.alpha_d, &zz);
    }
    Ok((d1, d2))
}

// ---------------------------------------------------------------------------
// Cross-gate

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossParams {
    pub eta_x: f64,
    pub delta_x: f64,
}

impl Default for CrossParams {
    fn default() -> Self {
        Self {
            eta_x: 1e-3,
            delta_x: 1e-4,
        }
    }
}

/// `W_×`, side-dim × main-dim.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossGate {
    pub w_x: Array2<f64>,
}

/// `ẑ_main = z_main + 0.35 σ(z_side W_×) ⊙ z_main` and symmetrically for the
/// side with `W_×ᵀ`.
pub fn fuse_cross_gate(
    z_main: ArrayView2<'_, f64>,
    z_side: ArrayView2<'_, f64>,
    g: &CrossGate,
) -> (Array2<f64>, Array2<f64>) {
    let gm = z_side.dot(&g.w_x).mapv(sigmoid);
    let gs = z_main.dot(&g.w_x.t()).mapv(sigmoid);
    let zm = Zip::from(&z_main)
        .and(&gm)
        .map_collect(|&z, &s| z + CROSS_GATE_STRENGTH * s * z);
    let zs = Zip::from(&z_side)
        .and(&gs)
        .map_collect(|&z, &s| z + CROSS_GATE_STRENGTH * s * z);
    (zm, zs)
}

/// `ΔW_× = η_× (⟨z_side z_mainᵀ⟩ − δ_× W_×)`.
pub fn cross_gate_delta(
    g: &CrossGate,
    z_side: ArrayView2<'_, f64>,
    z_main: ArrayView2<'_, f64>,
    p: &CrossParams,
) -> Array2<f64> {
    (batch_outer(z_side, z_main) - &g.w_x * p.delta_x) * p.eta_x
}

// ---------------------------------------------------------------------------
// Associative memory

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemoryParams {
    pub beta: f64,
    pub eta_k: f64,
    pub eta_v: f64,
    pub eta_q: f64,
    pub delta_k: f64,
    pub delta_v: f64,
    pub delta_q: f64,
}

impl Default for MemoryParams {
    fn default() -> Self {
        Self {
            beta: 0.5,
            eta_k: 1e-3,
            eta_v: 1e-3,
            eta_q: 1e-3,
            delta_k: 5e-4,
            delta_v: 5e-4,
            delta_q: 1e-4,
        }
    }
}

/// Keys (slots × d_q), values (slots × d_v) and the query projection
/// (d_q × concatenated input).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemoryState {
    pub k: Array2<f64>,
    pub v: Array2<f64>,
    pub w_q: Array2<f64>,
}

impl MemoryState {
    pub fn new(slots: usize, d_q: usize, d_v: usize, d_in: usize, rng: &mut impl rand::Rng) -> Self {
        Self {
            k: kaiming_uniform(slots, d_q, rng),
            v: kaiming_uniform(slots, d_v, rng),
            w_q: kaiming_uniform(d_q, d_in, rng),
        }
    }

    pub fn d_q(&self) -> usize {
        self.k.ncols()
    }

    pub fn param_count(&self) -> usize {
        self.k.len() + self.v.len() + self.w_q.len()
    }
}

/// Zero-pads or truncates each row to `d` columns.
fn fit_width(x: ArrayView2<'_, f64>, d: usize) -> Array2<f64> {
    let mut out = Array2::zeros((x.nrows(), d));
    let k = d.min(x.ncols());
    out.slice_mut(s![.., ..k]).assign(&x.slice(s![.., ..k]));
    out
}

/// `[ẑ_side; ẑ_main]` per row (just `ẑ_main` when the side branch is absent).
pub fn memory_input(z_side: Option<ArrayView2<'_, f64>>, z_main: ArrayView2<'_, f64>) -> Array2<f64> {
    match z_side {
        Some(zs) => concatenate(Axis(1), &[zs, z_main]).expect("matching batch sizes"),
        None => z_main.to_owned(),
    }
}

/// `q = (pad(ẑ_side) + pad(ẑ_main) + W_q [ẑ_side; ẑ_main]) / 3`.
pub fn memory_query(
    z_side: Option<ArrayView2<'_, f64>>,
    z_main: ArrayView2<'_, f64>,
    w_q: &Array2<f64>,
) -> Result<Array2<f64>> {
    let d_q = w_q.nrows();
    let cat = memory_input(z_side, z_main);
    if cat.ncols() != w_q.ncols() {
        return Err(Error::InvalidInput(format!(
            "query projection expects {} inputs, got {}",
            w_q.ncols(),
            cat.ncols()
        )));
    }
    let mut q = cat.dot(&w_q.t());
    if let Some(zs) = z_side {
        q += &fit_width(zs, d_q);
    }
    q += &fit_width(z_main, d_q);
    Ok(q / 3.0)
}

fn softmax_rows(logits: &mut Array2<f64>) {
    for mut row in logits.axis_iter_mut(Axis(0)) {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
}

/// `a = softmax(β K q)`, `h = Vᵀ a`, per row of `q`.
pub fn hopfield_retrieve(
    q: ArrayView2<'_, f64>,
    mem: &MemoryState,
    beta: f64,
) -> Result<(Array2<f64>, Array2<f64>)> {
    check_finite(q, "memory query")?;
    let mut a = q.dot(&mem.k.t()) * beta;
    softmax_rows(&mut a);
    check_finite(a.view(), "memory attention")?;
    let h = a.dot(&mem.v);
    Ok((a, h))
}

/// Batch-mean updates `(ΔK, ΔV, ΔW_q)`:
/// `ΔK_m = η_K(a_m q − δ_K K_m)`, `ΔV_m = η_V(a_m ẑ_main − δ_V V_m)`,
/// `ΔW_q = η_q(q [ẑ_side; ẑ_main]ᵀ − δ_q W_q)`.
pub fn memory_deltas(
    mem: &MemoryState,
    a: ArrayView2<'_, f64>,
    q: ArrayView2<'_, f64>,
    cat: ArrayView2<'_, f64>,
    z_main: ArrayView2<'_, f64>,
    p: &MemoryParams,
) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
    let dk = (batch_outer(a, q) - &mem.k * p.delta_k) * p.eta_k;
    let dv = (batch_outer(a, z_main) - &mem.v * p.delta_v) * p.eta_v;
    let dq = (batch_outer(q, cat) - &mem.w_q * p.delta_q) * p.eta_q;
    (dk, dv, dq)
}

// ---------------------------------------------------------------------------
// Feedback

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeedbackParams {
    pub eta_fb: f64,
    pub delta_fb: f64,
}

impl Default for FeedbackParams {
    fn default() -> Self {
        Self {
            eta_fb: 5e-4,
            delta_fb: 1e-4,
        }
    }
}

/// Top-down projections from the memory readout: into side layer 1
/// (absent without a side branch), and into the 8×8 first-layer input map
/// (additive and multiplicative-gate paths).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeedbackWeights {
    pub w_fb1: Option<Array2<f64>>,
    pub w_fbl1: Array2<f64>,
    pub w_gate: Array2<f64>,
}

impl FeedbackWeights {
    pub fn new(side_hidden: Option<usize>, d_v: usize, rng: &mut impl rand::Rng) -> Self {
        Self {
            w_fb1: side_hidden.map(|h| kaiming_uniform(h, d_v, rng)),
            w_fbl1: kaiming_uniform(INPUT_POSITIONS, d_v, rng),
            w_gate: kaiming_uniform(INPUT_POSITIONS, d_v, rng),
        }
    }

    pub fn param_count(&self) -> usize {
        self.w_fb1.as_ref().map_or(0, |w| w.len()) + self.w_fbl1.len() + self.w_gate.len()
    }
}

/// `z_fb = r_d1 + 0.05 W_fb1 h`.
pub fn feedback_side(r_d1: ArrayView2<'_, f64>, h: ArrayView2<'_, f64>, w_fb1: &Array2<f64>) -> Array2<f64> {
    &r_d1 + &(h.dot(&w_fb1.t()) * FB_SIDE_MIX)
}

/// `R_fb = R0 + 0.12 W_fbL1 h + 0.35 σ(W_gate h) ⊙ R0` for every stream input.
/// Stream inputs are laid out channel-major over the 64 spatial positions,
/// and the two spatial maps are broadcast over channels and streams.
pub fn feedback_input(
    r0: &[Array2<f64>],
    h: ArrayView2<'_, f64>,
    fb: &FeedbackWeights,
) -> Result<Vec<Array2<f64>>> {
    let add = h.dot(&fb.w_fbl1.t()) * FB_INPUT_MIX;
    let gate = h.dot(&fb.w_gate.t()).mapv(sigmoid);
    r0.iter()
        .map(|x| {
            if x.ncols() % INPUT_POSITIONS != 0 {
                return Err(Error::InvalidInput(format!(
                    "stream input width {} is not a multiple of {INPUT_POSITIONS}",
                    x.ncols()
                )));
            }
            let mut out = x.clone();
            for (b, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
                for (k, v) in row.iter_mut().enumerate() {
                    let p = k % INPUT_POSITIONS;
                    *v += add[[b, p]] + FB_GATE_MIX * gate[[b, p]] * *v;
                }
            }
            Ok(out)
        })
        .collect()
}

/// Mean over channels and streams of the first-layer input at each of the
/// 64 spatial positions (the post-synaptic activity of the input-map
/// feedback projections).
pub fn input_spatial_mean(r0: &[Array2<f64>]) -> Array2<f64> {
    let b = r0.first().map_or(0, |x| x.nrows());
    let mut acc = Array2::zeros((b, INPUT_POSITIONS));
    let mut count = 0usize;
    for x in r0 {
        for c in 0..x.ncols() / INPUT_POSITIONS {
            acc += &x.slice(s![.., c * INPUT_POSITIONS..(c + 1) * INPUT_POSITIONS]);
            count += 1;
        }
    }
    if count > 0 {
        acc /= count as f64;
    }
    acc
}

/// `ΔW = η_fb(⟨y hᵀ⟩ − δ_fb W)` for a single projection.
pub fn feedback_delta(
    w: &Array2<f64>,
    y_layer: ArrayView2<'_, f64>,
    h: ArrayView2<'_, f64>,
    p: &FeedbackParams,
) -> Array2<f64> {
    (batch_outer(y_layer, h) - w * p.delta_fb) * p.eta_fb
}
