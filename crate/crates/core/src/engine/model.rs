//! Model assembly, the two-pass forward and the local-update schedule.

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, ArrayViewD, ArrayViewMutD, Axis};
use serde::{Deserialize, Serialize};

use super::features::{Batch, StreamSelect};
use crate::data::{permutation, streams};
use crate::error::{Error, Result};
use crate::hierarchy::{homeostasis_update, HomeostasisParams, Hierarchy, LayerActivity, LayerParams};
use crate::pathways::{
    cross_gate_delta, feedback_delta, feedback_input, feedback_side, fuse_cross_gate, gate_input,
    hopfield_retrieve, input_spatial_mean, memory_deltas, memory_input, memory_query, permute_map,
    saliency_per_unit, side_branch_deltas, CrossGate, CrossParams, FeedbackParams, FeedbackWeights,
    GateMode, MemoryParams, MemoryState, SideBranch, SideParams, MEMORY_SLOTS,
};
use crate::plasticity::{
    anti_hebbian_band, compose_delta, free_energy_delta, gain_update, hebbian_delta, hrr_delta,
    hyperbolic_delta, recursive_delta, wavelet_delta, PlasticityGain, RuleCoefficients, TRACE_DECAY,
};
use crate::util::{cap_row_norms, check_finite, group_rng, kaiming_uniform, MAX_ROW_NORM};

/// Total unit counts per layer, split evenly across the active streams.
pub const DEFAULT_WIDTHS: [usize; 4] = [1280, 768, 512, 384];
pub const SIDE_HIDDEN: usize = 128;
pub const SIDE_OUTPUT: usize = 128;
/// Query and value width of the memory (the main-stream output width).
pub const MEMORY_DIM: usize = 384;
/// Weight of the memory readout added to the main stream in the final representation.
pub const MEMORY_READOUT_MIX: f64 = 0.25;

/// Weight-initialisation stream ids (see [`group_rng`]).
pub mod init_groups {
    pub const HIERARCHY: u64 = 1;
    pub const SIDE: u64 = 2;
    pub const CROSS: u64 = 3;
    pub const MEMORY: u64 = 4;
    pub const FEEDBACK: u64 = 5;
    pub const PROBE: u64 = 6;
    pub const FROZEN_PROBE: u64 = 7;
    pub const FRESH_PROBE: u64 = 8;
    pub const EPOCH0_PROBE: u64 = 9;
    pub const AUDIT: u64 = 10;
}

/// Coefficients of the three supplementary rules (extended rule set only).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtendedParams {
    pub alpha_c: f64,
    pub eta_hrr: f64,
    pub lambda_h: f64,
    pub tau_w: f64,
    pub lambda_w: f64,
}

impl Default for ExtendedParams {
    fn default() -> Self {
        Self {
            alpha_c: 0.5,
            eta_hrr: 1e-4,
            lambda_h: 1e-6,
            tau_w: 1e-3,
            lambda_w: 1e-4,
        }
    }
}

/// Architecture plus every plasticity coefficient.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub streams: StreamSelect,
    pub widths: Vec<usize>,
    pub layer: LayerParams,
    pub homeostasis: HomeostasisParams,
    pub rules: RuleCoefficients,
    pub side_branch: bool,
    pub gate: GateMode,
    pub side: SideParams,
    pub cross: CrossParams,
    pub memory: bool,
    pub memory_params: MemoryParams,
    pub feedback: bool,
    pub feedback_params: FeedbackParams,
    pub extended: Option<ExtendedParams>,
    /// Gain of the ρ homeostat.
    pub rho_gamma: f64,
    /// Hold ρ ≡ 1.
    pub strict_gain: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            streams: StreamSelect::All,
            widths: DEFAULT_WIDTHS.to_vec(),
            layer: LayerParams::default(),
            homeostasis: HomeostasisParams::default(),
            rules: RuleCoefficients::default(),
            side_branch: true,
            gate: GateMode::Saliency,
            side: SideParams::default(),
            cross: CrossParams::default(),
            memory: true,
            memory_params: MemoryParams::default(),
            feedback: true,
            feedback_params: FeedbackParams::default(),
            extended: None,
            rho_gamma: 0.5,
            strict_gain: false,
        }
    }
}

impl ModelConfig {
    /// The single-stream baseline: Hebbian rule only, no side branch, memory or feedback.
    pub fn hebbian_only() -> Self {
        Self {
            streams: StreamSelect::SingleGabor(super::features::SINGLE_STREAM_FREQUENCY),
            rules: RuleCoefficients {
                alpha_a: 0.0,
                lambda_f: 0.0,
                alpha_r: 0.0,
                ..RuleCoefficients::default()
            },
            side_branch: false,
            memory: false,
            feedback: false,
            ..Self::default()
        }
    }

    pub fn representation_dim(&self) -> usize {
        self.widths.last().copied().unwrap_or(0) + if self.side_branch { SIDE_OUTPUT } else { 0 }
    }

    pub fn validate(&self) -> Result<()> {
        self.layer.validate()?;
        self.rules.validate()?;
        let n = self.streams.n_streams();
        if self.widths.len() < 2 {
            return Err(Error::Config("the hierarchy needs at least two layers".into()));
        }
        if let Some(w) = self.widths.iter().find(|&&w| w == 0 || w % n != 0) {
            return Err(Error::Config(format!("layer width {w} does not split across {n} streams")));
        }
        if self.widths.last() != Some(&MEMORY_DIM) {
            return Err(Error::Config(format!(
                "the top layer must have {MEMORY_DIM} units, got {:?}",
                self.widths.last()
            )));
        }
        if !(self.memory_params.beta.is_finite() && self.memory_params.beta >= 0.0) {
            return Err(Error::Config("memory beta must be finite and non-negative".into()));
        }
        if let StreamSelect::SingleGabor(f) = self.streams {
            if f >= crate::frontend::N_FREQUENCIES {
                return Err(Error::Config(format!("no Gabor stream {f}")));
            }
        }
        Ok(())
    }
}

/// Whether a tensor holds learned weights or running state.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TensorKind {
    Weight,
    State,
}

/// Every representational tensor; nothing in here is ever touched by labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub hierarchy: Hierarchy,
    pub gains: Vec<PlasticityGain>,
    pub side: Option<SideBranch>,
    pub cross: Option<CrossGate>,
    pub memory: Option<MemoryState>,
    pub feedback: Option<FeedbackWeights>,
    /// EMA of each layer-stream's batch-mean input (extended rules only).
    pub hrr_traces: Vec<Vec<Array1<f64>>>,
    pub gate_perm: Option<Vec<usize>>,
    pub batches_seen: u64,
}

/// Side-branch activity within one pass.
#[derive(Clone, Debug, PartialEq)]
pub struct SideActivity {
    pub gated: Array2<f64>,
    /// Layer-1 output after any feedback mix.
    pub r: Array2<f64>,
    pub z: Array2<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MemoryActivity {
    pub cat: Array2<f64>,
    pub q: Array2<f64>,
    pub a: Array2<f64>,
    pub h: Array2<f64>,
}

/// Everything one pass computes.
#[derive(Clone, Debug, PartialEq)]
pub struct PassState {
    /// The stream inputs the hierarchy saw.
    pub inputs: Vec<Array2<f64>>,
    pub layers: Vec<LayerActivity>,
    pub side: Option<SideActivity>,
    /// Cross-gated main and side outputs.
    pub z_main: Array2<f64>,
    pub z_side: Option<Array2<f64>>,
    pub memory: Option<MemoryActivity>,
}

impl PassState {
    /// Memory readout, zero when the memory is absent.
    pub fn readout(&self) -> Array2<f64> {
        match &self.memory {
            Some(m) => m.h.clone(),
            None => Array2::zeros((self.z_main.nrows(), MEMORY_DIM)),
        }
    }
}

/// Both passes and the final representation.
#[derive(Clone, Debug, PartialEq)]
pub struct TwoPass {
    pub pass1: PassState,
    pub pass2: PassState,
    pub z_final: Array2<f64>,
}

fn apply_delta(w: &mut Array2<f64>, d: &Array2<f64>, cap: bool) {
    *w += d;
    if cap {
        cap_row_norms(w, MAX_ROW_NORM);
    }
}

impl Model {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let n_streams = config.streams.n_streams();
        let per_stream: Vec<usize> = config.widths.iter().map(|w| w / n_streams).collect();
        let dims = config.streams.input_dims();
        let hierarchy = Hierarchy::new(
            &dims,
            &per_stream,
            config.layer,
            config.homeostasis,
            &mut group_rng(seed, init_groups::HIERARCHY),
        )?;
        let gains = hierarchy
            .layers
            .iter()
            .map(|l| PlasticityGain::new(l.n_units(), config.rho_gamma, config.strict_gain))
            .collect();
        let main_dim = hierarchy.output_dim();
        let side = config.side_branch.then(|| {
            SideBranch::new(
                hierarchy.layers[1].n_units(),
                SIDE_HIDDEN,
                SIDE_OUTPUT,
                &mut group_rng(seed, init_groups::SIDE),
            )
        });
        let cross = config.side_branch.then(|| CrossGate {
            w_x: kaiming_uniform(SIDE_OUTPUT, main_dim, &mut group_rng(seed, init_groups::CROSS)),
        });
        let memory = config.memory.then(|| {
            MemoryState::new(
                MEMORY_SLOTS,
                MEMORY_DIM,
                MEMORY_DIM,
                config.representation_dim(),
                &mut group_rng(seed, init_groups::MEMORY),
            )
        });
        let feedback = config.feedback.then(|| {
            FeedbackWeights::new(
                config.side_branch.then_some(SIDE_HIDDEN),
                MEMORY_DIM,
                &mut group_rng(seed, init_groups::FEEDBACK),
            )
        });
        let hrr_traces = if config.extended.is_some() {
            hierarchy
                .layers
                .iter()
                .map(|l| l.weights.iter().map(|w| Array1::zeros(w.ncols())).collect())
                .collect()
        } else {
            Vec::new()
        };
        let gate_perm = (config.side_branch && config.gate == GateMode::Random).then(|| {
            let side = crate::data::IMAGE_SIDE;
            permutation(side * side, seed, 0, streams::GATE_PERMUTATION)
        });
        let mut side = side;
        let mut cross = cross;
        let mut memory = memory;
        let mut feedback = feedback;
        // Start every capped projection inside the cap so that a zero update
        // is an exact no-op.
        let mut capped: Vec<&mut Array2<f64>> = Vec::new();
        if let Some(sb) = side.as_mut() {
            capped.extend([&mut sb.w_d1, &mut sb.w_d2]);
        }
        if let Some(g) = cross.as_mut() {
            capped.push(&mut g.w_x);
        }
        if let Some(m) = memory.as_mut() {
            capped.extend([&mut m.k, &mut m.v, &mut m.w_q]);
        }
        if let Some(fb) = feedback.as_mut() {
            capped.extend(fb.w_fb1.iter_mut());
            capped.extend([&mut fb.w_fbl1, &mut fb.w_gate]);
        }
        for w in capped {
            cap_row_norms(w, MAX_ROW_NORM);
        }
        Ok(Self {
            config,
            hierarchy,
            gains,
            side,
            cross,
            memory,
            feedback,
            hrr_traces,
            gate_perm,
            batches_seen: 0,
        })
    }

    pub fn representation_dim(&self) -> usize {
        self.config.representation_dim()
    }

    /// Parameter counts per module (learned weights only).
    pub fn param_counts(&self) -> Vec<(&'static str, usize)> {
        let lateral: usize = self.hierarchy.layers.iter().map(|l| l.lateral.band.len()).sum();
        vec![
            ("streams", self.hierarchy.param_count()),
            ("lateral", lateral),
            ("side_branch", self.side.as_ref().map_or(0, SideBranch::param_count)),
            ("cross_gate", self.cross.as_ref().map_or(0, |c| c.w_x.len())),
            ("memory", self.memory.as_ref().map_or(0, MemoryState::param_count)),
            ("feedback", self.feedback.as_ref().map_or(0, FeedbackWeights::param_count)),
        ]
    }

    /// Per-unit side-branch gate for layer 2, B × n_L2.
    pub fn side_gate(&self, batch: &Batch) -> Option<Array2<f64>> {
        self.side.as_ref()?;
        let layer = &self.hierarchy.layers[1];
        let n = layer.n_units();
        let b = batch.len();
        Some(match self.config.gate {
            GateMode::Uniform => Array2::ones((b, n)),
            GateMode::Saliency | GateMode::Random => {
                let mut out = Array2::zeros((b, n));
                for i in 0..b {
                    let mut map = batch.saliency_map(i);
                    if let Some(p) = &self.gate_perm {
                        map = permute_map(&map, p);
                    }
                    out.row_mut(i).assign(&saliency_per_unit(&map, layer));
                }
                out
            }
        })
    }

    /// One pass. `feedback_h` is the first-pass memory readout when this is
    /// the second pass (mixed into side layer 1).
    fn pass(
        &self,
        inputs: Vec<Array2<f64>>,
        s_units: Option<&Array2<f64>>,
        feedback_h: Option<ArrayView2<'_, f64>>,
        pass_name: &str,
    ) -> Result<PassState> {
        let layers = self.hierarchy.forward(&inputs).map_err(|e| match e {
            Error::Numerical { location, detail } => {
                Error::numerical(format!("{pass_name}, {location}"), detail)
            }
            other => other,
        })?;
        let top = &layers.last().expect("at least one layer").acts;
        let side = match (&self.side, s_units) {
            (Some(sb), Some(s)) => {
                let gated = gate_input(s.view(), layers[1].acts.view());
                let mut r = sb.layer1(gated.view());
                if let (Some(h), Some(w_fb1)) =
                    (feedback_h, self.feedback.as_ref().and_then(|f| f.w_fb1.as_ref()))
                {
                    r = feedback_side(r.view(), h, w_fb1);
                }
                let z = sb.layer2(r.view());
                check_finite(z.view(), &format!("{pass_name}, side branch"))?;
                Some(SideActivity { gated, r, z })
            }
            _ => None,
        };
        let (z_main, z_side) = match (&side, &self.cross) {
            (Some(sa), Some(g)) => {
                let (m, s) = fuse_cross_gate(top.view(), sa.z.view(), g);
                (m, Some(s))
            }
            _ => (top.clone(), None),
        };
        let memory = match &self.memory {
            Some(mem) => {
                let zs = z_side.as_ref().map(|z| z.view());
                let cat = memory_input(zs, z_main.view());
                let q = memory_query(zs, z_main.view(), &mem.w_q)?;
                let (a, h) = hopfield_retrieve(q.view(), mem, self.config.memory_params.beta)
                    .map_err(|e| match e {
                        Error::Numerical { location, detail } => {
                            Error::numerical(format!("{pass_name}, {location}"), detail)
                        }
                        other => other,
                    })?;
                Some(MemoryActivity { cat, q, a, h })
            }
            None => None,
        };
        Ok(PassState {
            inputs,
            layers,
            side,
            z_main,
            z_side,
            memory,
        })
    }

    fn first_pass(&self, batch: &Batch, s_units: Option<&Array2<f64>>) -> Result<PassState> {
        self.pass(batch.inputs.clone(), s_units, None, "pass 1")
    }

    fn second_pass(&self, batch: &Batch, s_units: Option<&Array2<f64>>, p1: &PassState) -> Result<PassState> {
        let h = p1.readout();
        let inputs = match &self.feedback {
            Some(fb) => feedback_input(&batch.inputs, h.view(), fb)?,
            None => batch.inputs.clone(),
        };
        self.pass(inputs, s_units, self.feedback.is_some().then(|| h.view()), "pass 2")
    }

    fn final_representation(&self, p2: &PassState) -> Result<Array2<f64>> {
        let main = &p2.z_main + &(p2.readout() * MEMORY_READOUT_MIX);
        let z = match &p2.z_side {
            Some(zs) => concatenate(Axis(1), &[main.view(), zs.view()]).expect("same batch size"),
            None => main,
        };
        check_finite(z.view(), "final representation")?;
        Ok(z)
    }

    /// Both passes with no plasticity at all.
    pub fn two_pass(&self, batch: &Batch) -> Result<TwoPass> {
        let s_units = self.side_gate(batch);
        let pass1 = self.first_pass(batch, s_units.as_ref())?;
        let pass2 = self.second_pass(batch, s_units.as_ref(), &pass1)?;
        let z_final = self.final_representation(&pass2)?;
        Ok(TwoPass { pass1, pass2, z_final })
    }

    /// The representation of a batch (no plasticity).
    pub fn represent(&self, batch: &Batch) -> Result<Array2<f64>> {
        Ok(self.two_pass(batch)?.z_final)
    }

    /// One training step: pass 1, local updates, pass 2 on the updated
    /// weights (no plasticity), then the recursive update.
    pub fn train_step(&mut self, batch: &Batch) -> Result<TwoPass> {
        let s_units = self.side_gate(batch);
        let pass1 = self.first_pass(batch, s_units.as_ref())?;
        self.local_updates(&pass1)?;
        let pass2 = self.second_pass(batch, s_units.as_ref(), &pass1)?;
        self.recursive_update(&pass1, &pass2)?;
        self.batches_seen += 1;
        let z_final = self.final_representation(&pass2)?;
        Ok(TwoPass { pass1, pass2, z_final })
    }

    /// Input of layer `l`, stream `s` within a pass.
    fn layer_input<'a>(&self, p: &'a PassState, l: usize, s: usize) -> ArrayView2<'a, f64> {
        if l == 0 {
            p.inputs[s].view()
        } else {
            p.layers[l - 1]
                .acts
                .slice(s![.., self.hierarchy.layers[l - 1].stream_range(s)])
        }
    }

    /// All non-recursive rules, homeostasis and the ρ homeostat.
    fn local_updates(&mut self, p1: &PassState) -> Result<()> {
        let rules = self.config.rules;
        let ext = self.config.extended;
        let n_layers = self.hierarchy.layers.len();
        for l in 0..n_layers {
            let n_streams = self.hierarchy.layers[l].weights.len();
            let acts = &p1.layers[l].acts;
            for s in 0..n_streams {
                let range = self.hierarchy.layers[l].stream_range(s);
                let x = self.layer_input(p1, l, s);
                let y = acts.slice(s![.., range.clone()]);
                let rho = self.gains[l].rho.slice(s![range]).to_owned();
                let w = &self.hierarchy.layers[l].weights[s];
                let mut terms: Vec<(f64, Array2<f64>)> = Vec::new();
                if rules.alpha_h != 0.0 {
                    terms.push((rules.alpha_h, hebbian_delta(x, y, w, rules.delta_h)));
                }
                if rules.lambda_f != 0.0 {
                    terms.push((rules.lambda_f, free_energy_delta(x, y, w, rules.lambda_f)));
                }
                if let Some(e) = ext {
                    let x_mean = x.mean_axis(Axis(0)).expect("non-empty batch");
                    let trace = &mut self.hrr_traces[l][s];
                    if e.eta_hrr != 0.0 {
                        terms.push((1.0, hrr_delta(x_mean.view(), trace.view(), w, e.alpha_c, e.eta_hrr)?));
                    }
                    trace.zip_mut_with(&x_mean, |t, &m| *t = TRACE_DECAY * *t + (1.0 - TRACE_DECAY) * m);
                    if e.lambda_h != 0.0 {
                        let ball = w / MAX_ROW_NORM;
                        terms.push((MAX_ROW_NORM, hyperbolic_delta(&ball, e.lambda_h)));
                    }
                    if e.lambda_w != 0.0 {
                        terms.push((1.0, wavelet_delta(w, e.tau_w, e.lambda_w)));
                    }
                }
                if terms.is_empty() {
                    continue;
                }
                let refs: Vec<(f64, &Array2<f64>)> = terms.iter().map(|(c, t)| (*c, t)).collect();
                let delta = compose_delta(&rho, &refs)?;
                check_finite(delta.view(), &format!("layer {} stream {s} update", l + 1))?;
                apply_delta(&mut self.hierarchy.layers[l].weights[s], &delta, true);
            }
            if rules.alpha_a != 0.0 {
                let layer = &mut self.hierarchy.layers[l];
                let mut band = anti_hebbian_band(acts.view(), layer.lateral.radius);
                for (mut row, &r) in band.axis_iter_mut(Axis(0)).zip(&self.gains[l].rho) {
                    let r = r.clamp(crate::plasticity::RHO_RANGE.0, crate::plasticity::RHO_RANGE.1);
                    row.mapv_inplace(|v| -rules.alpha_a * r * v);
                }
                layer.lateral.add_band(&band);
            }
            homeostasis_update(
                &mut self.hierarchy.layers[l].state,
                acts.view(),
                self.config.homeostasis.eta_g,
            );
            gain_update(&mut self.gains[l], acts.view());
        }

        if let (Some(sb), Some(sa)) = (self.side.as_mut(), p1.side.as_ref()) {
            let (d1, d2) = side_branch_deltas(sb, sa.gated.view(), sa.r.view(), sa.z.view(), &self.config.side)?;
            apply_delta(&mut sb.w_d1, &d1, true);
            apply_delta(&mut sb.w_d2, &d2, true);
            if let Some(g) = self.cross.as_mut() {
                let z_main = &p1.layers.last().expect("layers").acts;
                let d = cross_gate_delta(g, sa.z.view(), z_main.view(), &self.config.cross);
                apply_delta(&mut g.w_x, &d, true);
            }
        }
        if let (Some(mem), Some(ma)) = (self.memory.as_mut(), p1.memory.as_ref()) {
            let (dk, dv, dq) = memory_deltas(
                mem,
                ma.a.view(),
                ma.q.view(),
                ma.cat.view(),
                p1.z_main.view(),
                &self.config.memory_params,
            );
            apply_delta(&mut mem.k, &dk, true);
            apply_delta(&mut mem.v, &dv, true);
            apply_delta(&mut mem.w_q, &dq, true);
        }
        if let Some(fb) = self.feedback.as_mut() {
            let h = p1.readout();
            let p = self.config.feedback_params;
            if let (Some(w), Some(sa)) = (fb.w_fb1.as_mut(), p1.side.as_ref()) {
                let d = feedback_delta(w, sa.r.view(), h.view(), &p);
                apply_delta(w, &d, true);
            }
            let post = input_spatial_mean(&p1.inputs);
            let d = feedback_delta(&fb.w_fbl1, post.view(), h.view(), &p);
            apply_delta(&mut fb.w_fbl1, &d, true);
            let d = feedback_delta(&fb.w_gate, post.view(), h.view(), &p);
            apply_delta(&mut fb.w_gate, &d, true);
        }
        Ok(())
    }

    /// Recursive rule: pass-2 post-synaptic activity against pass-1 input.
    fn recursive_update(&mut self, p1: &PassState, p2: &PassState) -> Result<()> {
        let rules = self.config.rules;
        if rules.alpha_r == 0.0 {
            return Ok(());
        }
        for l in 0..self.hierarchy.layers.len() {
            for s in 0..self.hierarchy.layers[l].weights.len() {
                let range = self.hierarchy.layers[l].stream_range(s);
                let x1 = self.layer_input(p1, l, s);
                let y2 = p2.layers[l].acts.slice(s![.., range.clone()]);
                let rho = self.gains[l].rho.slice(s![range]).to_owned();
                let w = &self.hierarchy.layers[l].weights[s];
                let term = recursive_delta(y2, x1, w, rules.delta_r);
                let delta = compose_delta(&rho, &[(rules.alpha_r, &term)])?;
                check_finite(delta.view(), &format!("layer {} stream {s} recursive update", l + 1))?;
                apply_delta(&mut self.hierarchy.layers[l].weights[s], &delta, true);
            }
        }
        Ok(())
    }

    /// Read-only views of every tensor, in a fixed order.
    pub fn tensors(&self) -> Vec<(String, TensorKind, ArrayViewD<'_, f64>)> {
        let mut out = Vec::new();
        for (l, layer) in self.hierarchy.layers.iter().enumerate() {
            for (s, w) in layer.weights.iter().enumerate() {
                out.push((format!("hierarchy.l{}.s{s}.w", l + 1), TensorKind::Weight, w.view().into_dyn()));
            }
            out.push((format!("hierarchy.l{}.lateral", l + 1), TensorKind::Weight, layer.lateral.band.view().into_dyn()));
            out.push((format!("hierarchy.l{}.gains", l + 1), TensorKind::State, layer.state.gains.view().into_dyn()));
        }
        for (l, g) in self.gains.iter().enumerate() {
            out.push((format!("rho.l{}.rho", l + 1), TensorKind::State, g.rho.view().into_dyn()));
            out.push((format!("rho.l{}.trace", l + 1), TensorKind::State, g.trace.view().into_dyn()));
        }
        if let Some(sb) = &self.side {
            out.push(("side.w_d1".into(), TensorKind::Weight, sb.w_d1.view().into_dyn()));
            out.push(("side.w_d2".into(), TensorKind::Weight, sb.w_d2.view().into_dyn()));
        }
        if let Some(c) = &self.cross {
            out.push(("cross.w_x".into(), TensorKind::Weight, c.w_x.view().into_dyn()));
        }
        if let Some(m) = &self.memory {
            out.push(("memory.k".into(), TensorKind::Weight, m.k.view().into_dyn()));
            out.push(("memory.v".into(), TensorKind::Weight, m.v.view().into_dyn()));
            out.push(("memory.w_q".into(), TensorKind::Weight, m.w_q.view().into_dyn()));
        }
        if let Some(f) = &self.feedback {
            if let Some(w) = &f.w_fb1 {
                out.push(("feedback.w_fb1".into(), TensorKind::Weight, w.view().into_dyn()));
            }
            out.push(("feedback.w_fbl1".into(), TensorKind::Weight, f.w_fbl1.view().into_dyn()));
            out.push(("feedback.w_gate".into(), TensorKind::Weight, f.w_gate.view().into_dyn()));
        }
        for (l, tr) in self.hrr_traces.iter().enumerate() {
            for (s, t) in tr.iter().enumerate() {
                out.push((format!("hrr.l{}.s{s}", l + 1), TensorKind::State, t.view().into_dyn()));
            }
        }
        out
    }

    /// Mutable views in the same order as [`Model::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<(String, TensorKind, ArrayViewMutD<'_, f64>)> {
        let mut out = Vec::new();
        for (l, layer) in self.hierarchy.layers.iter_mut().enumerate() {
            for (s, w) in layer.weights.iter_mut().enumerate() {
                out.push((format!("hierarchy.l{}.s{s}.w", l + 1), TensorKind::Weight, w.view_mut().into_dyn()));
            }
            out.push((format!("hierarchy.l{}.lateral", l + 1), TensorKind::Weight, layer.lateral.band.view_mut().into_dyn()));
            out.push((format!("hierarchy.l{}.gains", l + 1), TensorKind::State, layer.state.gains.view_mut().into_dyn()));
        }
        for (l, g) in self.gains.iter_mut().enumerate() {
            out.push((format!("rho.l{}.rho", l + 1), TensorKind::State, g.rho.view_mut().into_dyn()));
            out.push((format!("rho.l{}.trace", l + 1), TensorKind::State, g.trace.view_mut().into_dyn()));
        }
        if let Some(sb) = &mut self.side {
            out.push(("side.w_d1".into(), TensorKind::Weight, sb.w_d1.view_mut().into_dyn()));
            out.push(("side.w_d2".into(), TensorKind::Weight, sb.w_d2.view_mut().into_dyn()));
        }
        if let Some(c) = &mut self.cross {
            out.push(("cross.w_x".into(), TensorKind::Weight, c.w_x.view_mut().into_dyn()));
        }
        if let Some(m) = &mut self.memory {
            out.push(("memory.k".into(), TensorKind::Weight, m.k.view_mut().into_dyn()));
            out.push(("memory.v".into(), TensorKind::Weight, m.v.view_mut().into_dyn()));
            out.push(("memory.w_q".into(), TensorKind::Weight, m.w_q.view_mut().into_dyn()));
        }
        if let Some(f) = &mut self.feedback {
            if let Some(w) = &mut f.w_fb1 {
                out.push(("feedback.w_fb1".into(), TensorKind::Weight, w.view_mut().into_dyn()));
            }
            out.push(("feedback.w_fbl1".into(), TensorKind::Weight, f.w_fbl1.view_mut().into_dyn()));
            out.push(("feedback.w_gate".into(), TensorKind::Weight, f.w_gate.view_mut().into_dyn()));
        }
        for (l, tr) in self.hrr_traces.iter_mut().enumerate() {
            for (s, t) in tr.iter_mut().enumerate() {
                out.push((format!("hrr.l{}.s{s}", l + 1), TensorKind::State, t.view_mut().into_dyn()));
            }
        }
        out
    }

    /// Scalar state not held in tensors: per-layer ρ targets (NaN when unset)
    /// and the batch counter.
    pub fn scalars(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.gains.iter().map(|g| g.theta_target.unwrap_or(f64::NAN)).collect();
        v.push(self.batches_seen as f64);
        v
    }

    pub fn set_scalars(&mut self, v: &[f64]) -> Result<()> {
        if v.len() != self.gains.len() + 1 {
            return Err(Error::InvalidInput(format!("expected {} scalars, got {}", self.gains.len() + 1, v.len())));
        }
        for (g, &t) in self.gains.iter_mut().zip(v) {
            g.theta_target = (!t.is_nan()).then_some(t);
        }
        self.batches_seen = v[v.len() - 1] as u64;
        Ok(())
    }

    /// Fingerprint of every representational tensor and scalar.
    pub fn checksum(&self) -> u64 {
        let tensors = self.tensors();
        let scalars = self.scalars();
        crate::util::checksum(tensors.iter().flat_map(|(_, _, t)| t.iter()).chain(scalars.iter()))
    }

    /// Fingerprint of the learned weights only.
    pub fn weight_checksum(&self) -> u64 {
        let tensors = self.tensors();
        crate::util::checksum(
            tensors
                .iter()
                .filter(|(_, k, _)| *k == TensorKind::Weight)
                .flat_map(|(_, _, t)| t.iter()),
        )
    }

    /// Weight group of a tensor name (module plus layer for the hierarchy).
    pub fn group_of(name: &str) -> String {
        let mut parts = name.split('.');
        let first = parts.next().unwrap_or("");
        if first == "hierarchy" {
            format!("hierarchy.{}", parts.next().unwrap_or(""))
        } else {
            first.to_string()
        }
    }

    /// Learned weights grouped by [`Model::group_of`], flattened in order.
    pub fn weight_groups(&self) -> Vec<(String, Vec<f64>)> {
        let mut out: Vec<(String, Vec<f64>)> = Vec::new();
        for (name, kind, t) in self.tensors() {
            if kind != TensorKind::Weight {
                continue;
            }
            let g = Self::group_of(&name);
            match out.last_mut() {
                Some((last, v)) if *last == g => v.extend(t.iter()),
                _ => out.push((g, t.iter().copied().collect())),
            }
        }
        out
    }
}

/// Mean absolute off-diagonal Pearson correlation between the columns of
/// `z` (constant columns are skipped).
pub fn mean_abs_offdiag_corr(z: ArrayView2<'_, f64>) -> f64 {
    let n = z.nrows() as f64;
    if z.nrows() < 2 {
        return 0.0;
    }
    let mean = z.mean_axis(Axis(0)).expect("rows");
    let centred = &z - &mean.insert_axis(Axis(0));
    let cov = centred.t().dot(&centred) / (n - 1.0);
    let d = cov.nrows();
    let sd: Vec<f64> = (0..d).map(|i| cov[[i, i]].sqrt()).collect();
    let live: Vec<usize> = (0..d).filter(|&i| sd[i] > 1e-12).collect();
    let mut acc = 0.0;
    let mut count = 0usize;
    for (a, &i) in live.iter().enumerate() {
        for &j in &live[a + 1..] {
            acc += (cov[[i, j]] / (sd[i] * sd[j])).abs();
            count += 1;
        }
    }
    if count == 0 {
        0.0
    } else {
        acc / count as f64
    }
}
