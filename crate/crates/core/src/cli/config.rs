//! Run configuration: a flat JSON key set, presets, canonical hashing and
//! validation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::engine::{AdamConfig, ExtendedParams, ModelConfig, StreamSelect, TrainConfig};
use crate::error::{Error, Result};
use crate::hierarchy::{HomeostasisParams, LayerParams};
use crate::pathways::{CrossParams, FeedbackParams, GateMode, MemoryParams, SideParams};
use crate::plasticity::RuleCoefficients;

/// Bumped whenever the key set or its meaning changes.
pub const CONFIG_VERSION: u32 = 1;

/// The only memory implementation.
pub const MEMORY_MODE_HOPFIELD: &str = "hopfield";
/// Repository default for the memory mode; recognised but not implemented.
pub const MEMORY_MODE_HEBBIAN_SA: &str = "hebbian_sa";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetKind {
    Cifar10,
    Cifar100,
    /// Class-structured colour gratings in CIFAR-10 layout; for smoke runs.
    Synthetic,
}

/// Named rule / module selections.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RuleSet {
    Cifar10Reduced,
    Cifar10Full,
    Cifar100Reduced,
    Cifar100Full,
    HebbianOnly,
    /// The full set plus the three supplementary rules.
    Extended,
}

impl RuleSet {
    pub const ALL: [RuleSet; 6] = [
        RuleSet::Cifar10Reduced,
        RuleSet::Cifar10Full,
        RuleSet::Cifar100Reduced,
        RuleSet::Cifar100Full,
        RuleSet::HebbianOnly,
        RuleSet::Extended,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RuleSet::Cifar10Reduced => "cifar10-reduced",
            RuleSet::Cifar10Full => "cifar10-full",
            RuleSet::Cifar100Reduced => "cifar100-reduced",
            RuleSet::Cifar100Full => "cifar100-full",
            RuleSet::HebbianOnly => "hebbian-only",
            RuleSet::Extended => "extended",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|r| r.name() == s).ok_or_else(|| {
            let names: Vec<&str> = Self::ALL.iter().map(|r| r.name()).collect();
            Error::Config(format!("unknown rule set `{s}` (expected one of {})", names.join(", ")))
        })
    }

    /// Which rules and modules the set switches on:
    /// `(recursive, memory, feedback, side_branch)`. Hebbian, anti-Hebbian and
    /// free-energy are active in every set except `hebbian-only`.
    pub fn modules(self) -> (bool, bool, bool, bool) {
        match self {
            RuleSet::Cifar10Reduced => (false, true, false, false),
            RuleSet::Cifar10Full => (true, true, true, true),
            RuleSet::Cifar100Reduced => (true, true, true, false),
            RuleSet::Cifar100Full | RuleSet::Extended => (true, true, true, true),
            RuleSet::HebbianOnly => (false, false, false, false),
        }
    }
}

/// A component that an ablation switches off.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Component {
    AntiHebbian,
    FreeEnergy,
    Recursive,
    Memory,
    Feedback,
    SideBranch,
    DivNorm,
    Homeostasis,
    /// Keep the side branch but gate it with `S ≡ 1`.
    UniformGate,
    /// Keep the side branch but gate it with a pixel-shuffled saliency map.
    RandomGate,
}

impl Component {
    pub const ALL: [Component; 10] = [
        Component::AntiHebbian,
        Component::FreeEnergy,
        Component::Recursive,
        Component::Memory,
        Component::Feedback,
        Component::SideBranch,
        Component::DivNorm,
        Component::Homeostasis,
        Component::UniformGate,
        Component::RandomGate,
    ];

    /// The rule and module removals of the component-ablation table.
    pub const TABLE: [Component; 8] = [
        Component::AntiHebbian,
        Component::FreeEnergy,
        Component::Recursive,
        Component::Memory,
        Component::Feedback,
        Component::SideBranch,
        Component::DivNorm,
        Component::Homeostasis,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Component::AntiHebbian => "anti-hebbian",
            Component::FreeEnergy => "free-energy",
            Component::Recursive => "recursive",
            Component::Memory => "memory",
            Component::Feedback => "feedback",
            Component::SideBranch => "side-branch",
            Component::DivNorm => "div-norm",
            Component::Homeostasis => "homeostasis",
            Component::UniformGate => "uniform-gate",
            Component::RandomGate => "random-gate",
        }
    }

    /// Row label in the ablation table.
    pub fn label(self) -> &'static str {
        match self {
            Component::AntiHebbian => "-Anti-Hebbian",
            Component::FreeEnergy => "-Free energy",
            Component::Recursive => "-Recursive",
            Component::Memory => "-Memory",
            Component::Feedback => "-Feedback",
            Component::SideBranch => "-Side branch",
            Component::DivNorm => "-Div. normalisation",
            Component::Homeostasis => "-Homeostasis",
            Component::UniformGate => "Uniform gate",
            Component::RandomGate => "Random gate",
        }
    }

    /// What disabling the component does to the model configuration.
    pub fn mapping(self) -> &'static str {
        match self {
            Component::AntiHebbian => "alpha_a = 0",
            Component::FreeEnergy => "lambda_f = 0",
            Component::Recursive => "alpha_r = 0",
            Component::Memory => "memory bypassed: no retrieval or memory updates, readout h_mem = 0 in pass 2",
            Component::Feedback => "pass 2 runs on unmodulated inputs",
            Component::SideBranch => {
                "side branch and cross-gate removed; representation is 384-dim and the probe is resized"
            }
            Component::DivNorm => "beta_div = 0",
            Component::Homeostasis => "kappa_g = 0",
            Component::UniformGate => "side-branch gate S = 1",
            Component::RandomGate => "side-branch gate = saliency with pixels permuted per seed",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|c| c.name() == s).ok_or_else(|| {
            let names: Vec<&str> = Self::ALL.iter().map(|c| c.name()).collect();
            Error::Config(format!("unknown component `{s}` (expected one of {})", names.join(", ")))
        })
    }

    fn apply(self, m: &mut ModelConfig) {
        match self {
            Component::AntiHebbian => m.rules.alpha_a = 0.0,
            Component::FreeEnergy => m.rules.lambda_f = 0.0,
            Component::Recursive => m.rules.alpha_r = 0.0,
            Component::Memory => m.memory = false,
            Component::Feedback => m.feedback = false,
            Component::SideBranch => m.side_branch = false,
            Component::DivNorm => m.layer.beta_div = 0.0,
            Component::Homeostasis => m.homeostasis.kappa_g = 0.0,
            Component::UniformGate => m.gate = GateMode::Uniform,
            Component::RandomGate => m.gate = GateMode::Random,
        }
    }
}

/// Everything a run depends on. Serialised as one flat JSON object.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub config_version: u32,
    pub memory_mode: String,
    pub batch_size: usize,
    pub epochs: usize,
    pub seeds: Vec<u64>,
    pub stop_gradient: bool,
    pub deterministic: bool,
    pub augmentation: bool,

    pub rule_set: RuleSet,
    pub gate: GateMode,
    /// Components switched off on top of the rule set.
    pub disabled: Vec<Component>,

    // Plasticity rules.
    pub alpha_h: f64,
    pub delta_h: f64,
    pub alpha_a: f64,
    pub lambda_f: f64,
    pub alpha_r: f64,
    pub delta_r: f64,
    // Side branch and cross-gate.
    pub eta_d: f64,
    pub delta_d: f64,
    pub alpha_d: f64,
    pub eta_x: f64,
    pub delta_x: f64,
    // Memory.
    pub eta_k: f64,
    pub delta_k: f64,
    pub eta_v: f64,
    pub delta_v: f64,
    pub eta_q: f64,
    pub delta_q: f64,
    pub beta: f64,
    // Feedback.
    pub eta_fb: f64,
    pub delta_fb: f64,
    // Homeostasis.
    pub eta_g: f64,
    pub kappa_g: f64,
    // Probe.
    pub probe_lr: f64,
    pub probe_weight_decay: f64,
    // Layer dynamics.
    pub alpha_inhib: f64,
    pub alpha_div: f64,
    pub beta_div: f64,
    pub w_g: f64,
    pub w_l: f64,
    pub n_iters: usize,
    pub lateral_radius: usize,
    pub rho_gamma: f64,

    pub dataset: DatasetKind,
    pub data_dir: Option<PathBuf>,
    /// Class-balanced training subset size (whole split when absent).
    pub subset: Option<usize>,
    /// Class-balanced test subset size (whole split when absent).
    pub test_subset: Option<usize>,
    /// Evaluate the epoch-0, fresh-probe, frozen-classifier and NCM controls.
    pub controls: bool,
    /// Bootstrap resamples for confidence intervals.
    pub n_boot: usize,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let rules = RuleCoefficients::default();
        let side = SideParams::default();
        let cross = CrossParams::default();
        let mem = MemoryParams::default();
        let fb = FeedbackParams::default();
        let homeo = HomeostasisParams::default();
        let adam = AdamConfig::default();
        let layer = LayerParams::default();
        Self {
            config_version: CONFIG_VERSION,
            memory_mode: MEMORY_MODE_HEBBIAN_SA.into(),
            batch_size: 16,
            epochs: 100,
            seeds: vec![0],
            stop_gradient: true,
            deterministic: false,
            augmentation: false,
            rule_set: RuleSet::Cifar10Full,
            gate: GateMode::Saliency,
            disabled: Vec::new(),
            alpha_h: rules.alpha_h,
            delta_h: rules.delta_h,
            alpha_a: rules.alpha_a,
            lambda_f: rules.lambda_f,
            alpha_r: rules.alpha_r,
            delta_r: rules.delta_r,
            eta_d: side.eta_d,
            delta_d: side.delta_d,
            alpha_d: side.alpha_d,
            eta_x: cross.eta_x,
            delta_x: cross.delta_x,
            eta_k: mem.eta_k,
            delta_k: mem.delta_k,
            eta_v: mem.eta_v,
            delta_v: mem.delta_v,
            eta_q: mem.eta_q,
            delta_q: mem.delta_q,
            beta: mem.beta,
            eta_fb: fb.eta_fb,
            delta_fb: fb.delta_fb,
            eta_g: homeo.eta_g,
            kappa_g: homeo.kappa_g,
            probe_lr: adam.lr,
            probe_weight_decay: adam.weight_decay,
            alpha_inhib: layer.alpha_inhib,
            alpha_div: layer.alpha_div,
            beta_div: layer.beta_div,
            w_g: layer.w_g,
            w_l: layer.w_l,
            n_iters: layer.n_iters,
            lateral_radius: layer.lateral_radius,
            rho_gamma: ModelConfig::default().rho_gamma,
            dataset: DatasetKind::Cifar10,
            data_dir: None,
            subset: None,
            test_subset: None,
            controls: true,
            n_boot: crate::stats::DEFAULT_N_BOOT,
            out_dir: PathBuf::from("runs"),
        }
    }
}

/// Expands `"3"`, `"0-13"` or `"0,2,5-7"` into a seed list.
pub fn parse_seed_range(s: &str) -> Result<Vec<u64>> {
    let bad = || Error::Config(format!("invalid seed range `{s}`"));
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim) {
        match part.split_once('-') {
            Some((a, b)) => {
                let a: u64 = a.trim().parse().map_err(|_| bad())?;
                let b: u64 = b.trim().parse().map_err(|_| bad())?;
                if b < a {
                    return Err(bad());
                }
                out.extend(a..=b);
            }
            None => out.push(part.parse().map_err(|_| bad())?),
        }
    }
    if out.is_empty() {
        return Err(bad());
    }
    Ok(out)
}

impl RunConfig {
    /// Applies the published experiment overrides.
    pub fn apply_paper_preset(&mut self) {
        self.memory_mode = MEMORY_MODE_HOPFIELD.into();
        self.batch_size = 4;
        self.epochs = 300;
        self.seeds = (0..14).collect();
        self.stop_gradient = true;
        self.deterministic = true;
        self.augmentation = false;
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("config file: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Canonical text: compact JSON with keys sorted, output directory omitted
    /// (it only says where results go, not what they are).
    pub fn canonical_json(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serialises");
        if let serde_json::Value::Object(m) = &mut v {
            m.remove("out_dir");
        }
        // serde_json's default map is ordered by key, so this is canonical.
        serde_json::to_string(&v).expect("value serialises")
    }

    /// SHA-256 of [`RunConfig::canonical_json`], lower-case hex.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_json().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Rejects configurations that cannot or must not run.
    pub fn validate(&self) -> Result<()> {
        if self.config_version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "config_version {} is not supported (expected {CONFIG_VERSION})",
                self.config_version
            )));
        }
        match self.memory_mode.as_str() {
            MEMORY_MODE_HOPFIELD => {}
            MEMORY_MODE_HEBBIAN_SA => return Err(Error::UnsupportedMemoryMode(self.memory_mode.clone())),
            other => return Err(Error::Config(format!("unknown memory mode `{other}`"))),
        }
        if self.augmentation {
            return Err(Error::Config("data augmentation is not supported; set augmentation=false".into()));
        }
        if !self.stop_gradient {
            return Err(Error::Config(
                "stop_gradient=false is unsupported: representational weights never receive label gradients".into(),
            ));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.n_boot == 0 {
            return Err(Error::Config("n_boot must be >= 1".into()));
        }
        for (name, v) in [("subset", self.subset), ("test_subset", self.test_subset)] {
            if v == Some(0) {
                return Err(Error::Config(format!("{name} must be >= 1")));
            }
        }
        if !(self.probe_lr > 0.0 && self.probe_lr.is_finite()) {
            return Err(Error::Config("probe_lr must be positive".into()));
        }
        self.model_config().validate()
    }

    pub fn n_classes(&self) -> usize {
        match self.dataset {
            DatasetKind::Cifar100 => 100,
            _ => 10,
        }
    }

    /// The model configuration this run trains.
    pub fn model_config(&self) -> ModelConfig {
        let (recursive, memory, feedback, side_branch) = self.rule_set.modules();
        let hebbian_only = self.rule_set == RuleSet::HebbianOnly;
        let mut m = ModelConfig {
            streams: if hebbian_only {
                ModelConfig::hebbian_only().streams
            } else {
                StreamSelect::All
            },
            layer: LayerParams {
                alpha_inhib: self.alpha_inhib,
                alpha_div: self.alpha_div,
                beta_div: self.beta_div,
                w_g: self.w_g,
                w_l: self.w_l,
                n_iters: self.n_iters,
                lateral_radius: self.lateral_radius,
            },
            homeostasis: HomeostasisParams { eta_g: self.eta_g, kappa_g: self.kappa_g },
            rules: RuleCoefficients {
                alpha_h: self.alpha_h,
                delta_h: self.delta_h,
                alpha_a: if hebbian_only { 0.0 } else { self.alpha_a },
                lambda_f: if hebbian_only { 0.0 } else { self.lambda_f },
                alpha_r: if recursive { self.alpha_r } else { 0.0 },
                delta_r: self.delta_r,
            },
            side_branch,
            gate: self.gate,
            side: SideParams { eta_d: self.eta_d, delta_d: self.delta_d, alpha_d: self.alpha_d },
            cross: CrossParams { eta_x: self.eta_x, delta_x: self.delta_x },
            memory,
            memory_params: MemoryParams {
                beta: self.beta,
                eta_k: self.eta_k,
                eta_v: self.eta_v,
                eta_q: self.eta_q,
                delta_k: self.delta_k,
                delta_v: self.delta_v,
                delta_q: self.delta_q,
            },
            feedback,
            feedback_params: FeedbackParams { eta_fb: self.eta_fb, delta_fb: self.delta_fb },
            extended: (self.rule_set == RuleSet::Extended).then(ExtendedParams::default),
            rho_gamma: self.rho_gamma,
            ..ModelConfig::default()
        };
        for c in &self.disabled {
            c.apply(&mut m);
        }
        m
    }

    /// Training settings for one seed.
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            epochs: self.epochs,
            seed,
            adam: AdamConfig { lr: self.probe_lr, weight_decay: self.probe_weight_decay, ..AdamConfig::default() },
            audit_each_epoch: true,
            parallel_eval: !self.deterministic,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_ranges() {
        assert_eq!(parse_seed_range("0-13").unwrap().len(), 14);
        assert_eq!(parse_seed_range("4").unwrap(), vec![4]);
        assert_eq!(parse_seed_range("0,2,5-7").unwrap(), vec![0, 2, 5, 6, 7]);
        for bad in ["", "a", "5-2", "1-", ","] {
            assert!(parse_seed_range(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn hash_is_canonical_and_ignores_out_dir() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.out_dir = PathBuf::from("/elsewhere");
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
        b.epochs = 7;
        assert_ne!(a.hash(), b.hash());
        // Key order in the input text does not matter.
        let text = serde_json::to_string(&a).unwrap();
        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        let reparsed: RunConfig = serde_json::from_value(v.take()).unwrap();
        assert_eq!(reparsed.hash(), a.hash());
        assert!(a.canonical_json().starts_with("{\"alpha_a\":"));
    }

    #[test]
    fn file_round_trip_and_unknown_keys() {
        let mut c = RunConfig::default();
        c.apply_paper_preset();
        let text = serde_json::to_string_pretty(&c).unwrap();
        assert_eq!(RunConfig::from_json(&text).unwrap(), c);
        assert!(matches!(RunConfig::from_json("{\"alpha_hh\": 1.0}"), Err(Error::Config(_))));
        let partial = RunConfig::from_json("{\"epochs\": 5}").unwrap();
        assert_eq!(partial.epochs, 5);
        assert_eq!(partial.batch_size, 16);
    }

    #[test]
    fn validation_errors_map_to_config_exit() {
        let mut c = RunConfig::default();
        assert!(matches!(c.validate(), Err(Error::UnsupportedMemoryMode(_))));
        c.memory_mode = MEMORY_MODE_HOPFIELD.into();
        c.validate().unwrap();
        for mutate in [
            (|c: &mut RunConfig| c.augmentation = true) as fn(&mut RunConfig),
            |c| c.stop_gradient = false,
            |c| c.batch_size = 0,
            |c| c.seeds.clear(),
            |c| c.memory_mode = "lstm".into(),
            |c| c.alpha_div = 0.0,
        ] {
            let mut bad = c.clone();
            mutate(&mut bad);
            assert_eq!(bad.validate().unwrap_err().exit_code(), 2);
        }
    }

    #[test]
    fn rule_sets_switch_modules() {
        let mut c = RunConfig::default();
        c.rule_set = RuleSet::Cifar10Reduced;
        let m = c.model_config();
        assert!(m.memory && !m.feedback && !m.side_branch);
        assert_eq!(m.rules.alpha_r, 0.0);
        assert!(m.rules.alpha_a > 0.0 && m.rules.lambda_f > 0.0);
        c.rule_set = RuleSet::HebbianOnly;
        assert_eq!(c.model_config(), ModelConfig { gate: c.gate, ..ModelConfig::hebbian_only() });
        c.rule_set = RuleSet::Cifar10Full;
        assert_eq!(c.model_config(), ModelConfig::default());
        for r in RuleSet::ALL {
            assert_eq!(RuleSet::parse(r.name()).unwrap(), r);
        }
    }

    #[test]
    fn ablation_mappings() {
        let base = RunConfig::default();
        let full = base.model_config();
        for c in Component::ALL {
            assert_eq!(Component::parse(c.name()).unwrap(), c);
            let cfg = RunConfig { disabled: vec![c], ..base.clone() };
            let m = cfg.model_config();
            assert_ne!(m, full, "{c:?} changed nothing");
            assert_eq!(base.model_config(), full, "base mutated");
        }
        let m = RunConfig { disabled: vec![Component::SideBranch], ..base.clone() }.model_config();
        assert_eq!(m.representation_dim(), 384);
        assert_eq!(full.representation_dim(), 512);
        let m = RunConfig { disabled: vec![Component::DivNorm, Component::Homeostasis], ..base }.model_config();
        assert_eq!((m.layer.beta_div, m.homeostasis.kappa_g), (0.0, 0.0));
    }
}
