//! One check per acceptance criterion. Each returns a verdict plus a short
//! human-readable detail line; the acceptance target prints them and the
//! regular integration tests assert on the cheap ones.

use std::path::{Path, PathBuf};
use std::process::Command;

use clap::Parser;
use ndarray::{Array1, Array2, Array3, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::distribution::{Binomial, DiscreteCDF};

use visnet_plastic::cli::{
    curve_csv, parse_config, run, Args, DatasetKind, Experiment, RuleSet, RunConfig, RunOutput,
    MEMORY_MODE_HEBBIAN_SA, MEMORY_MODE_HOPFIELD,
};
use visnet_plastic::data::{
    cifar_present, default_cifar10_dir, encode_records, load_file, load_records_file, synthetic_cifar10,
    CifarVariant, Dataset, PIXEL_BYTES,
};
use visnet_plastic::engine::{
    encode_checkpoint, extract_features, run_seed, stop_gradient_audit, Controls, FeatureSet, LinearProbe,
    Model, ModelConfig, StopGradient, StreamSelect, MEMORY_DIM,
};
use visnet_plastic::frontend::{
    haar_features, opponent_transform, ColourTransform, FrontEnd, FrontEndConfig, RgbImage, GABOR_EPSILON,
};
use visnet_plastic::pathways::{hopfield_retrieve, MemoryState, MEMORY_SLOTS};
use visnet_plastic::plasticity::{RuleCoefficients, RHO_RANGE};
use visnet_plastic::stats::{
    bca_ci, holm_correct, interaction_strength, mean, paired_t, power_paired_t, BOOTSTRAP_SEED, DEFAULT_N_BOOT,
};

use super::{decorrelation_toy, synthetic_config};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    Blocked,
}

#[derive(Clone, Debug)]
pub struct Outcome {
    pub verdict: Verdict,
    pub detail: String,
}

impl Outcome {
    fn from_checks(checks: &[(bool, String)]) -> Self {
        let failed: Vec<&str> = checks.iter().filter(|(ok, _)| !ok).map(|(_, s)| s.as_str()).collect();
        let all: Vec<&str> = checks.iter().map(|(_, s)| s.as_str()).collect();
        if failed.is_empty() {
            Outcome { verdict: Verdict::Pass, detail: all.join("; ") }
        } else {
            Outcome { verdict: Verdict::Fail, detail: format!("failed: {}", failed.join("; ")) }
        }
    }

    fn blocked(why: impl Into<String>) -> Self {
        Outcome { verdict: Verdict::Blocked, detail: why.into() }
    }

    fn error(e: impl std::fmt::Display) -> Self {
        Outcome { verdict: Verdict::Fail, detail: format!("error: {e}") }
    }
}

/// Path of the command-line binary built alongside the tests.
pub fn binary() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_visnet"))
}

/// Front-end features of a deterministic synthetic split.
pub fn synthetic_features(n_train: usize, n_test: usize, select: StreamSelect) -> (FeatureSet, FeatureSet) {
    let all = synthetic_cifar10(n_train + n_test, 0x5EED);
    let tr: Vec<usize> = (0..n_train).collect();
    let te: Vec<usize> = (n_train..n_train + n_test).collect();
    let front = FrontEnd::new(FrontEndConfig::default(), 32, 32).unwrap();
    (
        extract_features(&front, &all.select(&tr), select).unwrap(),
        extract_features(&front, &all.select(&te), select).unwrap(),
    )
}

fn random_indices(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<usize> {
    (0..k).map(|_| rng.random_range(0..n)).collect()
}

// ---------------------------------------------------------------------------
// 1. Gradient isolation

pub const AUDIT_BATCHES: usize = 100;

pub fn gradient_isolation(batches: usize) -> Outcome {
    let (train, _) = synthetic_features(64, 4, StreamSelect::All);
    let mut model = Model::new(ModelConfig::default(), 11).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0xA0D1);
    // A few plastic steps so the audit sees non-initial weights.
    for _ in 0..4 {
        model.train_step(&train.batch(&random_indices(&mut rng, train.len(), 4))).unwrap();
    }
    let probe = LinearProbe::new(10, model.representation_dim(), &mut rng);
    let mut worst_repr: f64 = 0.0;
    let mut min_probe = f64::INFINITY;
    let mut groups = 0;
    for b in 0..batches {
        let batch = train.batch(&random_indices(&mut rng, train.len(), 4));
        match stop_gradient_audit(&model, &probe, &batch, &StopGradient, b as u64) {
            Ok(r) => {
                let g = r.group_gradients.iter().map(|(_, v)| *v).fold(0.0, f64::max);
                worst_repr = worst_repr.max(r.repr_grad_norm).max(g);
                min_probe = min_probe.min(r.probe_grad_norm);
                groups = r.group_gradients.len();
            }
            Err(e) => return Outcome::error(format!("batch {b}: {e}")),
        }
    }
    let dir = tempfile::tempdir().unwrap();
    let status = Command::new(binary())
        .args([
            "--dataset", "synthetic", "--subset", "16", "--test-subset", "8", "--epochs", "1",
            "--memory-mode", "hopfield", "--batch-size", "4", "--no-controls", "--quiet",
            "--leaky-barrier-fixture", "--out-dir",
        ])
        .arg(dir.path())
        .output()
        .unwrap()
        .status;
    Outcome::from_checks(&[
        (worst_repr == 0.0, format!("max |grad| over {batches} batches x {groups} groups = {worst_repr:e}")),
        (min_probe > 0.0, format!("probe gradient live (min norm {min_probe:.3e})")),
        (status.code() == Some(4), format!("leaky fixture exit code {:?}", status.code())),
    ])
}

// ---------------------------------------------------------------------------
// 2. Probe gradient correctness

pub fn probe_gradients(batches: usize) -> Outcome {
    let (classes, dim, n, h) = (10, 48, 16, 1e-5);
    let mut rng = ChaCha8Rng::seed_from_u64(0x9AD);
    let mut worst: f64 = 0.0;
    for _ in 0..batches {
        let z = Array2::from_shape_simple_fn((n, dim), || rng.random_range(-1.0..1.0));
        let labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..classes as u8)).collect();
        let w = Array2::from_shape_simple_fn((classes, dim), || rng.random_range(-0.5..0.5));
        let b = Array1::from_shape_simple_fn(classes, || rng.random_range(-0.5..0.5));
        let mut probe = LinearProbe::from_params(w, b);
        // Non-trivial input statistics, so the standardised path is exercised.
        probe.update_input_stats((&z * 2.0 + 0.5).view());
        let g = probe.gradients(z.view(), &labels).unwrap();
        let (mut num, mut den_a, mut den_n) = (0.0, 0.0, 0.0);
        let mut acc = |analytic: f64, fd: f64| {
            num += (analytic - fd) * (analytic - fd);
            den_a += analytic * analytic;
            den_n += fd * fd;
        };
        let loss_with = |edit: &dyn Fn(&mut LinearProbe)| {
            let mut p = probe.clone();
            edit(&mut p);
            p.loss(z.view(), &labels)
        };
        for r in 0..classes {
            for c in 0..dim {
                let fd = (loss_with(&|p| p.w[[r, c]] += h) - loss_with(&|p| p.w[[r, c]] -= h)) / (2.0 * h);
                acc(g.grad_w[[r, c]], fd);
            }
        }
        for k in 0..classes {
            let fd = (loss_with(&|p| p.b[k] += h) - loss_with(&|p| p.b[k] -= h)) / (2.0 * h);
            acc(g.grad_b[k], fd);
        }
        worst = worst.max(num.sqrt() / den_a.sqrt().max(den_n.sqrt()).max(1e-300));
    }
    Outcome::from_checks(&[(worst < 1e-5, format!("max relative error over {batches} batches = {worst:.2e}"))])
}

// ---------------------------------------------------------------------------
// 3. Label firewall

pub fn label_firewall(epochs: usize) -> Outcome {
    let cfg = synthetic_config(48, 24, epochs, vec![3]);
    let (train, test) = synthetic_features(48, 24, StreamSelect::All);
    let zeroed_train = train.with_zeroed_labels();
    let zeroed_test = test.with_zeroed_labels();
    let tc = cfg.train_config(3);
    let mc = cfg.model_config();
    let mut a_trace = Vec::new();
    let mut b_trace = Vec::new();
    let a = run_seed(&mc, &train, &test, &tc, Controls::none(), &StopGradient, &mut |m| a_trace.push(m.checksum));
    let b = run_seed(&mc, &zeroed_train, &zeroed_test, &tc, Controls::none(), &StopGradient, &mut |m| {
        b_trace.push(m.checksum)
    });
    let (a, b) = match (a, b) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return Outcome::error(e),
    };
    let tensors_equal = a
        .model
        .tensors()
        .iter()
        .zip(b.model.tensors().iter())
        .all(|(x, y)| x.0 == y.0 && x.2.iter().zip(y.2.iter()).all(|(p, q)| p.to_bits() == q.to_bits()));
    Outcome::from_checks(&[
        (a_trace == b_trace && a_trace.len() == epochs, format!("{epochs} per-epoch checksums identical")),
        (tensors_equal, "final tensors bit-identical".into()),
        (a.probe.w != b.probe.w, "probe weights differ (labels do reach the probe)".into()),
    ])
}

// ---------------------------------------------------------------------------
// 4. Determinism

fn one_run(cfg: &RunConfig) -> visnet_plastic::Result<RunOutput> {
    let mut exp = Experiment::new(cfg)?;
    run(&mut exp, cfg, "determinism", &StopGradient, &mut |_| {})
}

pub fn determinism(epochs: usize) -> Outcome {
    let mut cfg = synthetic_config(40, 20, epochs, vec![0, 1]);
    cfg.n_boot = 500;
    let (a, b) = match (one_run(&cfg), one_run(&cfg)) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return Outcome::error(e),
    };
    let hash = cfg.hash();
    let ckpt = |o: &RunOutput| -> Vec<Vec<u8>> {
        o.outcomes.iter().map(|s| encode_checkpoint(&s.model, Some(&s.probe), &hash)).collect()
    };
    let json = |o: &RunOutput| serde_json::to_string(&o.report).unwrap();
    Outcome::from_checks(&[
        (ckpt(&a) == ckpt(&b), format!("{} final checkpoints byte-identical", a.outcomes.len())),
        (curve_csv(&a.report) == curve_csv(&b.report), "metric CSV identical".into()),
        (json(&a) == json(&b), "JSON report identical".into()),
    ])
}

// ---------------------------------------------------------------------------
// 5. Front-end invariants

fn random_image(rng: &mut ChaCha8Rng, hi: f64) -> Array3<f64> {
    Array3::from_shape_simple_fn((32, 32, 3), || rng.random_range(0.0..hi))
}

pub fn frontend_invariants() -> Outcome {
    let front = FrontEnd::new(FrontEndConfig::default(), 32, 32).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0xF00D);

    let mut gabor_dev: f64 = 0.0;
    let mut haar_max: f64 = 0.0;
    for c in [0.0, 0.25, 0.6, 1.0] {
        let out = front.process(&RgbImage::new(Array3::from_elem((32, 32, 3), c)).unwrap()).unwrap();
        gabor_dev = out.streams.energies.iter().map(|e| (e - GABOR_EPSILON).abs()).fold(gabor_dev, f64::max);
        let coeffs = &out.haar.coeffs;
        for ch in 0..coeffs.dim().2 {
            if ch % 4 != 0 {
                haar_max = coeffs.index_axis(Axis(2), ch).iter().map(|v| v.abs()).fold(haar_max, f64::max);
            }
        }
    }
    // Per-channel constants (a uniformly coloured image) as well.
    let mut px = Array3::zeros((32, 32, 3));
    for (c, v) in [0.2, 0.7, 0.45].into_iter().enumerate() {
        px.index_axis_mut(Axis(2), c).fill(v);
    }
    let opp = opponent_transform(&RgbImage::new(px).unwrap(), &ColourTransform::hunt_pointer_estevez()).unwrap();
    let haar = haar_features(&opp).unwrap();
    for ch in (0..haar.coeffs.dim().2).filter(|c| c % 4 != 0) {
        haar_max = haar.coeffs.index_axis(Axis(2), ch).iter().map(|v| v.abs()).fold(haar_max, f64::max);
    }

    let id = ColourTransform::identity();
    let mut lin_err: f64 = 0.0;
    for _ in 0..10 {
        let (x1, x2) = (random_image(&mut rng, 0.4), random_image(&mut rng, 0.4));
        let (a, b) = (rng.random_range(0.0..1.0), rng.random_range(0.0..1.25));
        let mixed = RgbImage::new(&x1 * a + &x2 * b).unwrap();
        let o1 = opponent_transform(&RgbImage::new(x1).unwrap(), &id).unwrap().channels;
        let o2 = opponent_transform(&RgbImage::new(x2).unwrap(), &id).unwrap().channels;
        let om = opponent_transform(&mixed, &id).unwrap().channels;
        let want = o1 * a + o2 * b;
        lin_err = om.iter().zip(want.iter()).map(|(p, q)| (p - q).abs()).fold(lin_err, f64::max);
    }

    let (mut s_min, mut s_max) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut images: Vec<Array3<f64>> = (0..8).map(|_| random_image(&mut rng, 1.0)).collect();
    images.push(Array3::zeros((32, 32, 3)));
    images.push(Array3::ones((32, 32, 3)));
    images.push(Array3::from_shape_fn((32, 32, 3), |(y, x, _)| ((x + y) % 2) as f64));
    for img in images {
        let s = front.process(&RgbImage::new(img).unwrap()).unwrap().saliency.values;
        s_min = s.iter().copied().fold(s_min, f64::min);
        s_max = s.iter().copied().fold(s_max, f64::max);
    }
    Outcome::from_checks(&[
        (gabor_dev <= 1e-6, format!("constant-image Gabor energy within {gabor_dev:.1e} of epsilon")),
        (haar_max == 0.0, format!("max |Haar detail| of constants = {haar_max:e}")),
        (lin_err <= 1e-9, format!("opponent linearity error {lin_err:.1e}")),
        (s_min > 0.0 && s_max < 1.0, format!("saliency range [{s_min:.4}, {s_max:.4}]")),
    ])
}

// ---------------------------------------------------------------------------
// 6. Hopfield suite

/// `n` orthonormal rows in `dim` dimensions (Gram–Schmidt on Gaussian rows).
pub fn orthonormal_rows(n: usize, dim: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let mut out = Array2::<f64>::zeros((n, dim));
    for i in 0..n {
        let mut v: Array1<f64> = Array1::from_shape_simple_fn(dim, || StandardNormal.sample(rng));
        for j in 0..i {
            let u = out.row(j);
            let p = v.dot(&u);
            v.scaled_add(-p, &u);
        }
        let norm = v.dot(&v).sqrt();
        out.row_mut(i).assign(&(v / norm));
    }
    out
}

fn cosine(a: ndarray::ArrayView1<'_, f64>, b: ndarray::ArrayView1<'_, f64>) -> f64 {
    a.dot(&b) / (a.dot(&a).sqrt() * b.dot(&b).sqrt())
}

/// Stores `patterns` orthonormal patterns as keys and values, queries each
/// with 10% additive noise at β = 50 and returns the worst cosine.
pub fn pattern_completion(patterns: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = orthonormal_rows(patterns, MEMORY_DIM, &mut rng);
    let mem = MemoryState { k: p.clone(), v: p.clone(), w_q: Array2::zeros((MEMORY_DIM, 1)) };
    let noise: Array2<f64> = Array2::from_shape_simple_fn((patterns, MEMORY_DIM), || StandardNormal.sample(&mut rng));
    let mut q = p.clone();
    for (mut row, n) in q.axis_iter_mut(Axis(0)).zip(noise.axis_iter(Axis(0))) {
        let scale = 0.1 / n.dot(&n).sqrt();
        row.scaled_add(scale, &n);
    }
    let (_, h) = hopfield_retrieve(q.view(), &mem, 50.0).unwrap();
    (0..patterns).map(|i| cosine(h.row(i), p.row(i))).fold(f64::INFINITY, f64::min)
}

pub fn hopfield_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x40F);
    let mem = MemoryState::new(MEMORY_SLOTS, MEMORY_DIM, MEMORY_DIM, 8, &mut rng);
    let q = Array2::from_shape_simple_fn((32, MEMORY_DIM), || rng.random_range(-1.0..1.0));
    let mut sum_err: f64 = 0.0;
    let mut monotone = true;
    let mut prev_max = vec![0.0; q.nrows()];
    for beta in (0..=100).map(f64::from) {
        let (a, _) = hopfield_retrieve(q.view(), &mem, beta).unwrap();
        for (i, row) in a.axis_iter(Axis(0)).enumerate() {
            sum_err = sum_err.max((row.sum() - 1.0).abs());
            let m = row.iter().copied().fold(0.0, f64::max);
            monotone &= m >= prev_max[i] - 1e-15;
            prev_max[i] = m;
        }
    }
    let (a0, _) = hopfield_retrieve(q.view(), &mem, 0.0).unwrap();
    let uniform_err = a0.iter().map(|v| (v - 1.0 / MEMORY_SLOTS as f64).abs()).fold(0.0, f64::max);
    let worst_cos = pattern_completion(MEMORY_SLOTS, 0xC0DE);
    Outcome::from_checks(&[
        (sum_err <= 1e-9, format!("max |sum(a) - 1| = {sum_err:.1e} over beta 0..100")),
        (uniform_err <= 1e-12, format!("beta=0 max deviation from 1/{MEMORY_SLOTS} = {uniform_err:.1e}")),
        (monotone, "max attention non-decreasing in beta".into()),
        (worst_cos >= 0.99, format!("{MEMORY_SLOTS}-pattern completion worst cosine {worst_cos:.5}")),
    ])
}

// ---------------------------------------------------------------------------
// 7. Decorrelation

pub const DECORRELATION_SEED: u64 = 7;

pub fn decorrelation() -> Outcome {
    let off = decorrelation_toy(0.0, DECORRELATION_SEED);
    let on = decorrelation_toy(RuleCoefficients::default().alpha_a, DECORRELATION_SEED);
    Outcome::from_checks(&[(
        on < off,
        format!("mean |offdiag corr| {off:.4} (alpha_A = 0) -> {on:.4} (alpha_A > 0), seed {DECORRELATION_SEED}"),
    )])
}

// ---------------------------------------------------------------------------
// 8–11. Desk-scale CIFAR-10 runs

pub struct DeskScale {
    pub train: usize,
    pub test: usize,
    pub epochs: usize,
    pub seeds: Vec<u64>,
}

impl Default for DeskScale {
    fn default() -> Self {
        Self { train: 5000, test: 1000, epochs: 30, seeds: vec![0, 1, 2] }
    }
}

fn desk_config(dir: &Path, scale: &DeskScale, rule_set: RuleSet) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.apply_paper_preset();
    cfg.dataset = DatasetKind::Cifar10;
    cfg.data_dir = Some(dir.to_path_buf());
    cfg.subset = Some(scale.train);
    cfg.test_subset = Some(scale.test);
    cfg.epochs = scale.epochs;
    cfg.seeds = scale.seeds.clone();
    cfg.rule_set = rule_set;
    cfg
}

/// Exact two-sided binomial interval of the success count at `level`.
pub fn binomial_interval(n: u64, p: f64, level: f64) -> (u64, u64) {
    let d = Binomial::new(p, n).unwrap();
    let tail = (1.0 - level) / 2.0;
    (d.inverse_cdf(tail), d.inverse_cdf(1.0 - tail))
}

/// Runs the full and Hebbian-only configurations and evaluates criteria
/// 8–11; all four are blocked when the CIFAR-10 files are absent.
pub fn desk_scale_suite(scale: &DeskScale) -> [Outcome; 4] {
    let dir = default_cifar10_dir();
    if !cifar_present(&dir, CifarVariant::Cifar10) {
        let why = format!("CIFAR-10 binary files not found in {} (set CIFAR10_DIR)", dir.display());
        return std::array::from_fn(|_| Outcome::blocked(why.clone()));
    }
    let log = |line: &str| eprintln!("  {line}");
    let full_cfg = desk_config(&dir, scale, RuleSet::Cifar10Full);
    let mut hebb_cfg = desk_config(&dir, scale, RuleSet::HebbianOnly);
    hebb_cfg.controls = false;
    let result = Experiment::new(&full_cfg).and_then(|mut exp| {
        let full = run(&mut exp, &full_cfg, "full", &StopGradient, &mut |l| log(l))?;
        let hebb = run(&mut exp, &hebb_cfg, "hebbian-only", &StopGradient, &mut |l| log(l))?;
        Ok((full, hebb))
    });
    let (full, hebb) = match result {
        Ok(r) => r,
        Err(e) => return std::array::from_fn(|_| Outcome::error(&e)),
    };
    let pick = |o: &RunOutput, f: fn(&visnet_plastic::engine::SeedOutcome) -> f64| -> Vec<f64> {
        o.outcomes.iter().map(f).collect()
    };
    let full_acc = pick(&full, |s| s.final_acc);
    let hebb_acc = pick(&hebb, |s| s.final_acc);
    let epoch0 = pick(&full, |s| s.epoch0_acc);
    let chance = vec![0.1; epoch0.len()];
    let gap = |a: &[f64], b: &[f64], what: &str| -> (bool, String) {
        let (t, p) = paired_t(a, b).unwrap_or((f64::NAN, 1.0));
        (
            mean(a) > mean(b) && t > 0.0 && p < 0.05,
            format!("{what}: {:.4} vs {:.4} (t = {t:.2}, p = {p:.3})", mean(a), mean(b)),
        )
    };
    let c8 = Outcome::from_checks(&[
        gap(&full_acc, &hebb_acc, "full > hebbian-only"),
        gap(&hebb_acc, &epoch0, "hebbian-only > epoch-0"),
        gap(&epoch0, &chance, "epoch-0 > chance"),
    ]);

    let fresh = pick(&full, |s| s.fresh_probe_acc);
    let fresh_gap = (mean(&fresh) - mean(&full_acc)).abs() * 100.0;
    let c9 = Outcome::from_checks(&[(
        fresh_gap <= 2.0,
        format!("fresh {:.4} vs co-trained {:.4}: {fresh_gap:.2} pp", mean(&fresh), mean(&full_acc)),
    )]);

    let n_test = full.report.n_test as u64;
    let (lo, hi) = binomial_interval(n_test, 0.1, 0.99);
    let frozen = pick(&full, |s| s.frozen_classifier_acc);
    let c10 = Outcome::from_checks(
        &frozen
            .iter()
            .zip(&scale.seeds)
            .map(|(&a, seed)| {
                let k = (a * n_test as f64).round() as u64;
                (lo <= k && k <= hi, format!("seed {seed}: {k}/{n_test} correct, 99% interval [{lo}, {hi}]"))
            })
            .collect::<Vec<_>>(),
    );

    let ncm = pick(&full, |s| s.ncm_acc);
    let ncm_gap = (mean(&ncm) - mean(&full_acc)).abs() * 100.0;
    let c11 = Outcome::from_checks(&[(
        ncm_gap <= 5.0,
        format!("NCM {:.4} vs probe {:.4}: {ncm_gap:.2} pp", mean(&ncm), mean(&full_acc)),
    )]);
    [c8, c9, c10, c11]
}

// ---------------------------------------------------------------------------
// 12. Statistics oracles

/// Adjusted p-values by brute force: for every candidate level, run the
/// step-down rejection procedure; a hypothesis's adjusted p-value is the
/// smallest candidate level at which it is rejected.
pub fn holm_brute_force(p: &[f64]) -> Vec<f64> {
    let m = p.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p[a].total_cmp(&p[b]));
    let mut candidates: Vec<f64> = order.iter().enumerate().map(|(k, &i)| ((m - k) as f64 * p[i]).min(1.0)).collect();
    candidates.push(1.0);
    candidates.sort_by(f64::total_cmp);
    let rejected_at = |level: f64| -> Vec<bool> {
        let mut rej = vec![false; m];
        for (k, &i) in order.iter().enumerate() {
            if ((m - k) as f64 * p[i]).min(1.0) <= level {
                rej[i] = true;
            } else {
                break;
            }
        }
        rej
    };
    let mut adj = vec![1.0; m];
    for &c in candidates.iter().rev() {
        for (i, r) in rejected_at(c).into_iter().enumerate() {
            if r {
                adj[i] = c;
            }
        }
    }
    adj
}

pub fn holm_check(vectors: usize) -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(0x401);
    let mut mismatches = 0;
    for v in 0..vectors {
        let m = rng.random_range(1..=12);
        let mut p: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..1.0) * rng.random_range(0.0..1.0)).collect();
        if v % 5 == 0 && m > 1 {
            p[1] = p[0];
        }
        if holm_correct(&p) != holm_brute_force(&p) {
            mismatches += 1;
        }
    }
    (mismatches == 0, format!("Holm vs brute force: {mismatches}/{vectors} mismatches"))
}

pub const BCA_REPLICATIONS: usize = 1000;
pub const BCA_SAMPLE: usize = 14;
pub const BCA_SEED: u64 = 0xBCA;

/// Fraction of replications whose 95% BCa interval covers the true mean.
pub fn bca_coverage(replications: usize, n: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mu, sigma) = (2.0, 1.5);
    let mut hits = 0;
    for r in 0..replications {
        let x: Vec<f64> = (0..n).map(|_| {
            let e: f64 = StandardNormal.sample(&mut rng);
            mu + sigma * e
        }).collect();
        let (lo, hi) = bca_ci(&x, 0.95, DEFAULT_N_BOOT, BOOTSTRAP_SEED + r as u64).unwrap();
        if lo <= mu && mu <= hi {
            hits += 1;
        }
    }
    hits as f64 / replications as f64
}

/// Published pairwise-interaction rows: (Δ_A, Δ_B, Δ_AB, I).
pub const INTERACTION_ROWS: [(f64, f64, f64, f64); 5] = [
    (-5.5, -3.2, -7.0, 1.7),
    (-5.5, -2.7, -6.8, 1.4),
    (-4.2, -3.2, -6.1, 1.3),
    (-5.5, -4.2, -8.5, 1.2),
    (-3.2, -2.2, -4.5, 0.9),
];

/// Published sample-size rows: (d, n for power 0.80, n for power 0.95).
pub const POWER_ROWS: [(f64, usize, usize); 9] = [
    (7.1, 3, 4),
    (5.2, 4, 6),
    (4.1, 5, 8),
    (3.4, 6, 10),
    (3.2, 8, 12),
    (2.3, 14, 20),
    (2.0, 14, 24),
    (1.6, 22, 38),
    (1.7, 20, 34),
];

pub fn interaction_check() -> (bool, String) {
    let bad: Vec<String> = INTERACTION_ROWS
        .iter()
        .filter(|(a, b, ab, want)| (interaction_strength(*a, *b, *ab) * 10.0).round() != want * 10.0)
        .map(|r| format!("{r:?}"))
        .collect();
    (bad.is_empty(), format!("interaction rows reproduced: {}/5 {}", 5 - bad.len(), bad.join(" ")))
}

/// The published sample sizes must reach their target power (to within
/// 0.02) under the exact noncentral-t power of a two-sided paired test.
pub fn power_check() -> (bool, String) {
    let mut bad = Vec::new();
    for (d, n80, n95) in POWER_ROWS {
        let p80 = power_paired_t(d, n80, 0.05).unwrap();
        let p95 = power_paired_t(d, n95, 0.05).unwrap();
        if p80 < 0.80 - 0.02 || p95 < 0.95 - 0.02 {
            bad.push(format!("d={d}: power({n80})={p80:.3}, power({n95})={p95:.3}"));
        }
    }
    (bad.is_empty(), format!("power rows consistent: {}/{} {}", POWER_ROWS.len() - bad.len(), POWER_ROWS.len(), bad.join(" ")))
}

pub fn statistics_oracles() -> Outcome {
    let cov = bca_coverage(BCA_REPLICATIONS, BCA_SAMPLE, BCA_SEED);
    // Context only: the verdict uses the fixed seed above, but coverage sits
    // near the lower edge of the band, so show how it moves with the seed.
    let spread: Vec<f64> = (0..4).map(|s| bca_coverage(BCA_REPLICATIONS, BCA_SAMPLE, s)).collect();
    let (lo, hi) = spread.iter().fold((1.0f64, 0.0f64), |(a, b), &c| (a.min(c), b.max(c)));
    Outcome::from_checks(&[
        holm_check(1000),
        (
            (0.92..=0.97).contains(&cov),
            format!(
                "BCa coverage {cov:.3} (n = {BCA_SAMPLE}, {BCA_REPLICATIONS} reps; other seeds {lo:.3}-{hi:.3}, mean {:.3})",
                mean(&spread)
            ),
        ),
        interaction_check(),
        power_check(),
    ])
}

// ---------------------------------------------------------------------------
// 13. Config fidelity

/// Every published per-rule hyperparameter next to the shipped default.
pub fn table_defaults(cfg: &RunConfig) -> Vec<(&'static str, f64, f64)> {
    vec![
        ("alpha_h", cfg.alpha_h, 5e-3),
        ("delta_h", cfg.delta_h, 1e-4),
        ("alpha_a", cfg.alpha_a, 2e-3),
        ("lambda_f", cfg.lambda_f, 3e-3),
        ("alpha_r", cfg.alpha_r, 1e-3),
        ("delta_r", cfg.delta_r, 1e-4),
        ("eta_d", cfg.eta_d, 2e-3),
        ("delta_d", cfg.delta_d, 1e-4),
        ("alpha_d", cfg.alpha_d, 5e-4),
        ("eta_x", cfg.eta_x, 1e-3),
        ("delta_x", cfg.delta_x, 1e-4),
        ("eta_k", cfg.eta_k, 1e-3),
        ("delta_k", cfg.delta_k, 5e-4),
        ("eta_v", cfg.eta_v, 1e-3),
        ("delta_v", cfg.delta_v, 5e-4),
        ("eta_q", cfg.eta_q, 1e-3),
        ("delta_q", cfg.delta_q, 1e-4),
        ("eta_fb", cfg.eta_fb, 5e-4),
        ("delta_fb", cfg.delta_fb, 1e-4),
        ("eta_g", cfg.eta_g, 0.01),
        ("kappa_g", cfg.kappa_g, 0.1),
        ("beta", cfg.beta, 0.5),
        ("rho_min", RHO_RANGE.0, 0.5),
        ("rho_max", RHO_RANGE.1, 1.5),
        ("probe_lr", cfg.probe_lr, 3e-4),
        ("probe_weight_decay", cfg.probe_weight_decay, 1e-4),
    ]
}

pub fn config_fidelity() -> Outcome {
    let defaults = RunConfig::default();
    let golden = table_defaults(&defaults);
    let wrong: Vec<String> =
        golden.iter().filter(|(_, got, want)| got != want).map(|(n, g, w)| format!("{n}={g} (want {w})")).collect();
    let m = defaults.model_config();
    let t = defaults.train_config(0);
    let propagated = m.rules.alpha_h == 5e-3
        && m.rules.alpha_a == 2e-3
        && m.memory_params.beta == 0.5
        && m.homeostasis.kappa_g == 0.1
        && m.feedback_params.eta_fb == 5e-4
        && t.adam.lr == 3e-4
        && t.adam.weight_decay == 1e-4;
    let base_ok = defaults.memory_mode == MEMORY_MODE_HEBBIAN_SA
        && defaults.batch_size == 16
        && defaults.epochs == 100
        && defaults.seeds == vec![0]
        && defaults.stop_gradient
        && !defaults.deterministic
        && !defaults.augmentation;
    let preset = Args::try_parse_from(["visnet", "--paper-preset"]).map_err(|e| e.to_string()).and_then(|a| {
        parse_config(&a).map_err(|e| e.to_string())
    });
    let preset_ok = match &preset {
        Ok(p) => {
            p.memory_mode == MEMORY_MODE_HOPFIELD
                && p.batch_size == 4
                && p.epochs == 300
                && p.seeds == (0..14).collect::<Vec<u64>>()
                && p.stop_gradient
                && p.deterministic
                && !p.augmentation
                && p.validate().is_ok()
        }
        Err(_) => false,
    };
    Outcome::from_checks(&[
        (wrong.is_empty(), format!("{}/{} rule hyperparameters match {}", golden.len() - wrong.len(), golden.len(), wrong.join(" "))),
        (propagated, "defaults reach the model and probe".into()),
        (base_ok, "pre-override defaults (hebbian_sa, B=16, 100 epochs, seed 0, stop-gradient on)".into()),
        (preset_ok, "--paper-preset gives hopfield, B=4, 300 epochs, seeds 0-13, deterministic, no augmentation".into()),
    ])
}

// ---------------------------------------------------------------------------
// 14. CIFAR byte format

fn cifar100_records(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Dataset {
        variant: CifarVariant::Cifar100,
        pixels: (0..n * PIXEL_BYTES).map(|_| rng.random()).collect(),
        labels: (0..n).map(|_| rng.random_range(0..100)).collect(),
        coarse_labels: Some((0..n).map(|_| rng.random_range(0..20)).collect()),
    }
}

pub fn cifar_format() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let batch = synthetic_cifar10(10_000, 21);
    let bytes = encode_records(&batch);
    let path = dir.path().join("data_batch_1.bin");
    std::fs::write(&path, &bytes).unwrap();
    let round_trip = load_file(&path, CifarVariant::Cifar10, 10_000)
        .map(|d| encode_records(&d) == std::fs::read(&path).unwrap() && d.len() == 10_000)
        .unwrap_or(false);

    let trunc = dir.path().join("truncated.bin");
    std::fs::write(&trunc, &bytes[..bytes.len() - 1]).unwrap();
    let truncated_rejected = load_file(&trunc, CifarVariant::Cifar10, 10_000).is_err()
        && load_records_file(&trunc, CifarVariant::Cifar10).is_err();

    let c10 = dir.path().join("c10.bin");
    std::fs::write(&c10, &bytes[..3 * 3073]).unwrap();
    let c10_ok = load_records_file(&c10, CifarVariant::Cifar10).map(|d| d.len() == 3).unwrap_or(false)
        && load_records_file(&c10, CifarVariant::Cifar100).is_err();

    let c100 = cifar100_records(5, 3);
    let c100_bytes = encode_records(&c100);
    let c100_path = dir.path().join("c100.bin");
    std::fs::write(&c100_path, &c100_bytes).unwrap();
    let c100_ok = c100_bytes.len() == 5 * 3074
        && load_records_file(&c100_path, CifarVariant::Cifar100).map(|d| d == c100).unwrap_or(false)
        && load_records_file(&c100_path, CifarVariant::Cifar10).is_err();
    Outcome::from_checks(&[
        (truncated_rejected, "truncated file rejected".into()),
        (c10_ok, "3073-byte records accepted as CIFAR-10 only".into()),
        (c100_ok, "3074-byte records accepted as CIFAR-100 only".into()),
        (round_trip, "10,000-record batch round-trips bit-exactly".into()),
    ])
}
