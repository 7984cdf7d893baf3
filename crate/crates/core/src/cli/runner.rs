//! Experiment orchestration: single runs, the ablation matrix, greedy replay
//! and the batch-size sweep.

use std::path::{Path, PathBuf};

use super::config::{Component, DatasetKind, RuleSet, RunConfig};
use super::report::{
    AblationCell, AblationReport, CurvePoint, GreedyReport, GreedyStep, InteractionRow, RunReport,
    SeedRecord, SweepReport, SweepRow, GREEDY_GAIN_THRESHOLD, REPORT_SCHEMA_VERSION,
};
use crate::data::{load_cifar, stratified_subset, synthetic_cifar10, CifarVariant, Dataset};
use crate::engine::{
    extract_features, run_seed, Controls, FeatureSet, GradientBarrier, Model, SeedOutcome, StopGradient,
    StreamSelect,
};
use crate::error::{Error, Result};
use crate::frontend::{FrontEnd, FrontEndConfig};
use crate::stats::{cohens_d, compare_conditions, interaction_strength, mean, summarise, Status, BOOTSTRAP_SEED};

/// Seed of the class-balanced subset draw; fixed so every run and seed sees
/// the same records.
pub const SUBSET_SEED: u64 = 0;
/// Seed of the synthetic dataset.
pub const SYNTHETIC_SEED: u64 = 0x5EED;
/// Synthetic split sizes when no subset is given.
pub const SYNTHETIC_DEFAULT_SIZES: (usize, usize) = (500, 200);

/// Batch sizes of the default sweep.
pub const DEFAULT_SWEEP: [usize; 5] = [1, 4, 8, 16, 32];

/// Labels of the greedy-construction steps.
pub const GREEDY_LABELS: [&str; 6] = [
    "Hebbian only",
    "+ Multi-frequency streams",
    "+ Memory module",
    "+ Feedback",
    "+ AHebb + FE",
    "+ Side branch",
];

/// Resolves the data directory for a dataset.
pub fn data_dir(cfg: &RunConfig) -> PathBuf {
    match (&cfg.data_dir, cfg.dataset) {
        (Some(d), _) => d.clone(),
        (None, DatasetKind::Cifar100) => PathBuf::from("data/cifar-100-binary"),
        (None, _) => crate::data::default_cifar10_dir(),
    }
}

/// Loads (and subsets) the train and test splits a config asks for.
pub fn load_datasets(cfg: &RunConfig) -> Result<(Dataset, Dataset)> {
    let (train, test) = match cfg.dataset {
        DatasetKind::Synthetic => {
            let n_tr = cfg.subset.unwrap_or(SYNTHETIC_DEFAULT_SIZES.0);
            let n_te = cfg.test_subset.unwrap_or(SYNTHETIC_DEFAULT_SIZES.1);
            let all = synthetic_cifar10(n_tr + n_te, SYNTHETIC_SEED);
            let tr: Vec<usize> = (0..n_tr).collect();
            let te: Vec<usize> = (n_tr..n_tr + n_te).collect();
            return Ok((all.select(&tr), all.select(&te)));
        }
        DatasetKind::Cifar10 => load_cifar(&data_dir(cfg), CifarVariant::Cifar10)?,
        DatasetKind::Cifar100 => load_cifar(&data_dir(cfg), CifarVariant::Cifar100)?,
    };
    let n_classes = cfg.n_classes();
    let sub = |d: Dataset, n: Option<usize>| match n {
        Some(n) if n < d.len() => {
            let all: Vec<usize> = (0..d.len()).collect();
            d.select(&stratified_subset(&d.labels, &all, n_classes, n, SUBSET_SEED))
        }
        _ => d,
    };
    Ok((sub(train, cfg.subset), sub(test, cfg.test_subset)))
}

/// Datasets plus front-end features, computed once per stream selection.
pub struct Experiment {
    train: Dataset,
    test: Dataset,
    front: FrontEnd,
    cache: Vec<(StreamSelect, FeatureSet, FeatureSet)>,
}

impl Experiment {
    pub fn new(cfg: &RunConfig) -> Result<Self> {
        let (train, test) = load_datasets(cfg)?;
        Self::from_datasets(train, test)
    }

    pub fn from_datasets(train: Dataset, test: Dataset) -> Result<Self> {
        if train.is_empty() || test.is_empty() {
            return Err(Error::InvalidInput("train and test splits must be non-empty".into()));
        }
        let side = crate::data::IMAGE_SIDE;
        Ok(Self { train, test, front: FrontEnd::new(FrontEndConfig::default(), side, side)?, cache: Vec::new() })
    }

    pub fn n_train(&self) -> usize {
        self.train.len()
    }

    pub fn n_test(&self) -> usize {
        self.test.len()
    }

    /// Train and test features for a stream selection.
    pub fn features(&mut self, select: StreamSelect) -> Result<(&FeatureSet, &FeatureSet)> {
        let pos = match self.cache.iter().position(|(s, _, _)| *s == select) {
            Some(p) => p,
            None => {
                let tr = extract_features(&self.front, &self.train, select)?;
                let te = extract_features(&self.front, &self.test, select)?;
                self.cache.push((select, tr, te));
                self.cache.len() - 1
            }
        };
        let (_, tr, te) = &self.cache[pos];
        Ok((tr, te))
    }
}

/// A finished run: the report plus each seed's trained model and probe.
pub struct RunOutput {
    pub report: RunReport,
    pub outcomes: Vec<SeedOutcome>,
}

fn nan_to_none(v: f64) -> Option<f64> {
    (!v.is_nan()).then_some(v)
}

/// Trains every seed of `cfg` and aggregates the results.
pub fn run(
    exp: &mut Experiment,
    cfg: &RunConfig,
    label: &str,
    barrier: &dyn GradientBarrier,
    progress: &mut dyn FnMut(&str),
) -> Result<RunOutput> {
    cfg.validate()?;
    let model_cfg = cfg.model_config();
    let mut notes: Vec<String> =
        cfg.disabled.iter().map(|c| format!("ablation {}: {}", c.name(), c.mapping())).collect();
    if cfg.disabled.contains(&Component::SideBranch) {
        notes.push(format!("probe resized to {} inputs", model_cfg.representation_dim()));
    }
    let controls = if cfg.controls { Controls::all() } else { Controls::none() };
    let (train, test) = exp.features(model_cfg.streams)?;
    if train.n_classes != cfg.n_classes() {
        return Err(Error::Config(format!(
            "dataset has {} classes but the config expects {}",
            train.n_classes,
            cfg.n_classes()
        )));
    }
    let mut outcomes = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let tc = cfg.train_config(seed);
        let mut on_epoch = |m: &crate::engine::EpochMetrics| {
            progress(&format!("{label} seed {seed} epoch {}: acc {:.4} loss {:.4}", m.epoch, m.test_acc, m.train_loss))
        };
        outcomes.push(run_seed(&model_cfg, train, test, &tc, controls, barrier, &mut on_epoch)?);
    }
    let seeds: Vec<SeedRecord> = outcomes
        .iter()
        .map(|o| SeedRecord {
            seed: o.seed,
            epochs: o.epochs.clone(),
            final_acc: o.final_acc,
            epoch0_acc: nan_to_none(o.epoch0_acc),
            fresh_probe_acc: nan_to_none(o.fresh_probe_acc),
            frozen_classifier_acc: nan_to_none(o.frozen_classifier_acc),
            ncm_acc: nan_to_none(o.ncm_acc),
            final_checksum: o.model.checksum(),
        })
        .collect();
    let mut curve = Vec::with_capacity(cfg.epochs + 1);
    let e0: Option<Vec<f64>> = seeds.iter().map(|s| s.epoch0_acc).collect();
    if let Some(e0) = e0 {
        curve.push(CurvePoint { epoch: 0, summary: summarise(&e0, cfg.n_boot, BOOTSTRAP_SEED)? });
    }
    for e in 0..cfg.epochs {
        let accs: Vec<f64> = seeds.iter().map(|s| s.epochs[e].test_acc).collect();
        curve.push(CurvePoint { epoch: e + 1, summary: summarise(&accs, cfg.n_boot, BOOTSTRAP_SEED)? });
    }
    let finals: Vec<f64> = seeds.iter().map(|s| s.final_acc).collect();
    let param_counts = Model::new(model_cfg.clone(), 0)?
        .param_counts()
        .into_iter()
        .map(|(n, c)| (n.to_string(), c))
        .collect();
    let report = RunReport {
        schema_version: REPORT_SCHEMA_VERSION,
        label: label.to_string(),
        config: cfg.clone(),
        config_hash: cfg.hash(),
        model: model_cfg,
        param_counts,
        n_train: exp.n_train(),
        n_test: exp.n_test(),
        notes,
        seeds,
        curve,
        final_summary: summarise(&finals, cfg.n_boot, BOOTSTRAP_SEED)?,
    };
    Ok(RunOutput { report, outcomes })
}

/// Runs with the production barrier.
pub fn run_default(exp: &mut Experiment, cfg: &RunConfig, label: &str, progress: &mut dyn FnMut(&str)) -> Result<RunOutput> {
    run(exp, cfg, label, &StopGradient, progress)
}

fn cell_label(components: &[Component]) -> String {
    components.iter().map(|c| c.label()).collect::<Vec<_>>().join(" ")
}

/// The base run plus one run per cell. Cells with two components are
/// pairwise removals; their single-component cells are added if missing.
pub fn run_ablation(
    exp: &mut Experiment,
    base: &RunConfig,
    cells: &[Vec<Component>],
    progress: &mut dyn FnMut(&str),
    on_run: &mut dyn FnMut(&str, &RunOutput) -> Result<()>,
) -> Result<AblationReport> {
    let mut cells: Vec<Vec<Component>> = cells.to_vec();
    for cell in cells.clone() {
        if cell.len() == 2 {
            for c in &cell {
                if !cells.contains(&vec![*c]) {
                    cells.push(vec![*c]);
                }
            }
        }
    }
    let base_out = run_default(exp, base, "base", progress)?;
    on_run("base", &base_out)?;
    let base_report = base_out.report;
    let mut out_cells = Vec::with_capacity(cells.len());
    for cell in &cells {
        let mut cfg = base.clone();
        for c in cell {
            if !cfg.disabled.contains(c) {
                cfg.disabled.push(*c);
            }
        }
        let name = cell.iter().map(|c| c.name()).collect::<Vec<_>>().join("+");
        let out = run_default(exp, &cfg, &name, progress)?;
        on_run(&name, &out)?;
        out_cells.push(AblationCell {
            components: cell.clone(),
            label: cell_label(cell),
            mapping: cell.iter().map(|c| format!("{}: {}", c.name(), c.mapping())).collect(),
            report: out.report,
        });
    }
    // Singles first, in request order, so the text table can zip them with rows.
    out_cells.sort_by_key(|c| c.components.len());

    let reference = base_report.final_accs();
    let mut notes = Vec::new();
    let singles: Vec<(String, Vec<f64>)> = out_cells
        .iter()
        .filter(|c| c.components.len() == 1)
        .map(|c| (c.label.clone(), c.report.final_accs()))
        .collect();
    let table = if reference.len() >= 2 && !singles.is_empty() {
        compare_conditions(&reference, &singles, base.n_boot, BOOTSTRAP_SEED)?
    } else {
        if !singles.is_empty() {
            notes.push("statistics need two or more seeds; table rows omitted".into());
        }
        Vec::new()
    };

    let base_mean = mean(&reference);
    let delta_of = |comps: &[Component]| {
        out_cells
            .iter()
            .find(|c| c.components == comps)
            .map(|c| c.report.final_summary.mean - base_mean)
    };
    let mut interactions = Vec::new();
    for cell in out_cells.iter().filter(|c| c.components.len() == 2) {
        let (a, b) = (cell.components[0], cell.components[1]);
        if let (Some(da), Some(db)) = (delta_of(&[a]), delta_of(&[b])) {
            let dab = cell.report.final_summary.mean - base_mean;
            interactions.push(InteractionRow {
                a,
                b,
                delta_a: da,
                delta_b: db,
                delta_ab: dab,
                interaction: interaction_strength(da, db, dab),
                status: Status::Exploratory,
            });
        }
    }
    let base_params = base_report.total_params();
    for cell in out_cells.iter().filter(|c| c.components.len() == 1) {
        let removed = base_params.saturating_sub(cell.report.total_params());
        if removed > 0 {
            notes.push(format!(
                "{} removes {removed} learned parameters as well as its computation; its row conflates both",
                cell.label
            ));
        }
    }
    Ok(AblationReport {
        schema_version: REPORT_SCHEMA_VERSION,
        base: base_report,
        cells: out_cells,
        table,
        interactions,
        notes,
    })
}

/// The config of greedy step `k` (0..=5) derived from `base`.
pub fn greedy_step_config(base: &RunConfig, k: usize) -> RunConfig {
    use Component::*;
    let mut cfg = base.clone();
    cfg.rule_set = if k == 0 { RuleSet::HebbianOnly } else { RuleSet::Cifar10Full };
    cfg.disabled = match k {
        0 => vec![],
        1 => vec![AntiHebbian, FreeEnergy, Recursive, Memory, Feedback, SideBranch],
        2 => vec![AntiHebbian, FreeEnergy, Recursive, Feedback, SideBranch],
        3 => vec![AntiHebbian, FreeEnergy, Recursive, SideBranch],
        4 => vec![Recursive, SideBranch],
        _ => vec![],
    };
    cfg
}

/// Runs the six greedy-construction steps and reports cumulative gains.
pub fn run_greedy_replay(
    exp: &mut Experiment,
    base: &RunConfig,
    progress: &mut dyn FnMut(&str),
    on_run: &mut dyn FnMut(&str, &RunOutput) -> Result<()>,
) -> Result<GreedyReport> {
    let mut reports = Vec::with_capacity(GREEDY_LABELS.len());
    for k in 0..GREEDY_LABELS.len() {
        let name = format!("step{k}");
        let out = run_default(exp, &greedy_step_config(base, k), &name, progress)?;
        on_run(&name, &out)?;
        reports.push(out.report);
    }
    let step0 = reports[0].final_accs();
    let m0 = mean(&step0);
    let total = reports.last().map_or(0.0, |r| r.final_summary.mean - m0);
    let mut steps = Vec::with_capacity(reports.len());
    for (k, report) in reports.into_iter().enumerate() {
        let delta = report.final_summary.mean - m0;
        let d = (k > 0 && step0.len() >= 2)
            .then(|| cohens_d(&report.final_accs(), &step0))
            .transpose()?;
        steps.push(GreedyStep {
            step: k,
            label: GREEDY_LABELS[k].to_string(),
            report,
            delta,
            d,
            gain_fraction: if total != 0.0 { delta / total } else { 0.0 },
        });
    }
    let threshold_step = (total > 0.0)
        .then(|| steps.iter().find(|s| s.step > 0 && s.gain_fraction >= GREEDY_GAIN_THRESHOLD).map(|s| s.step))
        .flatten();
    Ok(GreedyReport {
        schema_version: REPORT_SCHEMA_VERSION,
        steps,
        threshold_step,
        notes: vec![
            "the 92% gain threshold is an annotation, not a principled cutoff".into(),
            "step 5 is the full system, so the recursive rule enters together with the side branch".into(),
            "cumulative gains are reported, not asserted to be monotone".into(),
        ],
    })
}

/// One run per batch size, same seeds.
pub fn run_batch_sweep(
    exp: &mut Experiment,
    base: &RunConfig,
    sizes: &[usize],
    progress: &mut dyn FnMut(&str),
    on_run: &mut dyn FnMut(&str, &RunOutput) -> Result<()>,
) -> Result<SweepReport> {
    let mut rows = Vec::with_capacity(sizes.len());
    for &b in sizes {
        let cfg = RunConfig { batch_size: b, ..base.clone() };
        let name = format!("b{b}");
        let out = run_default(exp, &cfg, &name, progress)?;
        on_run(&name, &out)?;
        rows.push(SweepRow {
            batch_size: b,
            updates_per_epoch: exp.n_train() / b,
            summary: out.report.final_summary,
            delta_vs_b4: None,
            report: out.report,
        });
    }
    if let Some(m4) = rows.iter().find(|r| r.batch_size == 4).map(|r| r.summary.mean) {
        for r in &mut rows {
            r.delta_vs_b4 = Some(r.summary.mean - m4);
        }
    }
    Ok(SweepReport { schema_version: REPORT_SCHEMA_VERSION, rows })
}

/// Writes each seed's checkpoint into `dir`.
pub fn write_checkpoints(dir: &Path, out: &RunOutput) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for o in &out.outcomes {
        crate::engine::write_checkpoint(
            &dir.join(format!("seed{}.ckpt", o.seed)),
            &o.model,
            Some(&o.probe),
            &out.report.config_hash,
        )?;
    }
    Ok(())
}
