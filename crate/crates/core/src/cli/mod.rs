//! Command-line front end: flag parsing, experiment dispatch and report files.
//!
//! Precedence, lowest to highest: built-in defaults, `--config` file,
//! `--paper-preset`, individual flags.

mod config;
mod report;
mod runner;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::Parser;

pub use config::{
    parse_seed_range, Component, DatasetKind, RuleSet, RunConfig, CONFIG_VERSION, MEMORY_MODE_HEBBIAN_SA,
    MEMORY_MODE_HOPFIELD,
};
pub use report::{
    ablation_text, curve_csv, emit_run, greedy_text, read_json, run_text, sweep_text, write_json,
    AblationCell, AblationReport, CurvePoint, GreedyReport, GreedyStep, InteractionRow, RunReport,
    SeedRecord, SweepReport, SweepRow, CURVE_CSV_HEADER, GREEDY_GAIN_THRESHOLD, REPORT_SCHEMA_VERSION,
};
pub use runner::{
    data_dir, greedy_step_config, load_datasets, run, run_ablation, run_batch_sweep, run_default,
    run_greedy_replay, write_checkpoints, Experiment, RunOutput, DEFAULT_SWEEP, GREEDY_LABELS,
    SUBSET_SEED, SYNTHETIC_DEFAULT_SIZES, SYNTHETIC_SEED,
};

use crate::engine::{GradientBarrier, LeakyBarrier, StopGradient};
use crate::error::{Error, Result};
use crate::pathways::GateMode;

#[derive(Parser, Debug, Clone, Default)]
#[command(name = "visnet", version, about = "Train and evaluate the label-free plastic vision network")]
pub struct Args {
    /// JSON config file (flat key set; see `--print-config`).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Published experiment overrides: hopfield memory, B=4, 300 epochs, seeds 0-13, deterministic.
    #[arg(long)]
    pub paper_preset: bool,
    /// `hopfield` (implemented) or `hebbian_sa` (rejected).
    #[arg(long)]
    pub memory_mode: Option<String>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// A single seed.
    #[arg(long, conflicts_with = "seeds")]
    pub seed: Option<u64>,
    /// Seed list or range, e.g. `0-13` or `0,3,5-7`.
    #[arg(long)]
    pub seeds: Option<String>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub stop_gradient: Option<bool>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub deterministic: Option<bool>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub augmentation: Option<bool>,
    /// `cifar10`, `cifar100` or `synthetic`.
    #[arg(long)]
    pub dataset: Option<String>,
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    /// Class-balanced training subset size.
    #[arg(long)]
    pub subset: Option<usize>,
    /// Class-balanced test subset size.
    #[arg(long)]
    pub test_subset: Option<usize>,
    /// cifar10-reduced, cifar10-full, cifar100-reduced, cifar100-full, hebbian-only or extended.
    #[arg(long)]
    pub rule_set: Option<String>,
    /// Side-branch gate: saliency, uniform or random.
    #[arg(long)]
    pub gate: Option<String>,
    /// Ablation cells, comma-separated; `a+b` removes two components together.
    /// Without a value, runs the full component table.
    #[arg(long, num_args = 0.., value_delimiter = ',')]
    pub ablate: Option<Vec<String>>,
    /// Run the six-step greedy construction.
    #[arg(long)]
    pub greedy_replay: bool,
    /// Batch sizes to sweep (default 1,4,8,16,32).
    #[arg(long, num_args = 0.., value_delimiter = ',')]
    pub batch_sweep: Option<Vec<usize>>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Bootstrap resamples for confidence intervals.
    #[arg(long)]
    pub n_boot: Option<usize>,
    /// Skip the epoch-0, fresh-probe, frozen-classifier and NCM controls.
    #[arg(long)]
    pub no_controls: bool,
    /// Print the resolved config and its hash, then exit.
    #[arg(long)]
    pub print_config: bool,
    /// Suppress per-epoch progress lines.
    #[arg(long)]
    pub quiet: bool,
    /// Test fixture: replace the stop-gradient barrier with a leaky one.
    #[arg(long, hide = true)]
    pub leaky_barrier_fixture: bool,
}

fn parse_dataset(s: &str) -> Result<DatasetKind> {
    match s {
        "cifar10" => Ok(DatasetKind::Cifar10),
        "cifar100" => Ok(DatasetKind::Cifar100),
        "synthetic" => Ok(DatasetKind::Synthetic),
        other => Err(Error::Config(format!("unknown dataset `{other}` (cifar10, cifar100, synthetic)"))),
    }
}

fn parse_gate(s: &str) -> Result<GateMode> {
    match s {
        "saliency" => Ok(GateMode::Saliency),
        "uniform" => Ok(GateMode::Uniform),
        "random" => Ok(GateMode::Random),
        other => Err(Error::Config(format!("unknown gate `{other}` (saliency, uniform, random)"))),
    }
}

/// Ablation cells from `--ablate` values; an empty list means the full table.
pub fn parse_ablation_cells(values: &[String]) -> Result<Vec<Vec<Component>>> {
    if values.is_empty() {
        return Ok(Component::TABLE.iter().map(|c| vec![*c]).collect());
    }
    values
        .iter()
        .map(|v| {
            let cell = v.split('+').map(|p| Component::parse(p.trim())).collect::<Result<Vec<_>>>()?;
            if cell.len() > 2 {
                return Err(Error::Config(format!("ablation cell `{v}` has more than two components")));
            }
            Ok(cell)
        })
        .collect()
}

/// Resolves defaults, file, preset and flags into one config (not yet validated).
pub fn parse_config(args: &Args) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if args.paper_preset {
        cfg.apply_paper_preset();
    }
    if let Some(v) = &args.memory_mode {
        cfg.memory_mode = v.clone();
    }
    if let Some(v) = args.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = args.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = args.seed {
        cfg.seeds = vec![v];
    }
    if let Some(v) = &args.seeds {
        cfg.seeds = parse_seed_range(v)?;
    }
    if let Some(v) = args.stop_gradient {
        cfg.stop_gradient = v;
    }
    if let Some(v) = args.deterministic {
        cfg.deterministic = v;
    }
    if let Some(v) = args.augmentation {
        cfg.augmentation = v;
    }
    if let Some(v) = &args.dataset {
        cfg.dataset = parse_dataset(v)?;
    }
    if let Some(v) = &args.data_dir {
        cfg.data_dir = Some(v.clone());
    }
    if let Some(v) = args.subset {
        cfg.subset = Some(v);
    }
    if let Some(v) = args.test_subset {
        cfg.test_subset = Some(v);
    }
    if let Some(v) = &args.rule_set {
        cfg.rule_set = RuleSet::parse(v)?;
    }
    if let Some(v) = &args.gate {
        cfg.gate = parse_gate(v)?;
    }
    if let Some(v) = &args.out_dir {
        cfg.out_dir = v.clone();
    }
    if let Some(v) = args.n_boot {
        cfg.n_boot = v;
    }
    if args.no_controls {
        cfg.controls = false;
    }
    Ok(cfg)
}

/// Parses, validates and runs; returns the config hash.
pub fn execute(args: &Args) -> Result<String> {
    let cfg = parse_config(args)?;
    if args.print_config {
        println!("{}", serde_json::to_string_pretty(&cfg)?);
        println!("config_hash: {}", cfg.hash());
        return Ok(cfg.hash());
    }
    cfg.validate()?;
    let modes = usize::from(args.ablate.is_some()) + usize::from(args.greedy_replay) + usize::from(args.batch_sweep.is_some());
    if modes > 1 {
        return Err(Error::Config("--ablate, --greedy-replay and --batch-sweep are mutually exclusive".into()));
    }
    if let Some(s) = &args.batch_sweep {
        if s.contains(&0) {
            return Err(Error::Config("batch sizes must be >= 1".into()));
        }
    }
    let cells = args.ablate.as_deref().map(parse_ablation_cells).transpose()?;

    let quiet = args.quiet;
    let mut progress = |line: &str| {
        if !quiet {
            eprintln!("{line}");
        }
    };
    let mut exp = Experiment::new(&cfg)?;
    let out_dir = cfg.out_dir.clone();
    std::fs::create_dir_all(&out_dir)?;
    let mut on_run = |name: &str, out: &RunOutput| -> Result<()> {
        let dir = out_dir.join(name);
        emit_run(&dir, &out.report)?;
        write_checkpoints(&dir, out)
    };

    if let Some(cells) = cells {
        let rep = run_ablation(&mut exp, &cfg, &cells, &mut progress, &mut on_run)?;
        write_json(&out_dir.join("ablation.json"), &rep)?;
        let text = ablation_text(&rep);
        std::fs::write(out_dir.join("ablation.txt"), &text)?;
        print!("{text}");
    } else if args.greedy_replay {
        let rep = run_greedy_replay(&mut exp, &cfg, &mut progress, &mut on_run)?;
        write_json(&out_dir.join("greedy.json"), &rep)?;
        let text = greedy_text(&rep);
        std::fs::write(out_dir.join("greedy.txt"), &text)?;
        print!("{text}");
    } else if let Some(sizes) = &args.batch_sweep {
        let sizes = if sizes.is_empty() { DEFAULT_SWEEP.to_vec() } else { sizes.clone() };
        let rep = run_batch_sweep(&mut exp, &cfg, &sizes, &mut progress, &mut on_run)?;
        write_json(&out_dir.join("sweep.json"), &rep)?;
        let text = sweep_text(&rep);
        std::fs::write(out_dir.join("sweep.txt"), &text)?;
        print!("{text}");
    } else {
        let barrier: &dyn GradientBarrier = if args.leaky_barrier_fixture { &LeakyBarrier } else { &StopGradient };
        let out = run(&mut exp, &cfg, "run", barrier, &mut progress)?;
        on_run("run", &out)?;
        print!("{}", run_text(&out.report));
    }
    Ok(cfg.hash())
}

/// Entry point used by the binary; returns the process exit code.
pub fn main_with<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&args) {
        Ok(_) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
