//! Training loop, readouts and the control protocols.

use ndarray::{concatenate, Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::audit::stop_gradient_audit;
use super::features::FeatureSet;
use super::model::{init_groups, mean_abs_offdiag_corr, Model, ModelConfig};
use super::probe::{accuracy, AdamConfig, GradientBarrier, LinearProbe};
use crate::data::epoch_batches;
use crate::error::{Error, Result};
use crate::util::group_rng;

/// Rows per chunk when computing frozen representations. Fixed so results
/// never depend on the number of worker threads.
pub const EVAL_CHUNK: usize = 32;
/// Epochs of the fresh-probe protocol.
pub const FRESH_PROBE_EPOCHS: usize = 50;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub adam: AdamConfig,
    /// Run the finite-difference audit on the first batch of every epoch.
    pub audit_each_epoch: bool,
    /// Evaluate the representation on worker threads.
    pub parallel_eval: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 16,
            epochs: 100,
            seed: 0,
            adam: AdamConfig::default(),
            audit_each_epoch: true,
            parallel_eval: true,
        }
    }
}

/// Metrics recorded at the end of every epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    #[serde(with = "crate::util::json_f64")]
    pub train_loss: f64,
    #[serde(with = "crate::util::json_f64")]
    pub test_acc: f64,
    /// Mean |off-diagonal correlation| of the test representation.
    #[serde(with = "crate::util::json_f64")]
    pub decorrelation: f64,
    /// Frobenius norm of each weight group's change over the epoch.
    pub weight_change: Vec<(String, f64)>,
    pub checksum: u64,
}

/// Frozen representations of every record, computed in fixed-size chunks.
pub fn representations(model: &Model, data: &FeatureSet, parallel: bool) -> Result<Array2<f64>> {
    let idx: Vec<usize> = (0..data.len()).collect();
    let chunks: Vec<&[usize]> = idx.chunks(EVAL_CHUNK).collect();
    let run = |c: &&[usize]| model.represent(&data.batch(c));
    let parts: Vec<Array2<f64>> = if parallel {
        chunks.par_iter().map(run).collect::<Result<_>>()?
    } else {
        chunks.iter().map(run).collect::<Result<_>>()?
    };
    let views: Vec<ArrayView2<'_, f64>> = parts.iter().map(|p| p.view()).collect();
    concatenate(Axis(0), &views).map_err(|e| Error::InvalidInput(e.to_string()))
}

/// One epoch of plasticity plus co-trained probe; returns the mean probe loss.
pub fn train_epoch(
    model: &mut Model,
    probe: &mut LinearProbe,
    data: &FeatureSet,
    cfg: &TrainConfig,
    epoch: usize,
    barrier: &dyn GradientBarrier,
) -> Result<f64> {
    let idx: Vec<usize> = (0..data.len()).collect();
    let batches = epoch_batches(&idx, cfg.batch_size, cfg.seed, epoch as u64);
    if batches.is_empty() {
        return Err(Error::Config(format!(
            "batch size {} exceeds the {} training records",
            cfg.batch_size,
            data.len()
        )));
    }
    if cfg.audit_each_epoch {
        stop_gradient_audit(model, probe, &data.batch(&batches[0]), barrier, cfg.seed ^ epoch as u64)?;
    }
    let mut loss = 0.0;
    for b in &batches {
        let batch = data.batch(b);
        let out = model.train_step(&batch)?;
        let detached = barrier.detach(&out.z_final);
        // Labels enter here and nowhere else.
        let g = probe.step(&detached, &batch.labels, &cfg.adam)?;
        let back = barrier.backward(&g.grad_z);
        if back.iter().any(|&v| v != 0.0) {
            return Err(Error::GradientIsolation(format!(
                "probe gradient crossed the barrier in epoch {epoch}"
            )));
        }
        loss += g.loss;
    }
    Ok(loss / batches.len() as f64)
}

fn weight_change(before: &[(String, Vec<f64>)], after: &[(String, Vec<f64>)]) -> Vec<(String, f64)> {
    before
        .iter()
        .zip(after)
        .map(|((g, a), (_, b))| {
            let n = a.iter().zip(b).map(|(x, y)| (y - x) * (y - x)).sum::<f64>().sqrt();
            (g.clone(), n)
        })
        .collect()
}

/// Trains a fresh probe for `epochs` epochs on cached features.
pub fn train_probe_on_features(
    z_train: &Array2<f64>,
    train_labels: &[u8],
    n_classes: usize,
    epochs: usize,
    batch_size: usize,
    seed: u64,
    init_group: u64,
    adam: &AdamConfig,
) -> Result<LinearProbe> {
    let mut probe = LinearProbe::new(n_classes, z_train.ncols(), &mut group_rng(seed, init_group));
    let idx: Vec<usize> = (0..z_train.nrows()).collect();
    let barrier = super::probe::StopGradient;
    for epoch in 1..=epochs {
        // Offset the shuffle stream so probe batches are not the training batches.
        for b in epoch_batches(&idx, batch_size, seed ^ 0x5EED_0F_u64, epoch as u64) {
            let z = barrier.detach(&z_train.select(Axis(0), &b));
            let labels: Vec<u8> = b.iter().map(|&i| train_labels[i]).collect();
            probe.step(&z, &labels, adam)?;
        }
    }
    Ok(probe)
}

/// Class means of the features (zero rows for classes without samples).
pub fn ncm_fit(z: ArrayView2<'_, f64>, labels: &[u8], n_classes: usize) -> Array2<f64> {
    let mut means = Array2::zeros((n_classes, z.ncols()));
    let mut counts = vec![0usize; n_classes];
    for (row, &y) in z.axis_iter(Axis(0)).zip(labels) {
        let mut m = means.row_mut(usize::from(y));
        m += &row;
        counts[usize::from(y)] += 1;
    }
    for (mut m, &c) in means.axis_iter_mut(Axis(0)).zip(&counts) {
        if c > 0 {
            m /= c as f64;
        }
    }
    means
}

/// Nearest class mean by cosine distance; all-zero means are never chosen.
pub fn ncm_classify(z: ArrayView2<'_, f64>, means: &Array2<f64>) -> Vec<usize> {
    let norms: Vec<f64> = means.axis_iter(Axis(0)).map(|m| m.dot(&m).sqrt()).collect();
    z.axis_iter(Axis(0))
        .map(|q| {
            let qn = q.dot(&q).sqrt();
            let mut best = (0usize, f64::INFINITY);
            for (c, m) in means.axis_iter(Axis(0)).enumerate() {
                if norms[c] == 0.0 {
                    continue;
                }
                let cos = if qn == 0.0 { 0.0 } else { q.dot(&m) / (qn * norms[c]) };
                let dist = 1.0 - cos;
                if dist < best.1 {
                    best = (c, dist);
                }
            }
            best.0
        })
        .collect()
}

/// Everything one seed produces.
#[derive(Clone, Debug)]
pub struct SeedOutcome {
    pub seed: u64,
    pub epochs: Vec<EpochMetrics>,
    pub epoch0_acc: f64,
    pub final_acc: f64,
    pub fresh_probe_acc: f64,
    pub frozen_classifier_acc: f64,
    pub ncm_acc: f64,
    pub model: Model,
    pub probe: LinearProbe,
}

/// Which controls to evaluate alongside training.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Controls {
    pub epoch0: bool,
    pub fresh_probe: bool,
    pub frozen_classifier: bool,
    pub ncm: bool,
}

impl Controls {
    pub fn all() -> Self {
        Self { epoch0: true, fresh_probe: true, frozen_classifier: true, ncm: true }
    }

    pub fn none() -> Self {
        Self { epoch0: false, fresh_probe: false, frozen_classifier: false, ncm: false }
    }
}

/// Accuracy of a probe trained for `epochs` epochs on the features of a
/// never-updated model (the model is only read).
pub fn epoch0_baseline(
    model: &Model,
    train: &FeatureSet,
    test: &FeatureSet,
    cfg: &TrainConfig,
) -> Result<f64> {
    let z_tr = representations(model, train, cfg.parallel_eval)?;
    let z_te = representations(model, test, cfg.parallel_eval)?;
    let probe = train_probe_on_features(
        &z_tr,
        &train.labels,
        train.n_classes,
        cfg.epochs,
        cfg.batch_size,
        cfg.seed,
        init_groups::EPOCH0_PROBE,
        &cfg.adam,
    )?;
    Ok(probe.accuracy(z_te.view(), &test.labels))
}

/// A new probe trained for [`FRESH_PROBE_EPOCHS`] on the frozen model.
pub fn fresh_probe_protocol(
    model: &Model,
    train: &FeatureSet,
    test: &FeatureSet,
    cfg: &TrainConfig,
) -> Result<f64> {
    let z_tr = representations(model, train, cfg.parallel_eval)?;
    let z_te = representations(model, test, cfg.parallel_eval)?;
    let probe = train_probe_on_features(
        &z_tr,
        &train.labels,
        train.n_classes,
        FRESH_PROBE_EPOCHS,
        cfg.batch_size,
        cfg.seed,
        init_groups::FRESH_PROBE,
        &cfg.adam,
    )?;
    Ok(probe.accuracy(z_te.view(), &test.labels))
}

/// Accuracy of a randomly initialised, never-trained probe.
pub fn frozen_classifier_control(model: &Model, test: &FeatureSet, seed: u64, parallel: bool) -> Result<f64> {
    let z = representations(model, test, parallel)?;
    let probe = LinearProbe::new(test.n_classes, z.ncols(), &mut group_rng(seed, init_groups::FROZEN_PROBE));
    Ok(probe.accuracy(z.view(), &test.labels))
}

/// NCM accuracy with prototypes from the training features.
pub fn ncm_accuracy(model: &Model, train: &FeatureSet, test: &FeatureSet, parallel: bool) -> Result<f64> {
    let z_tr = representations(model, train, parallel)?;
    let z_te = representations(model, test, parallel)?;
    let means = ncm_fit(z_tr.view(), &train.labels, train.n_classes);
    Ok(accuracy(&ncm_classify(z_te.view(), &means), &test.labels))
}

/// Trains one seed end to end and evaluates the requested controls.
/// `on_epoch` sees each epoch's metrics as soon as they exist.
pub fn run_seed(
    model_cfg: &ModelConfig,
    train: &FeatureSet,
    test: &FeatureSet,
    cfg: &TrainConfig,
    controls: Controls,
    barrier: &dyn GradientBarrier,
    on_epoch: &mut dyn FnMut(&EpochMetrics),
) -> Result<SeedOutcome> {
    if train.n_classes != test.n_classes {
        return Err(Error::InvalidInput("train and test disagree on the class count".into()));
    }
    let mut model = Model::new(model_cfg.clone(), cfg.seed)?;
    let mut probe = LinearProbe::new(
        train.n_classes,
        model.representation_dim(),
        &mut group_rng(cfg.seed, init_groups::PROBE),
    );
    let epoch0_acc = if controls.epoch0 {
        let before = model.checksum();
        let acc = epoch0_baseline(&model, train, test, cfg)?;
        debug_assert_eq!(before, model.checksum());
        acc
    } else {
        f64::NAN
    };
    let mut epochs = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let start = model.weight_groups();
        let train_loss = train_epoch(&mut model, &mut probe, train, cfg, epoch, barrier)?;
        let z = representations(&model, test, cfg.parallel_eval)?;
        let m = EpochMetrics {
            epoch,
            train_loss,
            test_acc: probe.accuracy(z.view(), &test.labels),
            decorrelation: mean_abs_offdiag_corr(z.view()),
            weight_change: weight_change(&start, &model.weight_groups()),
            checksum: model.checksum(),
        };
        on_epoch(&m);
        epochs.push(m);
    }
    let final_acc = match epochs.last() {
        Some(m) => m.test_acc,
        None => probe.accuracy(representations(&model, test, cfg.parallel_eval)?.view(), &test.labels),
    };
    let fresh_probe_acc = if controls.fresh_probe {
        fresh_probe_protocol(&model, train, test, cfg)?
    } else {
        f64::NAN
    };
    let frozen_classifier_acc = if controls.frozen_classifier {
        frozen_classifier_control(&model, test, cfg.seed, cfg.parallel_eval)?
    } else {
        f64::NAN
    };
    let ncm_acc = if controls.ncm {
        ncm_accuracy(&model, train, test, cfg.parallel_eval)?
    } else {
        f64::NAN
    };
    Ok(SeedOutcome {
        seed: cfg.seed,
        epochs,
        epoch0_acc,
        final_acc,
        fresh_probe_acc,
        frozen_classifier_acc,
        ncm_acc,
        model,
        probe,
    })
}
