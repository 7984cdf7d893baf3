//! Gradient-isolation audit.
//!
//! The probe's backward pass stops at the barrier, so the label gradient with
//! respect to any representational weight must be exactly zero. The audit
//! checks this two ways: the gradient the barrier hands back must be all
//! zeros, and for every weight group a central finite-difference directional
//! derivative of the representation, contracted with that returned gradient,
//! must vanish.

use ndarray::{Array2, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::features::Batch;
use super::model::{init_groups, Model, TensorKind};
use super::probe::{GradientBarrier, LinearProbe};
use crate::error::{Error, Result};
use crate::util::group_rng;

/// Step used for the finite-difference perturbation of each group.
pub const AUDIT_STEP: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    /// `|⟨∂L/∂z, ∂z/∂θ_g · u_g⟩|` per weight group.
    pub group_gradients: Vec<(String, f64)>,
    /// Norm of the gradient the barrier hands back to the representation.
    pub repr_grad_norm: f64,
    /// Norm of the probe's own weight gradient (nonzero on a real batch).
    pub probe_grad_norm: f64,
}

impl AuditReport {
    pub fn isolated(&self) -> bool {
        self.repr_grad_norm == 0.0 && self.group_gradients.iter().all(|(_, g)| *g == 0.0)
    }
}

fn perturbed(model: &Model, group: &str, dirs: &[(String, Vec<f64>)], scale: f64) -> Model {
    let mut m = model.clone();
    for (name, kind, mut t) in m.tensors_mut() {
        if kind != TensorKind::Weight || Model::group_of(&name) != group {
            continue;
        }
        let dir = &dirs.iter().find(|(n, _)| *n == name).expect("direction per tensor").1;
        for (v, d) in t.iter_mut().zip(dir) {
            *v += scale * d;
        }
    }
    m
}

fn frob(a: &Array2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Runs the audit on one diagnostic batch and errors on any leak.
pub fn stop_gradient_audit(
    model: &Model,
    probe: &LinearProbe,
    batch: &Batch,
    barrier: &dyn GradientBarrier,
    seed: u64,
) -> Result<AuditReport> {
    let z = model.represent(batch)?;
    let detached = barrier.detach(&z);
    let g = probe.gradients(detached.view(), &batch.labels)?;
    let upstream = barrier.backward(&g.grad_z);

    let mut rng = group_rng(seed, init_groups::AUDIT);
    let dirs: Vec<(String, Vec<f64>)> = model
        .tensors()
        .into_iter()
        .filter(|(_, k, _)| *k == TensorKind::Weight)
        .map(|(n, _, t)| (n, (0..t.len()).map(|_| rng.random_range(-1.0..1.0)).collect()))
        .collect();
    let mut groups: Vec<String> = Vec::new();
    for (n, _) in &dirs {
        let gname = Model::group_of(n);
        if groups.last() != Some(&gname) {
            groups.push(gname);
        }
    }

    let mut group_gradients = Vec::with_capacity(groups.len());
    for gname in groups {
        let zp = perturbed(model, &gname, &dirs, AUDIT_STEP).represent(batch)?;
        let zm = perturbed(model, &gname, &dirs, -AUDIT_STEP).represent(batch)?;
        let mut dd = 0.0;
        Zip::from(&upstream).and(&zp).and(&zm).for_each(|&u, &p, &m| {
            dd += u * (p - m) / (2.0 * AUDIT_STEP);
        });
        group_gradients.push((gname, dd.abs()));
    }
    let report = AuditReport {
        group_gradients,
        repr_grad_norm: frob(&upstream),
        probe_grad_norm: frob(&g.grad_w),
    };
    if !report.isolated() {
        let leaking: Vec<String> = report
            .group_gradients
            .iter()
            .filter(|(_, v)| *v != 0.0)
            .map(|(n, v)| format!("{n} ({v:.3e})"))
            .collect();
        return Err(Error::GradientIsolation(format!(
            "label gradient reaches the representation: norm {:.3e}; groups: {}",
            report.repr_grad_norm,
            leaking.join(", ")
        )));
    }
    Ok(report)
}
