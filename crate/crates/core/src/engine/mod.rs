//! Two-pass forward, the training loop, the label-isolated linear probe,
//! the NCM readout and the control protocols.
//!
//! Per mini-batch: pass 1 → non-recursive local updates → pass 2 on the
//! updated weights (no plasticity) → recursive update → detached copy of the
//! representation → one probe step. Labels reach only the probe step.

mod audit;
mod checkpoint;
mod features;
mod model;
mod probe;
mod protocol;

pub use audit::{stop_gradient_audit, AuditReport, AUDIT_STEP};
pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, read_checkpoint, restore, write_checkpoint, Checkpoint,
};
pub use features::{
    extract_features, pool_to_grid, stream_inputs, Batch, FeatureSet, StreamSelect, POOLED_SIDE,
    SINGLE_STREAM_FREQUENCY,
};
pub use model::{
    init_groups, mean_abs_offdiag_corr, ExtendedParams, MemoryActivity, Model, ModelConfig,
    PassState, SideActivity, TensorKind, TwoPass, DEFAULT_WIDTHS, MEMORY_DIM, MEMORY_READOUT_MIX,
    SIDE_HIDDEN, SIDE_OUTPUT,
};
pub use probe::{
    accuracy, AdamConfig, Detached, GradientBarrier, LeakyBarrier, LinearProbe, ProbeGradients,
    StopGradient,
};
pub use protocol::{
    epoch0_baseline, fresh_probe_protocol, frozen_classifier_control, ncm_accuracy, ncm_classify,
    ncm_fit, representations, run_seed, train_epoch, train_probe_on_features, Controls,
    EpochMetrics, SeedOutcome, TrainConfig, EVAL_CHUNK, FRESH_PROBE_EPOCHS,
};
