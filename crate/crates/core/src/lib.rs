//! Probe-adapted predictive sets calibrated from partially labeled data.
//!
//! A structured label (a ranking, a tree leaf, a bit vector) is described by a
//! family of ±1 probe functions. Predictive sets commit to answers on a subset
//! of probes and abstain on the rest. Users answer only a few probes each, and
//! the False Probe Proportion (FPP) measures how many of the answered overlaps
//! the set gets wrong.
//!
//! The crate is organised bottom-up:
//!
//! - [`probe`] and [`tree`]: label spaces, probe families, probe-adapted sets.
//! - [`loss`]: the FPP loss and abstention.
//! - [`nested`]: the score-threshold and adaptive Bernoulli set sequences, and
//!   their piecewise-constant loss traces.
//! - [`calibrate`]: step-down and step-up conformalization, fixed-sequence
//!   testing with Hoeffding–Bentkus p-values, and outcome application.
//! - [`synthetic`]: ranking and label-tree generators with ground truth.
//! - [`oracle`]: brute-force re-derivations and Monte-Carlo guarantee checks.
//! - [`record`], [`eval`], [`sweep`]: wire formats, evaluation reports and
//!   parameter sweeps used by the command-line front end.
//!
//! Per-example work (trace construction, Monte-Carlo trials, dataset
//! generation, sweep cells) runs on rayon when the `parallel` feature is
//! enabled, and sequentially otherwise; see [`par::Exec`].

pub mod calibrate;
pub mod error;
pub mod eval;
pub mod loss;
pub mod nested;
pub mod oracle;
pub mod par;
pub mod probe;
pub mod record;
pub mod rng;
pub mod sweep;
pub mod synthetic;
pub mod tree;

pub use calibrate::{
    apply_outcome, calibrate_fst, calibrate_fst_quantile, calibrate_nominal, calibrate_stepdown, calibrate_stepup,
    conformal_quantile, estimate_err, hb_pvalue, stepdown_score, stepup_score, CalibSample, CalibrationOutcome,
    InstanceInputs, Method, SetFamily, WeakExample,
};
pub use error::{Error, Result};
pub use loss::{abstention, fpp_loss, FppLoss, UserFeedback};
pub use nested::{
    bernoulli_loss_trace, bernoulli_threshold, eta_set, loss_trace, threshold_set, AccuracyVector, LossTrace,
    ScoreVector, TraceSide,
};
pub use par::Exec;
pub use probe::{
    check_identifiability, evaluate_probe, materialize_weak_set, membership, probe_of_explicit_set, FamilyKind, Label,
    ProbeAdaptedSet, ProbeFamily, ProbeIndex, Sign,
};
pub use tree::Tree;
