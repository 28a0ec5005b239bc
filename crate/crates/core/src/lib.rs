//! Predictive-coding variational RNN (PV-RNN) for visuo-proprioceptive
//! sequences.
//!
//! The model couples an associative layer with a proprioception branch and
//! a vision-latent branch. Each layer is a multiple-timescale leaky
//! integrator with stochastic units whose prior depends on the previous
//! deterministic state and whose posterior is shifted by per-step adaptive
//! variables `a`. Training minimizes a free energy whose complexity terms
//! carry a per-layer meta-prior weight; inference after training is done by
//! error regression over a sliding window of recent observations.
//!
//! - [`gaussian`]: diagonal Gaussians, analytic KL, reparameterized sampling
//! - [`layer`]: one layer's dynamics and its prior/posterior heads
//! - [`network`]: topology, rollouts, the weighted cost
//! - [`grad`]: backpropagation through time, Adam, finite differences
//! - [`training`]: full-batch training and seed replication
//! - [`error_regression`]: shifting-window posterior inference
//! - [`datagen`]: the synthetic A/B/C primitive corpus
//! - [`harness`]: persistence, statistics, experiment drivers, reports

pub mod datagen;
pub mod error;
pub mod error_regression;
pub mod gaussian;
pub mod grad;
pub mod harness;
pub mod layer;
pub mod linalg;
pub mod network;
pub mod noise;
pub mod training;

pub use error::{PvrnnError, Result};
pub use gaussian::{kl_diag, sample_reparam, unit_gaussian, DiagGaussian};
pub use grad::{adam_step, backprop, finite_diff, AdamConfig, AdamState, GradientSet};
pub use layer::{posterior_of, prior_of, step, AdaptiveEntry, LayerParams, LayerSpec, LayerState};
pub use network::{
    evaluate_cost, forward_posterior, forward_prior, AdaptiveField, CostBreakdown, Frame,
    MetaPrior, MetaPriorConfig, Model, ModelParams, NetworkSpec, NetworkState, RolloutRecord,
};
