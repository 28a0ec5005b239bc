//! Layer topology, full-sequence rollouts and the meta-prior weighted cost.
//!
//! Layers are evaluated in index order within a step; a layer's top-down
//! parent must precede it, so the parent's `d_t` of the *same* step is
//! available. There are no bottom-up deterministic connections.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, PvrnnError, Result};
use crate::gaussian::{kl_unchecked, unit_gaussian, DiagGaussian};
use crate::layer::{self, AdaptiveEntry, LayerParams, LayerSpec, LayerState};
use crate::linalg::{squared_distance, Matrix};
use crate::noise::NoiseSource;

pub const ASSOC: usize = 0;
pub const PROP_SLOW: usize = 1;
pub const PROP_FAST: usize = 2;
pub const VIS_SLOW: usize = 3;
pub const VIS_FAST: usize = 4;

pub const PROPRIO: usize = 0;
pub const VISION: usize = 1;

pub const PROPRIO_DIM: usize = 16;
pub const VISION_LATENT_DIM: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerNode {
    pub name: String,
    pub spec: LayerSpec,
    /// Layer whose same-step `d` feeds this one from above.
    pub parent: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputSpec {
    pub name: String,
    /// Layer whose `d_t` drives this output.
    pub source: usize,
    pub dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub layers: Vec<LayerNode>,
    pub outputs: Vec<OutputSpec>,
}

impl NetworkSpec {
    /// Associative layer feeding a two-layer proprioception branch and a
    /// two-layer vision branch.
    pub fn standard() -> Self {
        let node = |name: &str, d, z, tau, parent: Option<usize>, td| LayerNode {
            name: name.to_string(),
            spec: LayerSpec {
                dim_d: d,
                dim_z: z,
                tau,
                topdown_dim: td,
            },
            parent,
        };
        Self {
            layers: vec![
                node("assoc", 10, 1, 15.0, None, 0),
                node("prop_slow", 20, 2, 8.0, Some(ASSOC), 10),
                node("prop_fast", 30, 3, 2.0, Some(PROP_SLOW), 20),
                node("vis_slow", 20, 2, 8.0, Some(ASSOC), 10),
                node("vis_fast", 30, 3, 2.0, Some(VIS_SLOW), 20),
            ],
            outputs: vec![
                OutputSpec {
                    name: "proprio".into(),
                    source: PROP_FAST,
                    dim: PROPRIO_DIM,
                },
                OutputSpec {
                    name: "vision".into(),
                    source: VIS_FAST,
                    dim: VISION_LATENT_DIM,
                },
            ],
        }
    }

    /// A chain of layers (index 0 on top), reading one output from the bottom layer.
    pub fn chain(layers: &[(usize, usize, f64)], output_dim: usize) -> Result<Self> {
        if layers.is_empty() {
            return Err(PvrnnError::InvalidArgument("chain needs a layer".into()));
        }
        let mut nodes = Vec::with_capacity(layers.len());
        for (i, &(dim_d, dim_z, tau)) in layers.iter().enumerate() {
            let topdown_dim = if i == 0 { 0 } else { layers[i - 1].0 };
            nodes.push(LayerNode {
                name: format!("layer{i}"),
                spec: LayerSpec::new(dim_d, dim_z, tau, topdown_dim)?,
                parent: i.checked_sub(1),
            });
        }
        let spec = Self {
            layers: nodes,
            outputs: vec![OutputSpec {
                name: "out".into(),
                source: layers.len() - 1,
                dim: output_dim,
            }],
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() || self.outputs.is_empty() {
            return Err(PvrnnError::InvalidArgument(
                "network needs at least one layer and one output".into(),
            ));
        }
        for (i, node) in self.layers.iter().enumerate() {
            node.spec.validate()?;
            match node.parent {
                None if node.spec.topdown_dim != 0 => {
                    return Err(PvrnnError::InvalidArgument(format!(
                        "layer {} has no parent but topdown_dim {}",
                        node.name, node.spec.topdown_dim
                    )))
                }
                Some(p) if p >= i => {
                    return Err(PvrnnError::InvalidArgument(format!(
                        "layer {} must come after its parent",
                        node.name
                    )))
                }
                Some(p) => check_len(
                    "topdown width",
                    self.layers[p].spec.dim_d,
                    node.spec.topdown_dim,
                )?,
                None => {}
            }
        }
        for out in &self.outputs {
            if out.source >= self.layers.len() || out.dim == 0 {
                return Err(PvrnnError::InvalidArgument(format!(
                    "output {} is malformed",
                    out.name
                )));
            }
        }
        Ok(())
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn dim_z(&self, layer: usize) -> usize {
        self.layers[layer].spec.dim_z
    }

    pub fn layer_names(&self) -> Vec<&str> {
        self.layers.iter().map(|l| l.name.as_str()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetaPrior {
    /// Weight on the KL term at steps `t >= 2`.
    pub w: f64,
    /// Weight on the KL term at step `t = 1`.
    pub w1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaPriorConfig {
    pub layers: Vec<MetaPrior>,
}

impl MetaPriorConfig {
    pub fn new(layers: Vec<MetaPrior>) -> Result<Self> {
        let cfg = Self { layers };
        cfg.validate()?;
        Ok(cfg)
    }

    fn from_pairs(pairs: [(f64, f64); 5]) -> Self {
        Self {
            layers: pairs.iter().map(|&(w, w1)| MetaPrior { w, w1 }).collect(),
        }
    }

    /// Proprioception loosely weighted, vision tightly weighted.
    pub fn setting_w1() -> Self {
        Self::from_pairs([
            (0.0025, 0.01),
            (0.005, 0.01),
            (0.01, 0.01),
            (0.0025, 0.05),
            (0.005, 0.05),
        ])
    }

    /// The proprioception and vision values of [`setting_w1`](Self::setting_w1) exchanged.
    pub fn setting_w2() -> Self {
        Self::from_pairs([
            (0.0025, 0.01),
            (0.0025, 0.05),
            (0.005, 0.05),
            (0.005, 0.01),
            (0.01, 0.01),
        ])
    }

    /// Error-regression setting `W_k` (k = 1..=5): the `w1` training setting
    /// scaled by `10^(k-3)` in every layer, so `W_3` equals it.
    pub fn agency_setting(k: u32) -> Result<Self> {
        if !(1..=5).contains(&k) {
            return Err(PvrnnError::InvalidArgument(format!(
                "agency setting index must be 1..=5, got {k}"
            )));
        }
        Ok(Self::setting_w1().scaled(10f64.powi(k as i32 - 3)))
    }

    pub fn uniform(n_layers: usize, w: f64, w1: f64) -> Self {
        Self {
            layers: vec![MetaPrior { w, w1 }; n_layers],
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|m| MetaPrior {
                    w: m.w * factor,
                    w1: m.w1 * factor,
                })
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (i, m) in self.layers.iter().enumerate() {
            for v in [m.w, m.w1] {
                if !v.is_finite() || v < 0.0 {
                    return Err(PvrnnError::InvalidArgument(format!(
                        "meta-prior of layer {i} must be finite and non-negative, got {v}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Weight applied at the 1-based absolute step `t`.
    #[inline]
    pub fn weight(&self, layer: usize, t: usize) -> f64 {
        let m = self.layers[layer];
        if t == 1 {
            m.w1
        } else {
            m.w
        }
    }
}

/// `y = tanh(W d + b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputHead {
    pub w: Matrix,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub layers: Vec<LayerParams>,
    pub heads: Vec<OutputHead>,
}

impl ModelParams {
    pub fn zeros(spec: &NetworkSpec) -> Self {
        Self {
            layers: spec
                .layers
                .iter()
                .map(|n| LayerParams::zeros(&n.spec))
                .collect(),
            heads: spec
                .outputs
                .iter()
                .map(|o| OutputHead {
                    w: Matrix::zeros(o.dim, spec.layers[o.source].spec.dim_d),
                    b: vec![0.0; o.dim],
                })
                .collect(),
        }
    }

    pub fn random<R: Rng + ?Sized>(spec: &NetworkSpec, rng: &mut R) -> Self {
        Self {
            layers: spec
                .layers
                .iter()
                .map(|n| LayerParams::random(&n.spec, rng))
                .collect(),
            heads: spec
                .outputs
                .iter()
                .map(|o| OutputHead {
                    w: Matrix::uniform_fan_in(o.dim, spec.layers[o.source].spec.dim_d, rng),
                    b: vec![0.0; o.dim],
                })
                .collect(),
        }
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for l in &self.layers {
            out.extend(l.tensors());
        }
        for h in &self.heads {
            out.push(&h.w.data);
            out.push(&h.b);
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for l in &mut self.layers {
            out.extend(l.tensors_mut());
        }
        for h in &mut self.heads {
            out.push(&mut h.w.data);
            out.push(&mut h.b);
        }
        out
    }

    pub fn n_values(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }
}

/// Structure plus parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub spec: NetworkSpec,
    pub params: ModelParams,
}

impl Model {
    pub fn new(spec: NetworkSpec, params: ModelParams) -> Result<Self> {
        spec.validate()?;
        check_len("model layers", spec.layers.len(), params.layers.len())?;
        check_len("model heads", spec.outputs.len(), params.heads.len())?;
        Ok(Self { spec, params })
    }

    pub fn random<R: Rng + ?Sized>(spec: NetworkSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let params = ModelParams::random(&spec, rng);
        Ok(Self { spec, params })
    }
}

/// Adaptive offsets of every layer at one step.
pub type StepAdaptive = Vec<AdaptiveEntry>;

pub fn zero_step_adaptive(spec: &NetworkSpec) -> StepAdaptive {
    spec.layers
        .iter()
        .map(|n| AdaptiveEntry::zeros(n.spec.dim_z))
        .collect()
}

/// Adaptive variables indexed `[sequence][step][layer]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveField {
    pub sequences: Vec<Vec<StepAdaptive>>,
}

impl AdaptiveField {
    pub fn zeros(spec: &NetworkSpec, n_sequences: usize, steps: usize) -> Self {
        let step = zero_step_adaptive(spec);
        Self {
            sequences: vec![vec![step; steps]; n_sequences],
        }
    }
}

pub fn adaptive_tensors(steps: &[StepAdaptive]) -> Vec<&[f64]> {
    let mut out: Vec<&[f64]> = Vec::new();
    for s in steps {
        for e in s {
            out.push(&e.mu);
            out.push(&e.sigma);
        }
    }
    out
}

pub fn adaptive_tensors_mut(steps: &mut [StepAdaptive]) -> Vec<&mut [f64]> {
    let mut out: Vec<&mut [f64]> = Vec::new();
    for s in steps {
        for e in s {
            out.push(&mut e.mu);
            out.push(&mut e.sigma);
        }
    }
    out
}

/// States of every layer at one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkState {
    pub layers: Vec<LayerState>,
}

impl NetworkState {
    pub fn zeros(spec: &NetworkSpec) -> Self {
        Self {
            layers: spec
                .layers
                .iter()
                .map(|n| LayerState::zeros(n.spec.dim_d))
                .collect(),
        }
    }
}

/// Observations (or predictions) of every output channel at one step.
pub type Frame = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerStep {
    pub prior: DiagGaussian,
    /// Absent for prior-driven rollouts.
    pub posterior: Option<DiagGaussian>,
    pub eps: Vec<f64>,
    pub z: Vec<f64>,
    pub state: LayerState,
    /// KL(posterior ‖ prior); zero for prior-driven rollouts.
    pub kl: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub layers: Vec<LayerStep>,
    pub outputs: Frame,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutRecord {
    /// Absolute 1-based index of the first recorded step.
    pub start_t: usize,
    pub init: NetworkState,
    pub steps: Vec<StepRecord>,
}

impl RolloutRecord {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn final_state(&self) -> NetworkState {
        match self.steps.last() {
            Some(s) => NetworkState {
                layers: s.layers.iter().map(|l| l.state.clone()).collect(),
            },
            None => self.init.clone(),
        }
    }

    /// State entering relative step `k`.
    pub fn state_before(&self, k: usize) -> NetworkState {
        if k == 0 {
            self.init.clone()
        } else {
            NetworkState {
                layers: self.steps[k - 1]
                    .layers
                    .iter()
                    .map(|l| l.state.clone())
                    .collect(),
            }
        }
    }

    /// Noise consumed, indexed `[step][layer]`.
    pub fn noise(&self) -> Vec<Vec<Vec<f64>>> {
        self.steps
            .iter()
            .map(|s| s.layers.iter().map(|l| l.eps.clone()).collect())
            .collect()
    }

    pub fn is_posterior(&self) -> bool {
        self.steps
            .iter()
            .all(|s| s.layers.iter().all(|l| l.posterior.is_some()))
    }
}

fn check_state(spec: &NetworkSpec, state: &NetworkState) -> Result<()> {
    check_len("state layers", spec.n_layers(), state.layers.len())?;
    for (n, s) in spec.layers.iter().zip(&state.layers) {
        check_len("state h", n.spec.dim_d, s.h.len())?;
        check_len("state d", n.spec.dim_d, s.d.len())?;
    }
    Ok(())
}

fn check_adaptive(spec: &NetworkSpec, adaptive: &[StepAdaptive]) -> Result<()> {
    for step in adaptive {
        check_len("adaptive layers", spec.n_layers(), step.len())?;
        for (n, e) in spec.layers.iter().zip(step) {
            check_len("adaptive mu", n.spec.dim_z, e.mu.len())?;
            check_len("adaptive sigma", n.spec.dim_z, e.sigma.len())?;
        }
    }
    Ok(())
}

pub fn check_targets(spec: &NetworkSpec, targets: &[Frame]) -> Result<()> {
    for frame in targets {
        check_len("target channels", spec.outputs.len(), frame.len())?;
        for (o, v) in spec.outputs.iter().zip(frame) {
            check_len("target width", o.dim, v.len())?;
        }
    }
    Ok(())
}

fn emit_outputs(model: &Model, layers: &[LayerStep]) -> Frame {
    model
        .spec
        .outputs
        .iter()
        .zip(&model.params.heads)
        .map(|(o, head)| {
            let mut y = head.b.clone();
            head.w.matvec_add(&layers[o.source].state.d, &mut y);
            y.iter_mut().for_each(|v| *v = v.tanh());
            y
        })
        .collect()
}

/// One step through every layer. `a` selects posterior sampling.
fn advance(
    model: &Model,
    prev: &[LayerState],
    t_abs: usize,
    rel: usize,
    a: Option<&StepAdaptive>,
    noise: &mut dyn NoiseSource,
) -> StepRecord {
    let spec = &model.spec;
    let mut layers: Vec<LayerStep> = Vec::with_capacity(spec.n_layers());
    for (l, node) in spec.layers.iter().enumerate() {
        let params = &model.params.layers[l];
        let d_prev = &prev[l].d;
        let prior = if t_abs == 1 {
            unit_gaussian(node.spec.dim_z).expect("dim_z validated")
        } else {
            params.prior.eval(d_prev, None)
        };
        let posterior = a.map(|a| params.posterior.eval(d_prev, Some(&a[l])));
        let mut eps = vec![0.0; node.spec.dim_z];
        noise.fill(rel, l, &mut eps);
        let sampled = posterior.as_ref().unwrap_or(&prior);
        let z: Vec<f64> = sampled
            .mu
            .iter()
            .zip(&sampled.sigma)
            .zip(&eps)
            .map(|((m, s), e)| m + s * e)
            .collect();
        let topdown = node.parent.map(|p| layers[p].state.d.as_slice());
        let u = layer::drive(params, d_prev, topdown, &z);
        let state = layer::integrate(node.spec.tau, &prev[l].h, &u);
        let kl = posterior.as_ref().map_or(0.0, |q| kl_unchecked(q, &prior));
        layers.push(LayerStep {
            prior,
            posterior,
            eps,
            z,
            state,
            kl,
        });
    }
    let outputs = emit_outputs(model, &layers);
    StepRecord { layers, outputs }
}

/// Posterior-driven rollout from `init`, whose first step has absolute index `start_t`.
pub fn rollout_posterior(
    model: &Model,
    init: &NetworkState,
    start_t: usize,
    adaptive: &[StepAdaptive],
    noise: &mut dyn NoiseSource,
) -> Result<RolloutRecord> {
    if start_t == 0 {
        return Err(PvrnnError::InvalidArgument("time steps are 1-based".into()));
    }
    check_state(&model.spec, init)?;
    check_adaptive(&model.spec, adaptive)?;
    let mut steps: Vec<StepRecord> = Vec::with_capacity(adaptive.len());
    let mut prev = init.layers.clone();
    for (k, a) in adaptive.iter().enumerate() {
        let rec = advance(model, &prev, start_t + k, k, Some(a), noise);
        prev = rec.layers.iter().map(|l| l.state.clone()).collect();
        steps.push(rec);
    }
    Ok(RolloutRecord {
        start_t,
        init: init.clone(),
        steps,
    })
}

/// Full-sequence posterior rollout from the zero initial state.
pub fn forward_posterior(
    model: &Model,
    adaptive: &[StepAdaptive],
    targets: &[Frame],
    noise: &mut dyn NoiseSource,
) -> Result<RolloutRecord> {
    check_len("targets vs adaptive steps", adaptive.len(), targets.len())?;
    check_targets(&model.spec, targets)?;
    rollout_posterior(model, &NetworkState::zeros(&model.spec), 1, adaptive, noise)
}

/// Generation with the conditional prior for `horizon` steps after `init`.
/// Pass [`MeanMode`](crate::noise::MeanMode) to follow prior means.
pub fn forward_prior(
    model: &Model,
    init: &NetworkState,
    start_t: usize,
    horizon: usize,
    noise: &mut dyn NoiseSource,
) -> Result<RolloutRecord> {
    if horizon < 1 {
        return Err(PvrnnError::InvalidArgument("horizon must be >= 1".into()));
    }
    if start_t == 0 {
        return Err(PvrnnError::InvalidArgument("time steps are 1-based".into()));
    }
    check_state(&model.spec, init)?;
    let mut steps: Vec<StepRecord> = Vec::with_capacity(horizon);
    let mut prev = init.layers.clone();
    for k in 0..horizon {
        let rec = advance(model, &prev, start_t + k, k, None, noise);
        prev = rec.layers.iter().map(|l| l.state.clone()).collect();
        steps.push(rec);
    }
    Ok(RolloutRecord {
        start_t,
        init: init.clone(),
        steps,
    })
}

/// Components of the training cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    /// `Σ_t ||y - ȳ||² / (2 R)` per output channel.
    pub accuracy: Vec<f64>,
    /// `Σ_t (w / R_z) KL_t` per layer.
    pub complexity: Vec<f64>,
}

impl CostBreakdown {
    pub fn accuracy_total(&self) -> f64 {
        self.accuracy.iter().sum()
    }

    pub fn complexity_total(&self) -> f64 {
        self.complexity.iter().sum()
    }

    /// Dimension-normalized free energy. Apart from the `1/R` scalings and
    /// the dropped Gaussian log-normalizers this is `-L_w`.
    pub fn total(&self) -> f64 {
        self.accuracy_total() + self.complexity_total()
    }

    pub fn first_non_finite(&self, names: &[&str], outputs: &[&str]) -> Option<String> {
        for (v, n) in self.accuracy.iter().zip(outputs) {
            if !v.is_finite() {
                return Some(format!("accuracy[{n}]"));
            }
        }
        for (v, n) in self.complexity.iter().zip(names) {
            if !v.is_finite() {
                return Some(format!("complexity[{n}]"));
            }
        }
        None
    }
}

/// Squared error of each channel normalized by its dimension, `||y - ȳ||² / R`.
pub fn channel_errors(outputs: &Frame, target: &Frame) -> Vec<f64> {
    outputs
        .iter()
        .zip(target)
        .map(|(y, t)| squared_distance(y, t) / y.len() as f64)
        .collect()
}

pub fn evaluate_cost(
    record: &RolloutRecord,
    targets: &[Frame],
    meta: &MetaPriorConfig,
    spec: &NetworkSpec,
) -> Result<CostBreakdown> {
    check_len("targets vs record", record.len(), targets.len())?;
    check_targets(spec, targets)?;
    check_len("meta-prior layers", spec.n_layers(), meta.layers.len())?;
    if !record.is_posterior() {
        return Err(PvrnnError::InvalidArgument(
            "cost needs a posterior rollout".into(),
        ));
    }
    let mut accuracy = vec![0.0; spec.outputs.len()];
    let mut complexity = vec![0.0; spec.n_layers()];
    for (k, (step, target)) in record.steps.iter().zip(targets).enumerate() {
        for (acc, e) in accuracy
            .iter_mut()
            .zip(channel_errors(&step.outputs, target))
        {
            *acc += 0.5 * e;
        }
        let t_abs = record.start_t + k;
        for (l, ls) in step.layers.iter().enumerate() {
            complexity[l] += meta.weight(l, t_abs) / spec.dim_z(l) as f64 * ls.kl;
        }
    }
    Ok(CostBreakdown {
        accuracy,
        complexity,
    })
}
