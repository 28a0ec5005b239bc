//! Online inference of the adaptive variables over a window of recent steps.
//!
//! Each incoming observation is appended to the window; the adaptive
//! variables of the window are then refined for a fixed number of
//! forward/backward iterations with the weights frozen, and the prior is
//! rolled one step past the window to predict the next observation.

use serde::{Deserialize, Serialize};

use crate::datagen::Primitive;
use crate::error::{check_len, PvrnnError, Result};
use crate::grad::{adam_step, differentiate, AdamConfig, AdamState, Window};
use crate::harness::report::fmt_num;
use crate::harness::stats::mean;
use crate::network::{
    adaptive_tensors, adaptive_tensors_mut, channel_errors, check_targets, evaluate_cost,
    forward_prior, rollout_posterior, zero_step_adaptive, Frame, MetaPriorConfig, Model,
    NetworkSpec, NetworkState, RolloutRecord, StepAdaptive,
};
use crate::noise::{rng_for, GaussianNoise, MeanMode, NoiseSource};

const ER_STREAM: u64 = 0x4552;
const PREDICTION_STREAM: u64 = 0x5052;

/// Noise driving the posterior samples of the inner iterations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InnerNoise {
    /// A new draw at every iteration.
    Fresh,
    /// One draw per step, shared by all of its iterations.
    PerStep,
    /// Posterior means only.
    Mean,
}

impl InnerNoise {
    /// Noise for iteration `iter` of step `t`. Iteration 0 also defines the
    /// draw under which the window cost and metrics are evaluated.
    pub fn source(self, seed: u64, t: usize, iter: usize) -> Box<dyn NoiseSource> {
        match self {
            InnerNoise::Fresh => Box::new(GaussianNoise::from_rng(rng_for(
                seed,
                &[ER_STREAM, t as u64, iter as u64],
            ))),
            InnerNoise::PerStep => Box::new(GaussianNoise::from_rng(rng_for(
                seed,
                &[ER_STREAM, t as u64, 0],
            ))),
            InnerNoise::Mean => Box::new(MeanMode),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ERConfig {
    pub window_len: usize,
    pub iters_per_step: usize,
    pub adam: AdamConfig,
    pub meta: MetaPriorConfig,
    pub inner_noise: InnerNoise,
    /// Sample the next-step prediction from the prior instead of using its mean.
    pub sampled_prediction: bool,
    /// Keep the final window rollout of every step.
    pub keep_records: bool,
}

impl ERConfig {
    pub fn new(meta: MetaPriorConfig) -> Self {
        Self {
            window_len: 30,
            iters_per_step: 30,
            adam: AdamConfig::with_alpha(0.2),
            meta,
            inner_noise: InnerNoise::PerStep,
            sampled_prediction: false,
            keep_records: false,
        }
    }

    pub fn validate(&self, spec: &NetworkSpec) -> Result<()> {
        if self.window_len < 1 {
            return Err(PvrnnError::InvalidArgument(
                "window_len must be >= 1".into(),
            ));
        }
        check_len("meta-prior layers", spec.n_layers(), self.meta.layers.len())?;
        self.meta.validate()
    }
}

/// Sliding-window inference state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ERWindow {
    /// Observations absorbed so far.
    pub t: usize,
    /// State at the step before the window.
    pub entry: NetworkState,
    /// Absolute index of the first window step.
    pub start_t: usize,
    pub targets: Vec<Frame>,
    pub adaptive: Vec<StepAdaptive>,
    /// Prediction of the next observation.
    pub pending: Frame,
    seed: u64,
}

impl ERWindow {
    pub fn new(model: &Model, config: &ERConfig, seed: u64) -> Result<Self> {
        config.validate(&model.spec)?;
        let entry = NetworkState::zeros(&model.spec);
        let pending = predict(model, config, &entry, 1, seed, 0)?;
        Ok(Self {
            t: 0,
            entry,
            start_t: 1,
            targets: Vec::new(),
            adaptive: Vec::new(),
            pending,
            seed,
        })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

fn predict(
    model: &Model,
    config: &ERConfig,
    state: &NetworkState,
    t_abs: usize,
    seed: u64,
    step: usize,
) -> Result<Frame> {
    let rollout = if config.sampled_prediction {
        let mut noise = GaussianNoise::from_rng(rng_for(seed, &[PREDICTION_STREAM, step as u64]));
        forward_prior(model, state, t_abs, 1, &mut noise)?
    } else {
        forward_prior(model, state, t_abs, 1, &mut MeanMode)?
    };
    Ok(rollout.steps[0].outputs.clone())
}

/// Window means of the reconstruction error and KL, plus the one-step error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub t: usize,
    /// Per output channel, `||y - ȳ||² / R` averaged over the window.
    pub recon_err: Vec<f64>,
    /// Per layer, `KL / R_z` averaged over the window.
    pub kld: Vec<f64>,
    /// Per output channel, error of the previous prediction against this observation.
    pub one_step_err: Vec<f64>,
    /// Weighted window cost after the final iteration.
    pub window_cost: f64,
}

impl StepMetrics {
    pub fn recon_err_proprio(&self) -> f64 {
        self.recon_err[0]
    }

    pub fn recon_err_vision(&self) -> f64 {
        self.recon_err[1]
    }

    pub fn one_step_err_proprio(&self) -> f64 {
        self.one_step_err[0]
    }

    pub fn one_step_err_vision(&self) -> f64 {
        self.one_step_err[1]
    }

    pub fn recon_total(&self) -> f64 {
        self.recon_err.iter().sum()
    }

    pub fn kld_total(&self) -> f64 {
        self.kld.iter().sum()
    }

    pub fn is_valid(&self) -> bool {
        self.recon_err
            .iter()
            .chain(&self.kld)
            .chain(&self.one_step_err)
            .all(|v| v.is_finite() && *v >= 0.0)
            && self.window_cost.is_finite()
    }

    fn columns(&self) -> impl Iterator<Item = f64> + '_ {
        self.recon_err
            .iter()
            .chain(&self.kld)
            .chain(&self.one_step_err)
            .copied()
            .chain(std::iter::once(self.window_cost))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub prediction: Frame,
    pub metrics: StepMetrics,
    /// Mean-mode window cost before the first iteration.
    pub cost_before: f64,
    /// Mean-mode window cost after the last iteration.
    pub cost_after: f64,
    pub record: RolloutRecord,
}

fn check_observation(spec: &NetworkSpec, obs: &Frame) -> Result<()> {
    check_targets(spec, std::slice::from_ref(obs))?;
    if obs
        .iter()
        .flatten()
        .any(|v| !v.is_finite() || v.abs() > 1.0)
    {
        return Err(PvrnnError::InvalidArgument(
            "observations must lie in [-1, 1]".into(),
        ));
    }
    Ok(())
}

fn window_cost(
    model: &Model,
    config: &ERConfig,
    window: &ERWindow,
) -> Result<(RolloutRecord, f64)> {
    let mut noise = config.inner_noise.source(window.seed, window.t, 0);
    let record = rollout_posterior(
        model,
        &window.entry,
        window.start_t,
        &window.adaptive,
        noise.as_mut(),
    )?;
    let cost = evaluate_cost(&record, &window.targets, &config.meta, &model.spec)?;
    Ok((record, cost.total()))
}

/// Absorb one observation and refine the window.
pub fn er_step(
    model: &Model,
    config: &ERConfig,
    window: &mut ERWindow,
    obs: Frame,
) -> Result<StepOutcome> {
    let spec = &model.spec;
    check_observation(spec, &obs)?;
    let one_step_err = channel_errors(&window.pending, &obs);

    window.t += 1;
    window.targets.push(obs);
    window.adaptive.push(zero_step_adaptive(spec));
    if window.targets.len() > config.window_len {
        // The oldest step leaves the window; its posterior mean fixes the new entry state.
        let evicted = rollout_posterior(
            model,
            &window.entry,
            window.start_t,
            &window.adaptive[..1],
            &mut MeanMode,
        )?;
        window.entry = evicted.final_state();
        window.start_t += 1;
        window.targets.remove(0);
        window.adaptive.remove(0);
    }

    let (_, cost_before) = window_cost(model, config, window)?;
    let mut adam = AdamState::new(config.adam, &adaptive_tensors(&window.adaptive));
    for iter in 0..config.iters_per_step {
        let mut noise = config.inner_noise.source(window.seed, window.t, iter);
        let d = differentiate(
            model,
            &config.meta,
            Window {
                init: &window.entry,
                start_t: window.start_t,
                adaptive: &window.adaptive,
                targets: &window.targets,
            },
            noise.as_mut(),
            false,
        )?;
        let names = spec.layer_names();
        let outputs: Vec<&str> = spec.outputs.iter().map(|o| o.name.as_str()).collect();
        if let Some(component) = d.cost.first_non_finite(&names, &outputs) {
            return Err(PvrnnError::NonFinite {
                component,
                location: format!("er step t={} iteration {iter}", window.t),
            });
        }
        if !d.grads.is_finite() {
            return Err(PvrnnError::NonFinite {
                component: "adaptive gradient".into(),
                location: format!("er step t={} iteration {iter}", window.t),
            });
        }
        let grads: Vec<Vec<f64>> = d.grads.tensors().iter().map(|g| g.to_vec()).collect();
        adam_step(
            &mut adam,
            adaptive_tensors_mut(&mut window.adaptive),
            grads.iter().map(|g| g.as_slice()).collect(),
        )?;
    }

    let (record, cost_after) = window_cost(model, config, window)?;
    let n = record.len() as f64;
    let mut recon_err = vec![0.0; spec.outputs.len()];
    let mut kld = vec![0.0; spec.n_layers()];
    for (step, target) in record.steps.iter().zip(&window.targets) {
        for (acc, e) in recon_err
            .iter_mut()
            .zip(channel_errors(&step.outputs, target))
        {
            *acc += e / n;
        }
        for (l, ls) in step.layers.iter().enumerate() {
            kld[l] += ls.kl / spec.dim_z(l) as f64 / n;
        }
    }
    let metrics = StepMetrics {
        t: window.t,
        recon_err,
        kld,
        one_step_err,
        window_cost: cost_after,
    };
    if !metrics.is_valid() {
        return Err(PvrnnError::NonFinite {
            component: "window metrics".into(),
            location: format!("er step t={}", window.t),
        });
    }

    let prediction = predict(
        model,
        config,
        &record.final_state(),
        window.t + 1,
        window.seed,
        window.t,
    )?;
    window.pending = prediction.clone();
    Ok(StepOutcome {
        prediction,
        metrics,
        cost_before,
        cost_after,
        record,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Interaction {
    pub metrics: Vec<StepMetrics>,
    pub cost_before: Vec<f64>,
    pub cost_after: Vec<f64>,
    /// `predictions[k]` is the prediction made after step `k + 1` for step `k + 2`.
    pub predictions: Vec<Frame>,
    /// Final window rollouts, present when `keep_records` is set.
    pub records: Vec<RolloutRecord>,
    pub summary: RunSummary,
}

/// Means over all steps of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub recon_err: Vec<f64>,
    pub kld: Vec<f64>,
    pub one_step_err: Vec<f64>,
}

impl RunSummary {
    pub fn of(metrics: &[StepMetrics]) -> Self {
        let col = |f: &dyn Fn(&StepMetrics) -> &Vec<f64>, i: usize| -> f64 {
            mean(&metrics.iter().map(|m| f(m)[i]).collect::<Vec<_>>())
        };
        let dims =
            |f: &dyn Fn(&StepMetrics) -> &Vec<f64>| metrics.first().map_or(0, |m| f(m).len());
        let build =
            |f: &dyn Fn(&StepMetrics) -> &Vec<f64>| (0..dims(f)).map(|i| col(f, i)).collect();
        Self {
            recon_err: build(&|m| &m.recon_err),
            kld: build(&|m| &m.kld),
            one_step_err: build(&|m| &m.one_step_err),
        }
    }

    /// Averages of several summaries.
    pub fn average(runs: &[RunSummary]) -> Self {
        let avg = |f: &dyn Fn(&RunSummary) -> &Vec<f64>| -> Vec<f64> {
            let n = runs.first().map_or(0, |r| f(r).len());
            (0..n)
                .map(|i| mean(&runs.iter().map(|r| f(r)[i]).collect::<Vec<_>>()))
                .collect()
        };
        Self {
            recon_err: avg(&|r| &r.recon_err),
            kld: avg(&|r| &r.kld),
            one_step_err: avg(&|r| &r.one_step_err),
        }
    }

    pub fn recon_total(&self) -> f64 {
        self.recon_err.iter().sum()
    }

    pub fn kld_total(&self) -> f64 {
        self.kld.iter().sum()
    }
}

/// Stream a whole sequence through [`er_step`].
pub fn run_interaction(
    model: &Model,
    sequence: &[Frame],
    config: &ERConfig,
    seed: u64,
) -> Result<Interaction> {
    if sequence.len() < config.window_len + 1 {
        return Err(PvrnnError::InvalidArgument(format!(
            "sequence of {} steps is shorter than window_len + 1 = {}",
            sequence.len(),
            config.window_len + 1
        )));
    }
    check_targets(&model.spec, sequence)?;
    let mut window = ERWindow::new(model, config, seed)?;
    let mut out = Interaction {
        metrics: Vec::with_capacity(sequence.len()),
        cost_before: Vec::with_capacity(sequence.len()),
        cost_after: Vec::with_capacity(sequence.len()),
        predictions: Vec::with_capacity(sequence.len()),
        records: Vec::new(),
        summary: RunSummary {
            recon_err: vec![],
            kld: vec![],
            one_step_err: vec![],
        },
    };
    for obs in sequence {
        let step = er_step(model, config, &mut window, obs.clone())?;
        out.metrics.push(step.metrics);
        out.cost_before.push(step.cost_before);
        out.cost_after.push(step.cost_after);
        out.predictions.push(step.prediction);
        if config.keep_records {
            out.records.push(step.record);
        }
    }
    out.summary = RunSummary::of(&out.metrics);
    Ok(out)
}

/// Share of steps whose window cost did not increase across the iterations.
pub fn non_increase_fraction(interaction: &Interaction) -> f64 {
    let ok = interaction
        .cost_before
        .iter()
        .zip(&interaction.cost_after)
        .filter(|(b, a)| a <= b)
        .count();
    ok as f64 / interaction.cost_before.len().max(1) as f64
}

/// Step-metric series as tab-separated text: `t` followed by ten metric columns.
pub fn metrics_table(spec: &NetworkSpec, metrics: &[StepMetrics]) -> String {
    let mut header = vec!["t".to_string()];
    header.extend(spec.outputs.iter().map(|o| format!("recon_err_{}", o.name)));
    header.extend(spec.layers.iter().map(|l| format!("kld_{}", l.name)));
    header.extend(
        spec.outputs
            .iter()
            .map(|o| format!("one_step_err_{}", o.name)),
    );
    header.push("window_cost".into());
    let mut out = header.join("\t");
    out.push('\n');
    for m in metrics {
        out.push_str(&m.t.to_string());
        for v in m.columns() {
            out.push('\t');
            out.push_str(&fmt_num(v));
        }
        out.push('\n');
    }
    out
}

/// One-step error around a primitive boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionEvent {
    /// 1-based step of the first frame of the new primitive.
    pub t: usize,
    pub from: Primitive,
    pub to: Primitive,
    pub baseline: f64,
    pub peak: f64,
    pub spike: bool,
}

/// Locate boundaries in `labels` (one per step) and compare the peak of
/// `series` in `[t, t + horizon)` with the median over the `horizon` steps
/// before it. A spike is a peak above `factor` times that baseline.
pub fn transition_events(
    labels: &[Primitive],
    series: &[f64],
    horizon: usize,
    factor: f64,
) -> Vec<TransitionEvent> {
    let mut events = Vec::new();
    for k in 1..labels.len().min(series.len()) {
        if labels[k] == labels[k - 1] || k < horizon || k + horizon > series.len() {
            continue;
        }
        let mut before: Vec<f64> = series[k - horizon..k].to_vec();
        before.sort_by(f64::total_cmp);
        let baseline = before[before.len() / 2];
        let peak = series[k..k + horizon]
            .iter()
            .copied()
            .fold(f64::MIN, f64::max);
        events.push(TransitionEvent {
            t: k + 1,
            from: labels[k - 1],
            to: labels[k],
            baseline,
            peak,
            spike: peak > factor * baseline,
        });
    }
    events
}

/// Fraction of `A -> B` / `A -> C` events flagged as spikes.
pub fn branch_spike_fraction(events: &[TransitionEvent]) -> f64 {
    let branch: Vec<_> = events
        .iter()
        .filter(|e| e.from == Primitive::A && e.to != Primitive::A)
        .collect();
    if branch.is_empty() {
        return 0.0;
    }
    branch.iter().filter(|e| e.spike).count() as f64 / branch.len() as f64
}
