//! Full-batch training of every parameter and the per-sequence adaptive
//! variables, plus seed replication.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{PvrnnError, Result};
use crate::grad::{adam_step, differentiate, AdamConfig, AdamState, Differentiated, Window};
use crate::harness::checkpoint::Checkpoint;
use crate::network::{
    adaptive_tensors, adaptive_tensors_mut, channel_errors, check_targets, AdaptiveField, Frame,
    MetaPriorConfig, Model, NetworkSpec, NetworkState,
};
use crate::noise::{rng_for, GaussianNoise};

const INIT_STREAM: u64 = 0x1417;
const NOISE_STREAM: u64 = 0x2018;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    pub meta: MetaPriorConfig,
    /// Progress line on stderr every `log_every` epochs; `0` is silent.
    pub log_every: usize,
}

impl TrainConfig {
    pub fn new(epochs: usize, seed: u64, meta: MetaPriorConfig) -> Self {
        Self {
            epochs,
            adam: AdamConfig::default(),
            seed,
            meta,
            log_every: 0,
        }
    }
}

/// Per-epoch learning-curve point. Errors are `Σ_{s,t} ||y - ȳ||² / R` per
/// output channel; KLs are `Σ_{s,t} KL / R_z` per layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub cost: f64,
    pub pred_err: Vec<f64>,
    pub kl: Vec<f64>,
}

impl EpochMetrics {
    pub fn pred_err_proprio(&self) -> f64 {
        self.pred_err[crate::network::PROPRIO]
    }

    pub fn pred_err_vision(&self) -> f64 {
        self.pred_err[crate::network::VISION]
    }

    /// Columns in table order: errors then KLs.
    pub fn columns(&self) -> Vec<f64> {
        self.pred_err.iter().chain(&self.kl).copied().collect()
    }
}

/// Owns the state of one training run between epochs.
pub struct Trainer {
    model: Model,
    adaptive: AdaptiveField,
    targets: Vec<Vec<Frame>>,
    config: TrainConfig,
    adam_params: AdamState,
    adam_adaptive: AdamState,
    epoch: usize,
}

impl Trainer {
    pub fn new(spec: NetworkSpec, targets: Vec<Vec<Frame>>, config: TrainConfig) -> Result<Self> {
        if targets.is_empty() {
            return Err(PvrnnError::InvalidArgument("dataset is empty".into()));
        }
        let len = targets[0].len();
        if len == 0 || targets.iter().any(|s| s.len() != len) {
            return Err(PvrnnError::InvalidArgument(
                "sequences must be non-empty and of equal length".into(),
            ));
        }
        for s in &targets {
            check_targets(&spec, s)?;
        }
        crate::error::check_len(
            "meta-prior layers",
            spec.n_layers(),
            config.meta.layers.len(),
        )?;
        config.meta.validate()?;
        if config.epochs == 0 {
            return Err(PvrnnError::InvalidArgument("epochs must be >= 1".into()));
        }
        let model = Model::random(spec.clone(), &mut rng_for(config.seed, &[INIT_STREAM]))?;
        let adaptive = AdaptiveField::zeros(&spec, targets.len(), len);
        Ok(Self::resume(model, adaptive, targets, config))
    }

    /// Continue from existing parameters with fresh optimizer moments.
    pub fn resume(
        model: Model,
        adaptive: AdaptiveField,
        targets: Vec<Vec<Frame>>,
        config: TrainConfig,
    ) -> Self {
        let adam_params = AdamState::new(config.adam, &model.params.tensors());
        let all_a: Vec<&[f64]> = adaptive
            .sequences
            .iter()
            .flat_map(|s| adaptive_tensors(s))
            .collect();
        let adam_adaptive = AdamState::new(config.adam, &all_a);
        Self {
            model,
            adaptive,
            targets,
            config,
            adam_params,
            adam_adaptive,
            epoch: 0,
        }
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn adaptive(&self) -> &AdaptiveField {
        &self.adaptive
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    /// Forward and backward over every sequence with fresh noise, then one
    /// Adam update. The returned metrics describe the pre-update pass.
    pub fn step(&mut self) -> Result<EpochMetrics> {
        let epoch = self.epoch;
        let seed = self.config.seed;
        let init = NetworkState::zeros(&self.model.spec);
        let model = &self.model;
        let meta = &self.config.meta;
        let passes: Vec<Result<Differentiated>> = self
            .adaptive
            .sequences
            .par_iter()
            .zip(self.targets.par_iter())
            .enumerate()
            .map(|(s, (a, targets))| {
                let mut noise =
                    GaussianNoise::from_rng(rng_for(seed, &[NOISE_STREAM, epoch as u64, s as u64]));
                let window = Window {
                    init: &init,
                    start_t: 1,
                    adaptive: a,
                    targets,
                };
                differentiate(model, meta, window, &mut noise, true)
            })
            .collect();

        let spec = &self.model.spec;
        let mut metrics = EpochMetrics {
            epoch,
            cost: 0.0,
            pred_err: vec![0.0; spec.outputs.len()],
            kl: vec![0.0; spec.n_layers()],
        };
        let mut param_grad: Option<crate::network::ModelParams> = None;
        let mut adaptive_grads = Vec::with_capacity(passes.len());
        let layer_names = spec.layer_names();
        let output_names: Vec<&str> = spec.outputs.iter().map(|o| o.name.as_str()).collect();
        for (s, pass) in passes.into_iter().enumerate() {
            let pass = pass?;
            if let Some(component) = pass.cost.first_non_finite(&layer_names, &output_names) {
                return Err(PvrnnError::NonFinite {
                    component,
                    location: format!("epoch {epoch}, sequence {s}"),
                });
            }
            metrics.cost += pass.cost.total();
            for (step, target) in pass.record.steps.iter().zip(&self.targets[s]) {
                for (acc, e) in metrics
                    .pred_err
                    .iter_mut()
                    .zip(channel_errors(&step.outputs, target))
                {
                    *acc += e;
                }
                for (l, ls) in step.layers.iter().enumerate() {
                    metrics.kl[l] += ls.kl / spec.dim_z(l) as f64;
                }
            }
            let grads = pass.grads;
            if !grads.is_finite() {
                return Err(PvrnnError::NonFinite {
                    component: "gradient".into(),
                    location: format!("epoch {epoch}, sequence {s}"),
                });
            }
            let p = grads.params.expect("parameter gradients requested");
            match param_grad.as_mut() {
                None => param_grad = Some(p),
                Some(acc) => {
                    for (x, y) in acc.tensors_mut().into_iter().zip(p.tensors()) {
                        crate::linalg::add_assign(x, y);
                    }
                }
            }
            adaptive_grads.push(grads.adaptive);
        }

        let param_grad = param_grad.expect("non-empty dataset");
        adam_step(
            &mut self.adam_params,
            self.model.params.tensors_mut(),
            param_grad.tensors(),
        )?;
        let values: Vec<&mut [f64]> = self
            .adaptive
            .sequences
            .iter_mut()
            .flat_map(|s| adaptive_tensors_mut(s))
            .collect();
        let grads: Vec<&[f64]> = adaptive_grads
            .iter()
            .flat_map(|g| adaptive_tensors(g))
            .collect();
        adam_step(&mut self.adam_adaptive, values, grads)?;

        self.epoch += 1;
        if self.config.log_every > 0 && epoch % self.config.log_every == 0 {
            eprintln!(
                "seed {} epoch {epoch}: cost {:.6e} err {:?} kl {:?}",
                seed, metrics.cost, metrics.pred_err, metrics.kl
            );
        }
        Ok(metrics)
    }

    pub fn into_checkpoint(self) -> Checkpoint {
        Checkpoint::new(self.model, self.adaptive, self.config)
    }
}

/// Train for `config.epochs` epochs from a seeded initialization.
pub fn train(
    spec: NetworkSpec,
    targets: Vec<Vec<Frame>>,
    config: TrainConfig,
) -> Result<(Checkpoint, Vec<EpochMetrics>)> {
    let epochs = config.epochs;
    let mut trainer = Trainer::new(spec, targets, config)?;
    let mut trace = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        trace.push(trainer.step()?);
    }
    Ok((trainer.into_checkpoint(), trace))
}

/// Per-epoch mean and sample standard deviation across seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replication {
    pub seeds: Vec<u64>,
    pub mean: Vec<EpochMetrics>,
    pub std: Vec<EpochMetrics>,
}

pub struct ReplicatedRun {
    pub checkpoints: Vec<Checkpoint>,
    pub traces: Vec<Vec<EpochMetrics>>,
    pub summary: Replication,
}

/// Train once per seed (in parallel) and aggregate the learning curves.
pub fn replicate(
    spec: &NetworkSpec,
    targets: &[Vec<Frame>],
    config: &TrainConfig,
    seeds: &[u64],
) -> Result<ReplicatedRun> {
    if seeds.len() < 2 {
        return Err(PvrnnError::InvalidArgument(
            "replication needs at least two seeds".into(),
        ));
    }
    let runs: Vec<Result<(Checkpoint, Vec<EpochMetrics>)>> = seeds
        .par_iter()
        .map(|&seed| {
            let cfg = TrainConfig {
                seed,
                ..config.clone()
            };
            train(spec.clone(), targets.to_vec(), cfg)
        })
        .collect();
    let mut checkpoints = Vec::with_capacity(seeds.len());
    let mut traces = Vec::with_capacity(seeds.len());
    for r in runs {
        let (c, t) = r?;
        checkpoints.push(c);
        traces.push(t);
    }
    let summary = aggregate_traces(seeds, &traces);
    Ok(ReplicatedRun {
        checkpoints,
        traces,
        summary,
    })
}

pub fn aggregate_traces(seeds: &[u64], traces: &[Vec<EpochMetrics>]) -> Replication {
    let epochs = traces.iter().map(Vec::len).min().unwrap_or(0);
    let mut mean = Vec::with_capacity(epochs);
    let mut std = Vec::with_capacity(epochs);
    for e in 0..epochs {
        let points: Vec<&EpochMetrics> = traces.iter().map(|t| &t[e]).collect();
        let reduce = |pick: &dyn Fn(&EpochMetrics) -> Vec<f64>| -> (Vec<f64>, Vec<f64>) {
            let cols: Vec<Vec<f64>> = points.iter().map(|p| pick(p)).collect();
            let width = cols[0].len();
            (0..width)
                .map(|j| {
                    let xs: Vec<f64> = cols.iter().map(|c| c[j]).collect();
                    (
                        crate::harness::stats::mean(&xs),
                        crate::harness::stats::sample_std(&xs),
                    )
                })
                .unzip()
        };
        let (cost_m, cost_s) = reduce(&|p| vec![p.cost]);
        let (err_m, err_s) = reduce(&|p| p.pred_err.clone());
        let (kl_m, kl_s) = reduce(&|p| p.kl.clone());
        mean.push(EpochMetrics {
            epoch: e,
            cost: cost_m[0],
            pred_err: err_m,
            kl: kl_m,
        });
        std.push(EpochMetrics {
            epoch: e,
            cost: cost_s[0],
            pred_err: err_s,
            kl: kl_s,
        });
    }
    Replication {
        seeds: seeds.to_vec(),
        mean,
        std,
    }
}

/// Tab-separated learning curve: `epoch`, one error column per output, one KL column per layer.
pub fn metrics_table(spec: &NetworkSpec, trace: &[EpochMetrics]) -> String {
    let mut out = String::from("epoch");
    for o in &spec.outputs {
        out.push_str(&format!("\tpred_err_{}", o.name));
    }
    for l in &spec.layers {
        out.push_str(&format!("\tkl_{}", l.name));
    }
    out.push('\n');
    for m in trace {
        out.push_str(&m.epoch.to_string());
        for v in m.columns() {
            out.push('\t');
            out.push_str(&crate::harness::report::fmt_num(v));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::MetaPrior;

    fn toy_targets(n_seq: usize, len: usize) -> Vec<Vec<Frame>> {
        (0..n_seq)
            .map(|s| {
                (0..len)
                    .map(|t| vec![vec![0.5 * ((t + s) as f64 * 0.4).sin(), 0.3]])
                    .collect()
            })
            .collect()
    }

    fn toy_spec() -> NetworkSpec {
        NetworkSpec::chain(&[(4, 1, 4.0), (6, 2, 2.0)], 2).unwrap()
    }

    #[test]
    fn rejects_bad_inputs() {
        let meta = MetaPriorConfig::uniform(2, 0.01, 0.01);
        assert!(Trainer::new(toy_spec(), vec![], TrainConfig::new(1, 0, meta.clone())).is_err());
        let mut ragged = toy_targets(2, 5);
        ragged[1].pop();
        assert!(Trainer::new(toy_spec(), ragged, TrainConfig::new(1, 0, meta.clone())).is_err());
        assert!(Trainer::new(toy_spec(), toy_targets(1, 5), TrainConfig::new(0, 0, meta)).is_err());
        let short = MetaPriorConfig::uniform(1, 0.01, 0.01);
        assert!(
            Trainer::new(toy_spec(), toy_targets(1, 5), TrainConfig::new(1, 0, short)).is_err()
        );
    }

    #[test]
    fn same_seed_gives_identical_traces() {
        let cfg = TrainConfig::new(5, 7, MetaPriorConfig::uniform(2, 0.01, 0.05));
        let (c1, t1) = train(toy_spec(), toy_targets(2, 8), cfg.clone()).unwrap();
        let (c2, t2) = train(toy_spec(), toy_targets(2, 8), cfg).unwrap();
        assert_eq!(t1, t2);
        assert_eq!(c1.params, c2.params);
    }

    #[test]
    fn replicate_with_identical_seeds_has_zero_spread() {
        let cfg = TrainConfig::new(3, 0, MetaPriorConfig::uniform(2, 0.01, 0.05));
        let run = replicate(&toy_spec(), &toy_targets(2, 6), &cfg, &[4, 4]).unwrap();
        for s in &run.summary.std {
            assert!(s.columns().iter().all(|v| *v == 0.0));
        }
        assert!(replicate(&toy_spec(), &toy_targets(2, 6), &cfg, &[4]).is_err());
    }

    #[test]
    fn replicate_mean_ignores_seed_order() {
        let cfg = TrainConfig::new(3, 0, MetaPriorConfig::uniform(2, 0.01, 0.05));
        let a = replicate(&toy_spec(), &toy_targets(2, 6), &cfg, &[1, 2, 3]).unwrap();
        let b = replicate(&toy_spec(), &toy_targets(2, 6), &cfg, &[3, 1, 2]).unwrap();
        for (x, y) in a.summary.mean.iter().zip(&b.summary.mean) {
            for (u, v) in x.columns().iter().zip(y.columns()) {
                assert!((u - v).abs() <= 1e-12 * u.abs().max(1.0));
            }
        }
    }

    #[test]
    fn non_finite_cost_names_component() {
        let meta = MetaPriorConfig::new(vec![
            MetaPrior { w: 0.01, w1: 0.01 },
            MetaPrior { w: 0.01, w1: 0.01 },
        ])
        .unwrap();
        let mut trainer =
            Trainer::new(toy_spec(), toy_targets(1, 4), TrainConfig::new(2, 0, meta)).unwrap();
        trainer.adaptive.sequences[0][2][1].sigma[0] = 800.0;
        match trainer.step() {
            Err(PvrnnError::NonFinite {
                component,
                location,
            }) => {
                assert!(
                    component.contains("layer1") || component.contains("out"),
                    "{component}"
                );
                assert!(location.contains("epoch 0"));
            }
            other => panic!("expected non-finite error, got {other:?}"),
        }
    }

    #[test]
    fn metrics_table_layout() {
        let cfg = TrainConfig::new(2, 1, MetaPriorConfig::uniform(2, 0.01, 0.05));
        let (_, trace) = train(toy_spec(), toy_targets(1, 4), cfg).unwrap();
        let table = metrics_table(&toy_spec(), &trace);
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines[0], "epoch\tpred_err_out\tkl_layer0\tkl_layer1");
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[1].split('\t').count(), 4);
    }
}
