//! Experiment 1 (training meta-prior settings) and experiment 2
//! (error-regression meta-prior scaling).
//!
//! The `run_*` functions work on in-memory data; [`exp1`] and [`exp2`] add
//! the run-directory bookkeeping used by the command-line tool.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::{build_dataset, Primitive, SequenceDataset};
use crate::error::{PvrnnError, Result};
use crate::error_regression::{
    branch_spike_fraction, metrics_table as er_table, run_interaction, transition_events, ERConfig,
    Interaction, RunSummary,
};
use crate::harness::checkpoint::{Checkpoint, CHECKPOINT_VERSION};
use crate::harness::config::{RunConfig, Setting};
use crate::harness::io::{load_dataset, save_dataset, write_text, DATASET_VERSION};
use crate::harness::report::{
    Condition, DirectionCheck, ExperimentReport, SeedRow, REPORT_VERSION,
};
use crate::harness::stats::{mean, spearman, strictly_decreasing, strictly_increasing};
use crate::network::{MetaPriorConfig, Model, NetworkSpec};
use crate::noise::derive_seed;
use crate::training::{aggregate_traces, metrics_table, train, EpochMetrics};

const ER_SEED_TAG: u64 = 0x4552_5345;
/// Steps after a boundary searched for a one-step error peak.
pub const SPIKE_HORIZON: usize = 5;
/// Peak-to-baseline ratio that counts as a spike.
pub const SPIKE_FACTOR: f64 = 2.0;

/// Report columns, in order.
pub fn quantity_names(spec: &NetworkSpec) -> Vec<String> {
    let mut q: Vec<String> = spec
        .outputs
        .iter()
        .map(|o| format!("recon_err_{}", o.name))
        .collect();
    q.extend(spec.layers.iter().map(|l| format!("kld_{}", l.name)));
    q.extend(
        spec.outputs
            .iter()
            .map(|o| format!("one_step_err_{}", o.name)),
    );
    q.push("recon_total".into());
    q.push("kld_total".into());
    q
}

pub fn quantity_values(s: &RunSummary) -> Vec<f64> {
    let mut v = s.recon_err.clone();
    v.extend(&s.kld);
    v.extend(&s.one_step_err);
    v.push(s.recon_total());
    v.push(s.kld_total());
    v
}

/// Seed of the error-regression run of `model_seed` on test sequence `index`.
pub fn er_seed(model_seed: u64, index: usize) -> u64 {
    derive_seed(model_seed, &[ER_SEED_TAG, index as u64])
}

/// Error regression over every test sequence; the summary averages them.
pub fn evaluate_model(
    model: &Model,
    test: &SequenceDataset,
    er: &ERConfig,
    model_seed: u64,
) -> Result<(RunSummary, Vec<Interaction>)> {
    let runs: Vec<Interaction> = test
        .frames()
        .iter()
        .enumerate()
        .map(|(i, seq)| run_interaction(model, seq, er, er_seed(model_seed, i)))
        .collect::<Result<_>>()?;
    let summaries: Vec<RunSummary> = runs.iter().map(|r| r.summary.clone()).collect();
    Ok((RunSummary::average(&summaries), runs))
}

/// Per-step primitive labels of a sequence.
pub fn step_labels(test: &SequenceDataset, index: usize) -> Vec<Primitive> {
    let steps = test.fsm.steps_per_primitive;
    test.sequences[index]
        .labels
        .iter()
        .flat_map(|&l| std::iter::repeat_n(l, steps))
        .collect()
}

/// Load the corpus from the run directory, generating it when absent.
pub fn prepare_data(cfg: &RunConfig) -> Result<(SequenceDataset, SequenceDataset)> {
    let dir = cfg.data_dir();
    let (train_path, test_path) = (dir.join("train.dataset"), dir.join("test.dataset"));
    if train_path.exists() && test_path.exists() {
        let pair = (load_dataset(&train_path)?, load_dataset(&test_path)?);
        if pair.0.seed == cfg.data_seed && pair.0.sequences.len() == cfg.n_train {
            return Ok(pair);
        }
    }
    generate_data(cfg)
}

pub fn generate_data(cfg: &RunConfig) -> Result<(SequenceDataset, SequenceDataset)> {
    let (train_ds, test_ds) = build_dataset(&cfg.dataset())?;
    let dir = cfg.data_dir();
    save_dataset(&dir.join("train.dataset"), &train_ds)?;
    save_dataset(&dir.join("test.dataset"), &test_ds)?;
    Ok((train_ds, test_ds))
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    command: &'a str,
    crate_version: &'a str,
    checkpoint_format: u32,
    dataset_format: u32,
    report_format: u32,
    profile: String,
    data_seed: u64,
    seeds: &'a [u64],
}

/// Record the resolved config, seeds and versions in the run directory.
pub fn write_manifest(cfg: &RunConfig, command: &str) -> Result<()> {
    write_text(&cfg.run_dir.join("config.toml"), &cfg.to_toml())?;
    let m = Manifest {
        command,
        crate_version: env!("CARGO_PKG_VERSION"),
        checkpoint_format: CHECKPOINT_VERSION,
        dataset_format: DATASET_VERSION,
        report_format: REPORT_VERSION,
        profile: cfg.profile.to_string(),
        data_seed: cfg.data_seed,
        seeds: &cfg.seeds,
    };
    let text = serde_json::to_string_pretty(&m).expect("manifest serializes");
    write_text(
        &cfg.run_dir.join(format!("manifest_{command}.json")),
        &(text + "\n"),
    )
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub setting: Setting,
    pub seed: u64,
    pub checkpoint: Checkpoint,
    pub trace: Vec<EpochMetrics>,
}

/// One trained network per seed and setting; jobs run in parallel.
pub fn train_grid(
    cfg: &RunConfig,
    settings: &[Setting],
    train_ds: &SequenceDataset,
) -> Result<Vec<TrainedModel>> {
    let jobs: Vec<(Setting, u64)> = settings
        .iter()
        .flat_map(|&s| cfg.seeds.iter().map(move |&seed| (s, seed)))
        .collect();
    let targets = train_ds.frames();
    jobs.par_iter()
        .map(|&(setting, seed)| {
            let (checkpoint, trace) = train(
                NetworkSpec::standard(),
                targets.clone(),
                cfg.train(setting, seed),
            )?;
            if cfg.log_every > 0 {
                eprintln!("trained {} seed {seed}", setting.label());
            }
            Ok(TrainedModel {
                setting,
                seed,
                checkpoint,
                trace,
            })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct Exp1Outcome {
    pub report: ExperimentReport,
    pub models: Vec<TrainedModel>,
    /// `[model]`, aligned with `models`.
    pub interactions: Vec<Vec<Interaction>>,
}

/// Seeds on which `w1` beats `w2` in both vision reconstruction and associative KL.
pub fn exp1_directions(report: &ExperimentReport) -> DirectionCheck {
    let (Some(a), Some(b)) = (report.condition("w1"), report.condition("w2")) else {
        return DirectionCheck {
            name: "w1<w2 vision recon and assoc kld".into(),
            hits: 0,
            total: 0,
        };
    };
    let vis = report
        .quantity_index("recon_err_vision")
        .expect("vision column");
    let kld = report.quantity_index("kld_assoc").expect("assoc column");
    let mut hits = 0;
    let mut total = 0;
    for ra in &a.rows {
        if let Some(rb) = b.rows.iter().find(|r| r.seed == ra.seed) {
            total += 1;
            if ra.values[vis] < rb.values[vis] && ra.values[kld] < rb.values[kld] {
                hits += 1;
            }
        }
    }
    DirectionCheck {
        name: "w1<w2 vision recon and assoc kld".into(),
        hits,
        total,
    }
}

pub fn run_exp1(
    cfg: &RunConfig,
    train_ds: &SequenceDataset,
    test_ds: &SequenceDataset,
) -> Result<Exp1Outcome> {
    let models = train_grid(cfg, &[Setting::W1, Setting::W2], train_ds)?;
    let evaluated: Vec<(RunSummary, Vec<Interaction>)> = models
        .par_iter()
        .map(|m| {
            let model = m.checkpoint.model()?;
            evaluate_model(&model, test_ds, &cfg.er(m.setting.meta()), m.seed)
        })
        .collect::<Result<_>>()?;
    let spec = NetworkSpec::standard();
    let conditions = [Setting::W1, Setting::W2]
        .iter()
        .map(|&s| {
            let rows = models
                .iter()
                .zip(&evaluated)
                .filter(|(m, _)| m.setting == s)
                .map(|(m, (summary, _))| SeedRow {
                    seed: m.seed,
                    values: quantity_values(summary),
                })
                .collect();
            Condition::new(s.label(), rows)
        })
        .collect();
    let mut report = ExperimentReport::new(
        "experiment 1: training meta-prior settings",
        quantity_names(&spec),
        conditions,
    )?;
    report.checks.push(exp1_directions(&report));
    for s in [Setting::W1, Setting::W2] {
        let traces: Vec<&Vec<EpochMetrics>> = models
            .iter()
            .filter(|m| m.setting == s)
            .map(|m| &m.trace)
            .collect();
        if let Some(last) = traces.iter().map(|t| t.last()).collect::<Option<Vec<_>>>() {
            let costs: Vec<f64> = last.iter().map(|e| e.cost).collect();
            report
                .extras
                .push((format!("final_train_cost_{}", s.label()), mean(&costs)));
        }
    }
    Ok(Exp1Outcome {
        report,
        interactions: evaluated.into_iter().map(|(_, r)| r).collect(),
        models,
    })
}

/// Per-model direction counts over the conditions of experiment 2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exp2Directions {
    pub models: usize,
    pub recon_increasing: usize,
    pub kld_decreasing: usize,
    pub one_step_min_first: usize,
    pub spearman_kld_negative: usize,
}

/// `summaries[model][condition]`, conditions in increasing order.
pub fn exp2_directions(summaries: &[Vec<RunSummary>]) -> Exp2Directions {
    let mut d = Exp2Directions {
        models: summaries.len(),
        recon_increasing: 0,
        kld_decreasing: 0,
        one_step_min_first: 0,
        spearman_kld_negative: 0,
    };
    for per_cond in summaries {
        let recon: Vec<f64> = per_cond.iter().map(RunSummary::recon_total).collect();
        let kld: Vec<f64> = per_cond.iter().map(RunSummary::kld_total).collect();
        d.recon_increasing += strictly_increasing(&recon) as usize;
        d.kld_decreasing += strictly_decreasing(&kld) as usize;
        let first_is_min = (0..per_cond[0].one_step_err.len()).all(|ch| {
            per_cond[1..]
                .iter()
                .all(|s| per_cond[0].one_step_err[ch] < s.one_step_err[ch])
        });
        d.one_step_min_first += first_is_min as usize;
        let idx: Vec<f64> = (0..kld.len()).map(|i| i as f64).collect();
        if spearman(&idx, &kld).is_ok_and(|r| r < 0.0) {
            d.spearman_kld_negative += 1;
        }
    }
    d
}

#[derive(Debug, Clone)]
pub struct Exp2Outcome {
    pub report: ExperimentReport,
    /// `[model][condition]`.
    pub summaries: Vec<Vec<RunSummary>>,
    /// `[model][condition][test sequence]`.
    pub interactions: Vec<Vec<Vec<Interaction>>>,
    pub directions: Exp2Directions,
}

/// `models` are `(seed, model)` pairs trained under `w1`.
pub fn run_exp2(
    cfg: &RunConfig,
    models: &[(u64, Model)],
    test_ds: &SequenceDataset,
) -> Result<Exp2Outcome> {
    let mut conditions = cfg.conditions.clone();
    conditions.sort_unstable();
    conditions.dedup();
    if conditions.len() < 2 {
        return Err(PvrnnError::InvalidArgument(
            "experiment 2 needs at least two conditions".into(),
        ));
    }
    let jobs: Vec<(usize, usize)> = (0..models.len())
        .flat_map(|m| (0..conditions.len()).map(move |c| (m, c)))
        .collect();
    let results: Vec<(RunSummary, Vec<Interaction>)> = jobs
        .par_iter()
        .map(|&(m, c)| {
            let meta = MetaPriorConfig::agency_setting(conditions[c])?;
            evaluate_model(&models[m].1, test_ds, &cfg.er(meta), models[m].0)
        })
        .collect::<Result<_>>()?;
    let mut summaries = vec![Vec::new(); models.len()];
    let mut interactions = vec![Vec::new(); models.len()];
    for (&(m, _), (s, runs)) in jobs.iter().zip(results) {
        summaries[m].push(s);
        interactions[m].push(runs);
    }

    let spec = NetworkSpec::standard();
    let labels: Vec<Vec<Primitive>> = (0..test_ds.sequences.len())
        .map(|i| step_labels(test_ds, i))
        .collect();
    let mut extras = Vec::new();
    let conds = conditions
        .iter()
        .enumerate()
        .map(|(c, k)| {
            let rows = models
                .iter()
                .zip(&summaries)
                .map(|((seed, _), per)| SeedRow {
                    seed: *seed,
                    values: quantity_values(&per[c]),
                })
                .collect();
            let fractions: Vec<f64> = interactions
                .iter()
                .flat_map(|per| per[c].iter().zip(&labels))
                .map(|(run, l)| {
                    let series: Vec<f64> = run
                        .metrics
                        .iter()
                        .map(|m| m.one_step_err.iter().sum())
                        .collect();
                    branch_spike_fraction(&transition_events(
                        l,
                        &series,
                        SPIKE_HORIZON,
                        SPIKE_FACTOR,
                    ))
                })
                .collect();
            extras.push((format!("branch_spike_fraction_W{k}"), mean(&fractions)));
            Condition::new(format!("W{k}"), rows)
        })
        .collect();
    let mut report = ExperimentReport::new(
        "experiment 2: error-regression meta-prior scaling",
        quantity_names(&spec),
        conds,
    )?;
    let directions = exp2_directions(&summaries);
    let n = directions.models;
    report.checks = vec![
        DirectionCheck {
            name: "recon_total increasing".into(),
            hits: directions.recon_increasing,
            total: n,
        },
        DirectionCheck {
            name: "kld_total decreasing".into(),
            hits: directions.kld_decreasing,
            total: n,
        },
        DirectionCheck {
            name: "one-step errors smallest at first condition".into(),
            hits: directions.one_step_min_first,
            total: n,
        },
        DirectionCheck {
            name: "spearman(condition, kld_total) < 0".into(),
            hits: directions.spearman_kld_negative,
            total: n,
        },
    ];
    report.extras = extras;
    Ok(Exp2Outcome {
        report,
        summaries,
        interactions,
        directions,
    })
}

fn write_report(dir: &Path, stem: &str, report: &ExperimentReport) -> Result<()> {
    report.save(&dir.join(format!("{stem}.report")))?;
    write_text(&dir.join(format!("{stem}.txt")), &report.render())
}

/// Experiment 1 with checkpoints, learning curves, step metrics and the report
/// written under the run directory.
pub fn exp1(cfg: &RunConfig) -> Result<ExperimentReport> {
    write_manifest(cfg, "exp1")?;
    let (train_ds, test_ds) = prepare_data(cfg)?;
    let out = run_exp1(cfg, &train_ds, &test_ds)?;
    let spec = NetworkSpec::standard();
    let dir = cfg.run_dir.join("exp1");
    for (m, runs) in out.models.iter().zip(&out.interactions) {
        m.checkpoint.save(&cfg.checkpoint_path(m.setting, m.seed))?;
        write_text(
            &dir.join(format!("curve_{}_seed{}.tsv", m.setting.label(), m.seed)),
            &metrics_table(&spec, &m.trace),
        )?;
        for (i, r) in runs.iter().enumerate() {
            write_text(
                &dir.join(format!(
                    "er_{}_seed{}_test{i}.tsv",
                    m.setting.label(),
                    m.seed
                )),
                &er_table(&spec, &r.metrics),
            )?;
        }
    }
    for s in [Setting::W1, Setting::W2] {
        let (seeds, traces): (Vec<u64>, Vec<Vec<EpochMetrics>>) = out
            .models
            .iter()
            .filter(|m| m.setting == s)
            .map(|m| (m.seed, m.trace.clone()))
            .unzip();
        let agg = aggregate_traces(&seeds, &traces);
        write_text(
            &dir.join(format!("curve_{}_mean.tsv", s.label())),
            &metrics_table(&spec, &agg.mean),
        )?;
        write_text(
            &dir.join(format!("curve_{}_std.tsv", s.label())),
            &metrics_table(&spec, &agg.std),
        )?;
    }
    write_report(&dir, "report", &out.report)?;
    Ok(out.report)
}

/// Load the `w1` checkpoints of every configured seed.
pub fn load_w1_models(cfg: &RunConfig) -> Result<Vec<(u64, Model)>> {
    cfg.seeds
        .iter()
        .map(|&seed| {
            let path = cfg.checkpoint_path(Setting::W1, seed);
            if !path.exists() {
                return Err(PvrnnError::Missing(format!(
                    "checkpoint {} (run exp1 or train first)",
                    path.display()
                )));
            }
            Ok((seed, Checkpoint::load(&path)?.model()?))
        })
        .collect()
}

/// Experiment 2 on the `w1` checkpoints found in the run directory.
pub fn exp2(cfg: &RunConfig) -> Result<ExperimentReport> {
    let models = load_w1_models(cfg)?;
    write_manifest(cfg, "exp2")?;
    let (_, test_ds) = prepare_data(cfg)?;
    let out = run_exp2(cfg, &models, &test_ds)?;
    let spec = NetworkSpec::standard();
    let dir = cfg.run_dir.join("exp2");
    let mut conditions = cfg.conditions.clone();
    conditions.sort_unstable();
    conditions.dedup();
    for ((seed, _), per) in models.iter().zip(&out.interactions) {
        for (k, runs) in conditions.iter().zip(per) {
            for (i, r) in runs.iter().enumerate() {
                write_text(
                    &dir.join(format!("er_W{k}_seed{seed}_test{i}.tsv")),
                    &er_table(&spec, &r.metrics),
                )?;
            }
        }
    }
    write_report(&dir, "report", &out.report)?;
    Ok(out.report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn summary(recon: f64, kld: f64, one: f64) -> RunSummary {
        RunSummary {
            recon_err: vec![recon, recon],
            kld: vec![kld; 5],
            one_step_err: vec![one, one],
        }
    }

    #[test]
    fn direction_counts() {
        let good = vec![
            summary(0.1, 0.5, 0.01),
            summary(0.2, 0.3, 0.02),
            summary(0.3, 0.1, 0.03),
        ];
        let bad = vec![
            summary(0.3, 0.1, 0.03),
            summary(0.2, 0.3, 0.02),
            summary(0.1, 0.5, 0.01),
        ];
        let d = exp2_directions(&[good.clone(), bad, good]);
        assert_eq!(d.models, 3);
        assert_eq!(d.recon_increasing, 2);
        assert_eq!(d.kld_decreasing, 2);
        assert_eq!(d.one_step_min_first, 2);
        assert_eq!(d.spearman_kld_negative, 2);
    }

    #[test]
    fn quantities_align() {
        let spec = NetworkSpec::standard();
        let names = quantity_names(&spec);
        let vals = quantity_values(&summary(0.1, 0.2, 0.3));
        assert_eq!(names.len(), 11);
        assert_eq!(vals.len(), 11);
        assert_eq!(names[1], "recon_err_vision");
        assert_eq!(names[2], "kld_assoc");
        assert!((vals[9] - 0.2).abs() < 1e-15);
        assert!((vals[10] - 1.0).abs() < 1e-15);
    }
}
