use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pvrnn::error::{PvrnnError, Result};
use pvrnn::error_regression::metrics_table;
use pvrnn::harness::checkpoint::Checkpoint;
use pvrnn::harness::config::{Profile, RunConfig, Setting};
use pvrnn::harness::experiments::{self, evaluate_model, prepare_data, train_grid, write_manifest};
use pvrnn::harness::io::{read_text, write_text};
use pvrnn::harness::report::{fmt_num, ExperimentReport};
use pvrnn::network::{MetaPriorConfig, NetworkSpec};
use pvrnn::training;

#[derive(Parser)]
#[command(
    name = "pvrnn",
    version,
    about = "Variational multimodal RNN experiments"
)]
struct Cli {
    /// Run configuration (TOML key-value file).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// smoke | desk | full; overrides the profile named in the config.
    #[arg(long, global = true)]
    profile: Option<Profile>,
    /// Data seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Model seeds, comma separated.
    #[arg(long, global = true, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Run directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the training and test corpora.
    GenerateData,
    /// Train one network per seed.
    Train {
        #[arg(long, default_value = "w1")]
        setting: Setting,
    },
    /// Error regression of a checkpoint over the test corpus.
    ErRun {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Error-regression setting W_k; defaults to the training meta-prior.
        #[arg(long)]
        condition: Option<u32>,
    },
    /// Training meta-prior settings w1 vs w2.
    Exp1,
    /// Error-regression meta-prior scaling on the w1 checkpoints.
    Exp2,
    /// Render the stored experiment reports.
    Report,
}

fn resolve(cli: &Cli) -> Result<RunConfig> {
    let text = cli.config.as_ref().map(|p| read_text(p)).transpose()?;
    let mut cfg = RunConfig::resolve(text.as_deref(), cli.profile, Profile::Desk).map_err(|e| {
        match (e, &cli.config) {
            (PvrnnError::InvalidArgument(reason), Some(path)) => PvrnnError::Format {
                path: path.clone(),
                reason,
            },
            (e, _) => e,
        }
    })?;
    if let Some(s) = cli.seed {
        cfg.data_seed = s;
    }
    if let Some(s) = &cli.seeds {
        cfg.seeds = s.clone();
    }
    if let Some(o) = &cli.out {
        cfg.run_dir = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = resolve(&cli)?;
    match cli.command {
        Command::GenerateData => {
            write_manifest(&cfg, "generate-data")?;
            let (train_ds, test_ds) = experiments::generate_data(&cfg)?;
            println!(
                "wrote {} training and {} test sequences of {} steps to {}",
                train_ds.sequences.len(),
                test_ds.sequences.len(),
                train_ds.sequence_len(),
                cfg.data_dir().display()
            );
        }
        Command::Train { setting } => {
            write_manifest(&cfg, "train")?;
            let (train_ds, _) = prepare_data(&cfg)?;
            let spec = NetworkSpec::standard();
            for m in train_grid(&cfg, &[setting], &train_ds)? {
                let path = cfg.checkpoint_path(m.setting, m.seed);
                m.checkpoint.save(&path)?;
                let curve = cfg.run_dir.join("curves").join(format!(
                    "{}_seed{}.tsv",
                    setting.label(),
                    m.seed
                ));
                write_text(&curve, &training::metrics_table(&spec, &m.trace))?;
                let last = m.trace.last().map_or(f64::NAN, |e| e.cost);
                println!("{}\tfinal cost {}", path.display(), fmt_num(last));
            }
        }
        Command::ErRun {
            checkpoint,
            condition,
        } => {
            write_manifest(&cfg, "er-run")?;
            let ck = Checkpoint::load(&checkpoint)?;
            let model = ck.model()?;
            let (meta, tag) = match condition {
                Some(k) => (MetaPriorConfig::agency_setting(k)?, format!("W{k}")),
                None => (ck.train_config.meta.clone(), "train".to_string()),
            };
            let (_, test_ds) = prepare_data(&cfg)?;
            let (summary, runs) = evaluate_model(&model, &test_ds, &cfg.er(meta), ck.seed)?;
            let stem = checkpoint
                .file_stem()
                .map_or("model".into(), |s| s.to_string_lossy().into_owned());
            for (i, r) in runs.iter().enumerate() {
                let path = cfg
                    .run_dir
                    .join("er")
                    .join(format!("{stem}_{tag}_test{i}.tsv"));
                write_text(&path, &metrics_table(&model.spec, &r.metrics))?;
            }
            let names = experiments::quantity_names(&model.spec);
            for (n, v) in names.iter().zip(experiments::quantity_values(&summary)) {
                println!("{n}\t{}", fmt_num(v));
            }
        }
        Command::Exp1 => {
            let report = experiments::exp1(&cfg)?;
            print!("{}", report.render());
        }
        Command::Exp2 => {
            let report = experiments::exp2(&cfg)?;
            print!("{}", report.render());
        }
        Command::Report => {
            let mut text = String::new();
            for exp in ["exp1", "exp2"] {
                let path = cfg.run_dir.join(exp).join("report.report");
                if path.exists() {
                    text.push_str(&ExperimentReport::load(&path)?.render());
                    text.push('\n');
                }
            }
            if text.is_empty() {
                return Err(PvrnnError::Missing(format!(
                    "no stored reports under {}",
                    cfg.run_dir.display()
                )));
            }
            write_text(&cfg.run_dir.join("report.txt"), &text)?;
            print!("{text}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
