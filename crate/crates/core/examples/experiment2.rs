//! Error-regression meta-prior scaling W1, W3, W5 on w1-trained networks.
//! `cargo run --release --example experiment2 -- desk` for the desk profile.

use pvrnn::harness::config::{Profile, RunConfig, Setting};
use pvrnn::harness::experiments::{prepare_data, run_exp2, train_grid};

fn main() -> pvrnn::error::Result<()> {
    let profile: Profile = std::env::args().nth(1).unwrap_or("smoke".into()).parse()?;
    let mut cfg = RunConfig::profile(profile);
    cfg.run_dir = std::env::temp_dir().join("pvrnn-example-exp2");
    let (train_ds, test_ds) = prepare_data(&cfg)?;
    let models = train_grid(&cfg, &[Setting::W1], &train_ds)?
        .into_iter()
        .map(|m| Ok((m.seed, m.checkpoint.model()?)))
        .collect::<pvrnn::error::Result<Vec<_>>>()?;
    let out = run_exp2(&cfg, &models, &test_ds)?;
    print!("{}", out.report.render());
    let d = &out.directions;
    println!(
        "over {} models: recon increasing {}, KLD decreasing {}, one-step smallest at W1 {}",
        d.models, d.recon_increasing, d.kld_decreasing, d.one_step_min_first
    );
    Ok(())
}
