//! Training meta-prior comparison, w1 vs w2, with Welch tests.
//! `cargo run --release --example experiment1 -- desk` for the desk profile.

use pvrnn::harness::config::{Profile, RunConfig};
use pvrnn::harness::experiments::{exp1_directions, prepare_data, run_exp1};

fn main() -> pvrnn::error::Result<()> {
    let profile: Profile = std::env::args().nth(1).unwrap_or("smoke".into()).parse()?;
    let mut cfg = RunConfig::profile(profile);
    cfg.run_dir = std::env::temp_dir().join("pvrnn-example-exp1");
    let (train_ds, test_ds) = prepare_data(&cfg)?;
    let out = run_exp1(&cfg, &train_ds, &test_ds)?;
    print!("{}", out.report.render());
    let d = exp1_directions(&out.report);
    println!(
        "seeds with lower vision error and assoc KLD under w1: {}/{}",
        d.hits, d.total
    );
    Ok(())
}
