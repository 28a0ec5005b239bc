//! Online inference with the shifting window on an unseen test sequence.

use pvrnn::datagen::{build_dataset, DatasetConfig, FsmSpec};
use pvrnn::error_regression::{non_increase_fraction, run_interaction, ERConfig};
use pvrnn::network::{MetaPriorConfig, NetworkSpec};
use pvrnn::training::{train, TrainConfig};

fn main() -> pvrnn::error::Result<()> {
    let mut data = DatasetConfig::full(42);
    data.n_train = 3;
    data.n_test = 1;
    data.fsm = FsmSpec::with_length(4, 30);
    let (train_ds, test_ds) = build_dataset(&data)?;
    let (ck, _) = train(
        NetworkSpec::standard(),
        train_ds.frames(),
        TrainConfig::new(200, 1, MetaPriorConfig::setting_w1()),
    )?;
    let model = ck.model()?;
    let mut er = ERConfig::new(MetaPriorConfig::setting_w1());
    er.window_len = 15;
    er.iters_per_step = 15;
    for k in [1, 5] {
        er.meta = MetaPriorConfig::agency_setting(k)?;
        let run = run_interaction(&model, &test_ds.frames()[0], &er, 7)?;
        let s = &run.summary;
        println!(
            "W{k}: recon {:.3e} kld {:.3e} one-step proprio {:.3e} vision {:.3e}; cost decreased in {:.0}% of steps",
            s.recon_total(),
            s.kld_total(),
            s.one_step_err[0],
            s.one_step_err[1],
            100.0 * non_increase_fraction(&run)
        );
    }
    Ok(())
}
