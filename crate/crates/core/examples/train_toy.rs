//! Train the standard network on a small corpus and print the learning curve.

use pvrnn::datagen::{build_dataset, DatasetConfig, FsmSpec};
use pvrnn::network::{MetaPriorConfig, NetworkSpec};
use pvrnn::training::{train, TrainConfig};

fn main() -> pvrnn::error::Result<()> {
    let epochs: usize = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(300);
    let mut data = DatasetConfig::full(42);
    data.n_train = 3;
    data.fsm = FsmSpec::with_length(4, 50);
    let (train_ds, _) = build_dataset(&data)?;
    let cfg = TrainConfig::new(epochs, 1, MetaPriorConfig::setting_w1());
    let (_, trace) = train(NetworkSpec::standard(), train_ds.frames(), cfg)?;
    println!("epoch\tcost\tproprio_err\tvision_err");
    for m in trace
        .iter()
        .step_by((epochs / 10).max(1))
        .chain(trace.last())
    {
        println!(
            "{}\t{:.4}\t{:.3e}\t{:.3e}",
            m.epoch,
            m.cost,
            m.pred_err_proprio(),
            m.pred_err_vision()
        );
    }
    Ok(())
}
