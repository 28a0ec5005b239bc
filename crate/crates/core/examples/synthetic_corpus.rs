//! Sample the A -> {B, C} -> A grammar and render multimodal sequences.

use pvrnn::datagen::{build_dataset, decode_labels, DatasetConfig, FsmSpec, PrimitiveBank};

fn main() -> pvrnn::error::Result<()> {
    let mut cfg = DatasetConfig::full(42);
    cfg.n_train = 6;
    cfg.fsm = FsmSpec::with_length(4, 50);
    let (train, test) = build_dataset(&cfg)?;
    let bank = PrimitiveBank::new(cfg.fsm.steps_per_primitive);
    for (name, ds) in [("train", &train), ("test", &test)] {
        for s in &ds.sequences {
            let decoded: String = decode_labels(&s.proprio, &bank)
                .iter()
                .map(|p| p.as_char())
                .collect();
            println!(
                "{name} participant {} labels {} decoded {} ({} steps, {} + {} dims)",
                s.participant,
                s.label_string(),
                decoded,
                s.len(),
                s.proprio[0].len(),
                s.vision[0].len()
            );
        }
    }
    Ok(())
}
