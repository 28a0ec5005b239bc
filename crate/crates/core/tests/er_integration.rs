mod common;

use pvrnn::datagen::{render_with, Jitter, NoiseSpec, Primitive, PrimitiveBank};
use pvrnn::error_regression::{
    er_step, non_increase_fraction, run_interaction, ERConfig, ERWindow, InnerNoise,
};
use pvrnn::network::{forward_prior, Frame, MetaPriorConfig, Model, NetworkSpec, NetworkState};
use pvrnn::noise::{rng_for, MeanMode};
use pvrnn::training::{train, TrainConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small_er(meta: MetaPriorConfig) -> ERConfig {
    let mut er = ERConfig::new(meta);
    er.window_len = 10;
    er.iters_per_step = 10;
    er
}

fn trained_model(epochs: usize) -> (Model, Vec<Vec<Frame>>, PrimitiveBank) {
    let (train_ds, _) = common::small_corpus(2, 3, 25, 3);
    let cfg = TrainConfig::new(epochs, 4, MetaPriorConfig::setting_w1());
    let (ck, _) = train(NetworkSpec::standard(), train_ds.frames(), cfg).unwrap();
    (
        ck.model().unwrap(),
        train_ds.frames(),
        PrimitiveBank::new(25),
    )
}

#[test]
fn without_iterations_prediction_is_the_prior_rollout() {
    let spec = NetworkSpec::standard();
    let mut model = Model::random(spec.clone(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    for (i, l) in model.params.layers.iter_mut().enumerate() {
        l.posterior = l.prior.clone();
        l.b_d
            .iter_mut()
            .enumerate()
            .for_each(|(j, b)| *b = 0.3 * ((i + j) as f64).sin());
    }
    // With a = 0, shared heads and mean-mode noise the window rollout is the
    // prior mean rollout.
    let mut er = ERConfig::new(MetaPriorConfig::setting_w1());
    er.window_len = 4;
    er.iters_per_step = 0;
    er.inner_noise = InnerNoise::Mean;
    let frames = common::wave_frames(&spec, 9, 0.3);
    let mut window = ERWindow::new(&model, &er, 0).unwrap();
    let free = forward_prior(&model, &NetworkState::zeros(&spec), 1, 10, &mut MeanMode).unwrap();
    assert_eq!(window.pending, free.steps[0].outputs);
    assert!(free.steps[5].outputs[0].iter().any(|y| *y != 0.0));
    for (t, obs) in frames.into_iter().enumerate() {
        let out = er_step(&model, &er, &mut window, obs).unwrap();
        assert_eq!(out.prediction, free.steps[t + 1].outputs);
        assert_eq!(out.cost_before, out.cost_after);
    }
}

#[test]
fn window_cost_does_not_increase() {
    let (model, frames, _) = trained_model(60);
    let run = run_interaction(
        &model,
        &frames[0],
        &small_er(MetaPriorConfig::setting_w1()),
        5,
    )
    .unwrap();
    assert!(
        non_increase_fraction(&run) >= 0.95,
        "{}",
        non_increase_fraction(&run)
    );
    assert!(run.metrics.iter().all(|m| m.is_valid()));
}

#[test]
fn larger_meta_prior_trades_reconstruction_for_complexity() {
    let (model, frames, _) = trained_model(150);
    let low = run_interaction(
        &model,
        &frames[1],
        &small_er(MetaPriorConfig::agency_setting(1).unwrap()),
        2,
    )
    .unwrap();
    let high = run_interaction(
        &model,
        &frames[1],
        &small_er(MetaPriorConfig::agency_setting(5).unwrap()),
        2,
    )
    .unwrap();
    assert!(high.summary.kld_total() < low.summary.kld_total());
    assert!(high.summary.recon_err[0] > low.summary.recon_err[0]);
}

#[test]
fn trained_sequence_is_predicted_better_than_a_shuffled_one() {
    let (model, frames, bank) = trained_model(300);
    // The grammar forbids B directly after C and repeated primitives.
    let shuffled_labels = [Primitive::C, Primitive::B, Primitive::B];
    let mut rng = rng_for(9, &[]);
    let (p, v) = render_with(
        &shuffled_labels,
        &bank,
        Jitter::NONE,
        &NoiseSpec::default(),
        &mut rng,
    );
    let shuffled: Vec<Frame> = p.into_iter().zip(v).map(|(p, v)| vec![p, v]).collect();
    let er = small_er(MetaPriorConfig::setting_w1());
    let own = run_interaction(&model, &frames[0], &er, 1).unwrap();
    let other = run_interaction(&model, &shuffled, &er, 1).unwrap();
    let one_step =
        |r: &pvrnn::error_regression::Interaction| r.summary.one_step_err.iter().sum::<f64>();
    assert!(
        one_step(&own) < one_step(&other),
        "{} vs {}",
        one_step(&own),
        one_step(&other)
    );
}
