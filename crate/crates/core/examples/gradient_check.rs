//! Backpropagation through time against central differences on a small chain.

use pvrnn::grad::{backprop, finite_diff};
use pvrnn::network::{forward_posterior, AdaptiveField, MetaPriorConfig, Model, NetworkSpec};
use pvrnn::noise::GaussianNoise;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> pvrnn::error::Result<()> {
    let spec = NetworkSpec::chain(&[(3, 2, 4.0), (4, 2, 2.0)], 3)?;
    let model = Model::random(spec.clone(), &mut ChaCha8Rng::seed_from_u64(5))?;
    let meta = MetaPriorConfig::uniform(spec.n_layers(), 0.5, 0.1);
    let t = 5;
    let adaptive = AdaptiveField::zeros(&spec, 1, t).sequences.remove(0);
    let targets: Vec<_> = (0..t)
        .map(|k| vec![vec![0.1 * k as f64, -0.2, 0.3]])
        .collect();
    let rec = forward_posterior(&model, &adaptive, &targets, &mut GaussianNoise::new(9))?;
    let eps = rec.noise();
    let exact = backprop(&model, &meta, &adaptive, &targets, &eps)?;
    let numeric = finite_diff(&model, &meta, &adaptive, &targets, &eps, 1e-5)?;
    println!("{} gradient entries", exact.flatten().len());
    println!(
        "max relative error {:.3e}",
        exact.max_relative_error(&numeric, 1e-6)
    );
    Ok(())
}
