//! Closed-form KL between diagonal Gaussians and reparameterized sampling.

use pvrnn::gaussian::{kl_diag, sample_reparam, unit_gaussian, DiagGaussian};
use pvrnn::noise::rng_for;
use rand_distr::{Distribution, StandardNormal};

fn main() -> pvrnn::error::Result<()> {
    let q = DiagGaussian::new(vec![0.5, -1.0], vec![0.8, 1.5])?;
    let p = unit_gaussian(2)?;
    println!("KL(q || N(0, I)) = {:.6}", kl_diag(&q, &p)?);
    println!("KL(q || q)       = {:.6}", kl_diag(&q, &q)?);

    // z = mu + sigma * eps reproduces the moments of q.
    let mut rng = rng_for(1, &[]);
    let n = 100_000;
    let mut sum = [0.0; 2];
    let mut sq = [0.0; 2];
    for _ in 0..n {
        let eps: Vec<f64> = (0..2).map(|_| StandardNormal.sample(&mut rng)).collect();
        let z = sample_reparam(&q, &eps)?;
        for i in 0..2 {
            sum[i] += z[i];
            sq[i] += z[i] * z[i];
        }
    }
    for i in 0..2 {
        let m = sum[i] / n as f64;
        let sd = (sq[i] / n as f64 - m * m).sqrt();
        println!(
            "dim {i}: sample mean {m:+.4} (mu {:+.4}), sample sd {sd:.4} (sigma {:.4})",
            q.mu[i], q.sigma[i]
        );
    }
    Ok(())
}
