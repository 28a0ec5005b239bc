//! Diagonal-covariance Gaussian latents.
//!
//! `sigma` is a standard deviation, never a variance or a log-scale.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, PvrnnError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagGaussian {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl DiagGaussian {
    pub fn new(mu: Vec<f64>, sigma: Vec<f64>) -> Result<Self> {
        check_len("DiagGaussian sigma", mu.len(), sigma.len())?;
        if let Some(s) = sigma.iter().find(|s| !(**s > 0.0) || !s.is_finite()) {
            return Err(PvrnnError::InvalidArgument(format!(
                "standard deviations must be finite and positive, got {s}"
            )));
        }
        Ok(Self { mu, sigma })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.mu.len()
    }
}

/// N(0, I) of the given dimension.
pub fn unit_gaussian(dim: usize) -> Result<DiagGaussian> {
    if dim == 0 {
        return Err(PvrnnError::InvalidArgument(
            "unit gaussian needs dim >= 1".into(),
        ));
    }
    Ok(DiagGaussian {
        mu: vec![0.0; dim],
        sigma: vec![1.0; dim],
    })
}

/// Closed-form KL(q ‖ p) in nats, summed over dimensions.
pub fn kl_diag(q: &DiagGaussian, p: &DiagGaussian) -> Result<f64> {
    check_len("kl_diag", p.dim(), q.dim())?;
    Ok(kl_unchecked(q, p))
}

#[inline]
pub(crate) fn kl_unchecked(q: &DiagGaussian, p: &DiagGaussian) -> f64 {
    let mut total = 0.0;
    for i in 0..q.mu.len() {
        let (mq, sq, mp, sp) = (q.mu[i], q.sigma[i], p.mu[i], p.sigma[i]);
        let dm = mp - mq;
        total += (sp / sq).ln() + (dm * dm + sq * sq) / (2.0 * sp * sp) - 0.5;
    }
    total
}

/// Partial derivatives of the per-dimension KL term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct KlPartials {
    pub d_mu_q: f64,
    pub d_sigma_q: f64,
    pub d_mu_p: f64,
    pub d_sigma_p: f64,
}

#[inline]
pub(crate) fn kl_partials(mq: f64, sq: f64, mp: f64, sp: f64) -> KlPartials {
    let var_p = sp * sp;
    let dm = mq - mp;
    KlPartials {
        d_mu_q: dm / var_p,
        d_sigma_q: -1.0 / sq + sq / var_p,
        d_mu_p: -dm / var_p,
        d_sigma_p: 1.0 / sp - (dm * dm + sq * sq) / (var_p * sp),
    }
}

/// `mu + sigma ⊙ eps`.
pub fn sample_reparam(g: &DiagGaussian, eps: &[f64]) -> Result<Vec<f64>> {
    check_len("sample_reparam eps", g.dim(), eps.len())?;
    Ok(g.mu
        .iter()
        .zip(&g.sigma)
        .zip(eps)
        .map(|((m, s), e)| m + s * e)
        .collect())
}
