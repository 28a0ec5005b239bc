//! One PV-RNN layer: leaky-integrator deterministic units `d` driven by the
//! layer's own stochastic units `z`, plus separate prior and posterior heads.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, PvrnnError, Result};
use crate::gaussian::{unit_gaussian, DiagGaussian};
use crate::linalg::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub dim_d: usize,
    pub dim_z: usize,
    /// MTRNN time constant, `>= 1`.
    pub tau: f64,
    /// Width of the same-step top-down input; `0` for a top layer.
    pub topdown_dim: usize,
}

impl LayerSpec {
    pub fn new(dim_d: usize, dim_z: usize, tau: f64, topdown_dim: usize) -> Result<Self> {
        let spec = Self {
            dim_d,
            dim_z,
            tau,
            topdown_dim,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim_d == 0 || self.dim_z == 0 {
            return Err(PvrnnError::InvalidArgument(
                "layer dims must be positive".into(),
            ));
        }
        if !(self.tau >= 1.0) || !self.tau.is_finite() {
            return Err(PvrnnError::InvalidArgument(format!(
                "tau must be finite and >= 1, got {}",
                self.tau
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn has_topdown(&self) -> bool {
        self.topdown_dim > 0
    }
}

/// Maps `d_{t-1}` (plus an optional additive offset) to a diagonal Gaussian:
/// `mu = tanh(W_mu d + off_mu + b_mu)`, `sigma = exp(W_sigma d + off_sigma + b_sigma)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianHead {
    pub w_mu: Matrix,
    pub b_mu: Vec<f64>,
    pub w_sigma: Matrix,
    pub b_sigma: Vec<f64>,
}

impl GaussianHead {
    pub fn zeros(dim_z: usize, dim_d: usize) -> Self {
        Self {
            w_mu: Matrix::zeros(dim_z, dim_d),
            b_mu: vec![0.0; dim_z],
            w_sigma: Matrix::zeros(dim_z, dim_d),
            b_sigma: vec![0.0; dim_z],
        }
    }

    fn random<R: Rng + ?Sized>(dim_z: usize, dim_d: usize, rng: &mut R) -> Self {
        Self {
            w_mu: Matrix::uniform_fan_in(dim_z, dim_d, rng),
            b_mu: vec![0.0; dim_z],
            w_sigma: Matrix::uniform_fan_in(dim_z, dim_d, rng),
            b_sigma: vec![0.0; dim_z],
        }
    }

    pub(crate) fn eval(&self, d_prev: &[f64], offset: Option<&AdaptiveEntry>) -> DiagGaussian {
        let mut mu = self.b_mu.clone();
        let mut log_sigma = self.b_sigma.clone();
        self.w_mu.matvec_add(d_prev, &mut mu);
        self.w_sigma.matvec_add(d_prev, &mut log_sigma);
        if let Some(a) = offset {
            crate::linalg::add_assign(&mut mu, &a.mu);
            crate::linalg::add_assign(&mut log_sigma, &a.sigma);
        }
        mu.iter_mut().for_each(|m| *m = m.tanh());
        log_sigma.iter_mut().for_each(|s| *s = s.exp());
        DiagGaussian {
            mu,
            sigma: log_sigma,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub w_dd: Matrix,
    pub w_td: Matrix,
    pub w_dz: Matrix,
    pub b_d: Vec<f64>,
    pub prior: GaussianHead,
    pub posterior: GaussianHead,
}

impl LayerParams {
    pub fn zeros(spec: &LayerSpec) -> Self {
        Self {
            w_dd: Matrix::zeros(spec.dim_d, spec.dim_d),
            w_td: Matrix::zeros(spec.dim_d, spec.topdown_dim),
            w_dz: Matrix::zeros(spec.dim_d, spec.dim_z),
            b_d: vec![0.0; spec.dim_d],
            prior: GaussianHead::zeros(spec.dim_z, spec.dim_d),
            posterior: GaussianHead::zeros(spec.dim_z, spec.dim_d),
        }
    }

    /// Weights uniform in `±1/sqrt(fan_in)` per matrix, biases zero.
    pub fn random<R: Rng + ?Sized>(spec: &LayerSpec, rng: &mut R) -> Self {
        Self {
            w_dd: Matrix::uniform_fan_in(spec.dim_d, spec.dim_d, rng),
            w_td: Matrix::uniform_fan_in(spec.dim_d, spec.topdown_dim, rng),
            w_dz: Matrix::uniform_fan_in(spec.dim_d, spec.dim_z, rng),
            b_d: vec![0.0; spec.dim_d],
            prior: GaussianHead::random(spec.dim_z, spec.dim_d, rng),
            posterior: GaussianHead::random(spec.dim_z, spec.dim_d, rng),
        }
    }

    pub(crate) fn tensors(&self) -> [&[f64]; 12] {
        [
            &self.w_dd.data,
            &self.w_td.data,
            &self.w_dz.data,
            &self.b_d,
            &self.prior.w_mu.data,
            &self.prior.b_mu,
            &self.prior.w_sigma.data,
            &self.prior.b_sigma,
            &self.posterior.w_mu.data,
            &self.posterior.b_mu,
            &self.posterior.w_sigma.data,
            &self.posterior.b_sigma,
        ]
    }

    pub(crate) fn tensors_mut(&mut self) -> [&mut [f64]; 12] {
        [
            &mut self.w_dd.data,
            &mut self.w_td.data,
            &mut self.w_dz.data,
            &mut self.b_d,
            &mut self.prior.w_mu.data,
            &mut self.prior.b_mu,
            &mut self.prior.w_sigma.data,
            &mut self.prior.b_sigma,
            &mut self.posterior.w_mu.data,
            &mut self.posterior.b_mu,
            &mut self.posterior.w_sigma.data,
            &mut self.posterior.b_sigma,
        ]
    }

    fn check(&self, spec: &LayerSpec) -> Result<()> {
        check_len("layer w_dd rows", spec.dim_d, self.w_dd.rows)?;
        check_len("layer w_dd cols", spec.dim_d, self.w_dd.cols)?;
        check_len("layer w_td cols", spec.topdown_dim, self.w_td.cols)?;
        check_len("layer w_dz cols", spec.dim_z, self.w_dz.cols)?;
        Ok(())
    }
}

/// The adaptive offsets `a` of one layer at one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveEntry {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl AdaptiveEntry {
    pub fn zeros(dim_z: usize) -> Self {
        Self {
            mu: vec![0.0; dim_z],
            sigma: vec![0.0; dim_z],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerState {
    pub h: Vec<f64>,
    pub d: Vec<f64>,
}

impl LayerState {
    pub fn zeros(dim_d: usize) -> Self {
        Self {
            h: vec![0.0; dim_d],
            d: vec![0.0; dim_d],
        }
    }

    pub fn from_h(h: Vec<f64>) -> Self {
        let d = h.iter().map(|v| v.tanh()).collect();
        Self { h, d }
    }
}

/// Prior over `z_t` given `d_{t-1}`. Step `t == 1` is always N(0, I).
pub fn prior_of(params: &LayerParams, d_prev: &[f64], t: usize) -> Result<DiagGaussian> {
    if t == 0 {
        return Err(PvrnnError::InvalidArgument("time steps are 1-based".into()));
    }
    check_len("prior_of d_prev", params.prior.w_mu.cols, d_prev.len())?;
    if t == 1 {
        return unit_gaussian(params.prior.b_mu.len());
    }
    Ok(params.prior.eval(d_prev, None))
}

pub fn posterior_of(
    params: &LayerParams,
    d_prev: &[f64],
    a: &AdaptiveEntry,
) -> Result<DiagGaussian> {
    check_len(
        "posterior_of d_prev",
        params.posterior.w_mu.cols,
        d_prev.len(),
    )?;
    let dim_z = params.posterior.b_mu.len();
    check_len("posterior_of a_mu", dim_z, a.mu.len())?;
    check_len("posterior_of a_sigma", dim_z, a.sigma.len())?;
    Ok(params.posterior.eval(d_prev, Some(a)))
}

/// Pre-activation input `u` of the leaky integrator.
pub(crate) fn drive(
    params: &LayerParams,
    d_prev: &[f64],
    topdown: Option<&[f64]>,
    z: &[f64],
) -> Vec<f64> {
    let mut u = params.b_d.clone();
    params.w_dd.matvec_add(d_prev, &mut u);
    if let Some(td) = topdown {
        params.w_td.matvec_add(td, &mut u);
    }
    params.w_dz.matvec_add(z, &mut u);
    u
}

pub(crate) fn integrate(tau: f64, h_prev: &[f64], u: &[f64]) -> LayerState {
    let keep = 1.0 - 1.0 / tau;
    let h: Vec<f64> = h_prev
        .iter()
        .zip(u)
        .map(|(hp, ui)| keep * hp + ui / tau)
        .collect();
    LayerState::from_h(h)
}

/// `h = (1 - 1/tau) h_prev + u / tau`, `d = tanh(h)`.
pub fn step(
    spec: &LayerSpec,
    params: &LayerParams,
    prev: &LayerState,
    topdown: Option<&[f64]>,
    z: &[f64],
) -> Result<LayerState> {
    params.check(spec)?;
    check_len("step h_prev", spec.dim_d, prev.h.len())?;
    check_len("step d_prev", spec.dim_d, prev.d.len())?;
    check_len("step z", spec.dim_z, z.len())?;
    match (spec.has_topdown(), topdown) {
        (true, Some(td)) => check_len("step topdown", spec.topdown_dim, td.len())?,
        (false, None) => {}
        (true, None) => {
            return Err(PvrnnError::InvalidArgument(
                "layer expects a top-down input".into(),
            ))
        }
        (false, Some(_)) => {
            return Err(PvrnnError::InvalidArgument(
                "top layer received a top-down input".into(),
            ))
        }
    }
    let u = drive(params, &prev.d, topdown, z);
    Ok(integrate(spec.tau, &prev.h, &u))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn spec(dim_d: usize, dim_z: usize, tau: f64, td: usize) -> LayerSpec {
        LayerSpec::new(dim_d, dim_z, tau, td).unwrap()
    }

    #[test]
    fn spec_validation() {
        assert!(LayerSpec::new(3, 1, 0.5, 0).is_err());
        assert!(LayerSpec::new(0, 1, 2.0, 0).is_err());
        assert!(LayerSpec::new(3, 0, 2.0, 0).is_err());
        assert!(!spec(3, 1, 2.0, 0).has_topdown());
        assert!(spec(3, 1, 2.0, 4).has_topdown());
    }

    #[test]
    fn first_step_prior_is_unit_gaussian() {
        let s = spec(4, 2, 3.0, 0);
        let p = LayerParams::random(&s, &mut ChaCha8Rng::seed_from_u64(1));
        let prior = prior_of(&p, &[0.3, -0.2, 0.1, 0.9], 1).unwrap();
        assert_eq!(prior, unit_gaussian(2).unwrap());
        assert!(prior_of(&p, &[0.0; 4], 0).is_err());
        assert!(prior_of(&p, &[0.0; 3], 2).is_err());
    }

    #[test]
    fn zero_prior_head_is_unit() {
        let s = spec(3, 2, 2.0, 0);
        let p = LayerParams::zeros(&s);
        let prior = prior_of(&p, &[0.5, 0.5, 0.5], 2).unwrap();
        assert_eq!(prior.mu, vec![0.0, 0.0]);
        assert_eq!(prior.sigma, vec![1.0, 1.0]);
    }

    #[test]
    fn closed_form_prior_head() {
        let s = spec(3, 2, 2.0, 0);
        let mut p = LayerParams::zeros(&s);
        p.prior.b_mu = vec![0.5f64.atanh(); 2];
        p.prior.b_sigma = vec![2.0f64.ln(); 2];
        let prior = prior_of(&p, &[0.1, 0.2, 0.3], 5).unwrap();
        for i in 0..2 {
            assert_abs_diff_eq!(prior.mu[i], 0.5, epsilon = 1e-15);
            assert_abs_diff_eq!(prior.sigma[i], 2.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn posterior_examples() {
        let s = spec(2, 1, 2.0, 0);
        let p = LayerParams::zeros(&s);
        let q = posterior_of(&p, &[0.4, -0.4], &AdaptiveEntry::zeros(1)).unwrap();
        assert_eq!((q.mu[0], q.sigma[0]), (0.0, 1.0));

        let a = AdaptiveEntry {
            mu: vec![0.9f64.atanh()],
            sigma: vec![0.1f64.ln()],
        };
        let q = posterior_of(&p, &[0.4, -0.4], &a).unwrap();
        assert_abs_diff_eq!(q.mu[0], 0.9, epsilon = 1e-12);
        assert_abs_diff_eq!(q.sigma[0], 0.1, epsilon = 1e-12);

        for a_sig in [-700.0, -30.0, 0.0, 30.0] {
            let a = AdaptiveEntry {
                mu: vec![0.0],
                sigma: vec![a_sig],
            };
            assert!(posterior_of(&p, &[0.0, 0.0], &a).unwrap().sigma[0] > 0.0);
        }
        assert!(posterior_of(&p, &[0.0, 0.0], &AdaptiveEntry::zeros(2)).is_err());
    }

    #[test]
    fn posterior_and_prior_heads_are_distinct() {
        let s = spec(3, 2, 2.0, 0);
        let mut p = LayerParams::random(&s, &mut ChaCha8Rng::seed_from_u64(2));
        let d = [0.3, -0.6, 0.2];
        let q = posterior_of(&p, &d, &AdaptiveEntry::zeros(2)).unwrap();
        let pr = prior_of(&p, &d, 2).unwrap();
        assert_ne!(q, pr);
        p.posterior = p.prior.clone();
        let q = posterior_of(&p, &d, &AdaptiveEntry::zeros(2)).unwrap();
        assert_eq!(q, pr);
    }

    #[test]
    fn tau_one_is_plain_recurrence() {
        let s = spec(3, 1, 1.0, 0);
        let p = LayerParams::random(&s, &mut ChaCha8Rng::seed_from_u64(3));
        let prev = LayerState::from_h(vec![5.0, -3.0, 0.7]);
        let z = [0.4];
        let u = drive(&p, &prev.d, None, &z);
        let next = step(&s, &p, &prev, None, &z).unwrap();
        assert_eq!(next.h, u);
        for (d, h) in next.d.iter().zip(&next.h) {
            assert_eq!(*d, h.tanh());
        }
    }

    #[test]
    fn zero_drive_keeps_zero_state() {
        let s = spec(2, 1, 4.0, 0);
        let p = LayerParams::zeros(&s);
        let next = step(&s, &p, &LayerState::zeros(2), None, &[0.0]).unwrap();
        assert_eq!(next, LayerState::zeros(2));
    }

    #[test]
    fn tau_two_half_step() {
        let s = spec(2, 1, 2.0, 0);
        let mut p = LayerParams::zeros(&s);
        p.b_d = vec![1.0, 1.0];
        let next = step(&s, &p, &LayerState::zeros(2), None, &[0.0]).unwrap();
        assert_eq!(next.h, vec![0.5, 0.5]);
        assert_abs_diff_eq!(next.d[0], 0.462117, epsilon = 1e-6);
    }

    #[test]
    fn huge_tau_freezes_state() {
        let s = spec(3, 2, 1e9, 0);
        let p = LayerParams::random(&s, &mut ChaCha8Rng::seed_from_u64(4));
        let mut state = LayerState::from_h(vec![0.2, -0.1, 0.05]);
        for _ in 0..50 {
            let next = step(&s, &p, &state, None, &[1.0, -1.0]).unwrap();
            for (a, b) in next.h.iter().zip(&state.h) {
                assert!((a - b).abs() < 1e-6);
            }
            state = next;
        }
    }

    #[test]
    fn topdown_presence_is_enforced() {
        let s = spec(2, 1, 2.0, 3);
        let p = LayerParams::zeros(&s);
        let prev = LayerState::zeros(2);
        assert!(step(&s, &p, &prev, None, &[0.0]).is_err());
        assert!(step(&s, &p, &prev, Some(&[0.0; 2]), &[0.0]).is_err());
        assert!(step(&s, &p, &prev, Some(&[0.0; 3]), &[0.0]).is_ok());
        let top = spec(2, 1, 2.0, 0);
        let p = LayerParams::zeros(&top);
        assert!(step(&top, &p, &prev, Some(&[0.0; 3]), &[0.0]).is_err());
    }

    #[test]
    fn state_stays_in_open_unit_interval() {
        let s = spec(4, 2, 2.0, 0);
        let p = LayerParams::random(&s, &mut ChaCha8Rng::seed_from_u64(6));
        let mut state = LayerState::zeros(4);
        for k in 0..100 {
            let z = [(k as f64).sin() * 3.0, 2.0];
            state = step(&s, &p, &state, None, &z).unwrap();
            assert!(state.d.iter().all(|d| d.abs() < 1.0));
        }
    }
}
