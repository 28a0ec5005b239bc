//! Reverse-mode gradients of the cost through a whole rollout, Adam, and a
//! central-difference oracle.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, PvrnnError, Result};
use crate::gaussian::kl_partials;
use crate::network::{
    adaptive_tensors, adaptive_tensors_mut, evaluate_cost, forward_posterior, rollout_posterior,
    zero_step_adaptive, CostBreakdown, Frame, MetaPriorConfig, Model, ModelParams, NetworkState,
    RolloutRecord, StepAdaptive,
};
use crate::noise::{NoiseSource, Replay};

/// Gradients shaped like the parameters and the adaptive steps in play.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    /// `None` when only the adaptive variables were differentiated.
    pub params: Option<ModelParams>,
    pub adaptive: Vec<StepAdaptive>,
}

impl GradientSet {
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = self
            .params
            .as_ref()
            .map(|p| p.tensors())
            .unwrap_or_default();
        out.extend(adaptive_tensors(&self.adaptive));
        out
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.tensors().concat()
    }

    /// Max of `|a - b| / max(|a|, |b|, floor)` over every entry.
    pub fn max_relative_error(&self, other: &GradientSet, floor: f64) -> f64 {
        let (a, b) = (self.flatten(), other.flatten());
        assert_eq!(a.len(), b.len(), "gradient sets differ in shape");
        a.iter()
            .zip(&b)
            .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// `self += other`, shapes must agree.
    pub fn accumulate(&mut self, other: &GradientSet) {
        if let (Some(a), Some(b)) = (self.params.as_mut(), other.params.as_ref()) {
            for (x, y) in a.tensors_mut().into_iter().zip(b.tensors()) {
                crate::linalg::add_assign(x, y);
            }
        }
        for (x, y) in adaptive_tensors_mut(&mut self.adaptive)
            .into_iter()
            .zip(adaptive_tensors(&other.adaptive))
        {
            crate::linalg::add_assign(x, y);
        }
    }
}

/// A rollout together with its cost and the cost's gradients.
#[derive(Debug, Clone)]
pub struct Differentiated {
    pub record: RolloutRecord,
    pub cost: CostBreakdown,
    pub grads: GradientSet,
}

/// Inputs of a posterior rollout over a window that starts after `init`.
#[derive(Debug, Clone, Copy)]
pub struct Window<'a> {
    pub init: &'a NetworkState,
    /// Absolute 1-based index of the first step.
    pub start_t: usize,
    pub adaptive: &'a [StepAdaptive],
    pub targets: &'a [Frame],
}

/// Forward rollout followed by backpropagation through time.
///
/// The gradient is pathwise: `eps` is held fixed and flows through
/// `z = mu + sigma * eps`. With `wrt_params = false` only the adaptive
/// variables are differentiated and the weight accumulators are skipped.
pub fn differentiate(
    model: &Model,
    meta: &MetaPriorConfig,
    window: Window<'_>,
    noise: &mut dyn NoiseSource,
    wrt_params: bool,
) -> Result<Differentiated> {
    check_len(
        "targets vs adaptive steps",
        window.adaptive.len(),
        window.targets.len(),
    )?;
    crate::network::check_targets(&model.spec, window.targets)?;
    let record = rollout_posterior(model, window.init, window.start_t, window.adaptive, noise)?;
    let cost = evaluate_cost(&record, window.targets, meta, &model.spec)?;
    let grads = backward(model, meta, &record, window.targets, wrt_params);
    Ok(Differentiated {
        record,
        cost,
        grads,
    })
}

fn backward(
    model: &Model,
    meta: &MetaPriorConfig,
    record: &RolloutRecord,
    targets: &[Frame],
    wrt_params: bool,
) -> GradientSet {
    let spec = &model.spec;
    let n_layers = spec.n_layers();
    let mut gp = wrt_params.then(|| ModelParams::zeros(spec));
    let mut ga: Vec<StepAdaptive> = vec![zero_step_adaptive(spec); record.len()];

    let mut g_d_next: Vec<Vec<f64>> = spec
        .layers
        .iter()
        .map(|n| vec![0.0; n.spec.dim_d])
        .collect();
    let mut g_h_next = g_d_next.clone();

    for k in (0..record.len()).rev() {
        let step = &record.steps[k];
        let t_abs = record.start_t + k;
        let d_prev_of = |l: usize| -> &[f64] {
            if k == 0 {
                &record.init.layers[l].d
            } else {
                &record.steps[k - 1].layers[l].state.d
            }
        };

        let mut g_d = std::mem::replace(
            &mut g_d_next,
            spec.layers
                .iter()
                .map(|n| vec![0.0; n.spec.dim_d])
                .collect(),
        );

        for (o, out) in spec.outputs.iter().enumerate() {
            let y = &step.outputs[o];
            let target = &targets[k][o];
            let inv_r = 1.0 / out.dim as f64;
            let g_pre: Vec<f64> = y
                .iter()
                .zip(target)
                .map(|(yi, ti)| (yi - ti) * inv_r * (1.0 - yi * yi))
                .collect();
            let head = &model.params.heads[o];
            let src_d = &step.layers[out.source].state.d;
            head.w.matvec_t_add(&g_pre, &mut g_d[out.source]);
            if let Some(gp) = gp.as_mut() {
                gp.heads[o].w.outer_add(&g_pre, src_d);
                crate::linalg::add_assign(&mut gp.heads[o].b, &g_pre);
            }
        }

        for l in (0..n_layers).rev() {
            let node = &spec.layers[l];
            let params = &model.params.layers[l];
            let ls = &step.layers[l];
            let d_prev = d_prev_of(l);
            let inv_tau = 1.0 / node.spec.tau;

            let gh: Vec<f64> = g_d[l]
                .iter()
                .zip(&ls.state.d)
                .zip(&g_h_next[l])
                .map(|((g, d), carry)| g * (1.0 - d * d) + carry)
                .collect();
            let gu: Vec<f64> = gh.iter().map(|g| g * inv_tau).collect();

            let mut g_d_prev = vec![0.0; node.spec.dim_d];
            params.w_dd.matvec_t_add(&gu, &mut g_d_prev);
            let mut gz = vec![0.0; node.spec.dim_z];
            params.w_dz.matvec_t_add(&gu, &mut gz);
            if let Some(p) = node.parent {
                params.w_td.matvec_t_add(&gu, &mut g_d[p]);
            }

            let coeff = meta.weight(l, t_abs) / node.spec.dim_z as f64;
            let q = ls.posterior.as_ref().expect("posterior rollout");
            let prior = &ls.prior;
            let dz = node.spec.dim_z;
            let mut pre_mq = vec![0.0; dz];
            let mut pre_sq = vec![0.0; dz];
            let mut pre_mp = vec![0.0; dz];
            let mut pre_sp = vec![0.0; dz];
            for i in 0..dz {
                let kp = kl_partials(q.mu[i], q.sigma[i], prior.mu[i], prior.sigma[i]);
                let g_mq = gz[i] + coeff * kp.d_mu_q;
                let g_sq = gz[i] * ls.eps[i] + coeff * kp.d_sigma_q;
                pre_mq[i] = g_mq * (1.0 - q.mu[i] * q.mu[i]);
                pre_sq[i] = g_sq * q.sigma[i];
                pre_mp[i] = coeff * kp.d_mu_p * (1.0 - prior.mu[i] * prior.mu[i]);
                pre_sp[i] = coeff * kp.d_sigma_p * prior.sigma[i];
            }
            params.posterior.w_mu.matvec_t_add(&pre_mq, &mut g_d_prev);
            params
                .posterior
                .w_sigma
                .matvec_t_add(&pre_sq, &mut g_d_prev);
            let conditional_prior = t_abs > 1;
            if conditional_prior {
                params.prior.w_mu.matvec_t_add(&pre_mp, &mut g_d_prev);
                params.prior.w_sigma.matvec_t_add(&pre_sp, &mut g_d_prev);
            }

            if let Some(gp) = gp.as_mut() {
                let g = &mut gp.layers[l];
                g.w_dd.outer_add(&gu, d_prev);
                if let Some(p) = node.parent {
                    g.w_td.outer_add(&gu, &step.layers[p].state.d);
                }
                g.w_dz.outer_add(&gu, &ls.z);
                crate::linalg::add_assign(&mut g.b_d, &gu);
                g.posterior.w_mu.outer_add(&pre_mq, d_prev);
                crate::linalg::add_assign(&mut g.posterior.b_mu, &pre_mq);
                g.posterior.w_sigma.outer_add(&pre_sq, d_prev);
                crate::linalg::add_assign(&mut g.posterior.b_sigma, &pre_sq);
                if conditional_prior {
                    g.prior.w_mu.outer_add(&pre_mp, d_prev);
                    crate::linalg::add_assign(&mut g.prior.b_mu, &pre_mp);
                    g.prior.w_sigma.outer_add(&pre_sp, d_prev);
                    crate::linalg::add_assign(&mut g.prior.b_sigma, &pre_sp);
                }
            }

            ga[k][l].mu = pre_mq;
            ga[k][l].sigma = pre_sq;
            g_d_next[l] = g_d_prev;
            g_h_next[l] = gh.iter().map(|g| g * (1.0 - inv_tau)).collect();
        }
    }

    GradientSet {
        params: gp,
        adaptive: ga,
    }
}

/// Gradient of the full-sequence cost w.r.t. every parameter and adaptive
/// variable, replaying the noise `eps_used` (`[step][layer]`) of the forward pass.
pub fn backprop(
    model: &Model,
    meta: &MetaPriorConfig,
    adaptive: &[StepAdaptive],
    targets: &[Frame],
    eps_used: &[Vec<Vec<f64>>],
) -> Result<GradientSet> {
    check_len("noise steps", adaptive.len(), eps_used.len())?;
    let init = NetworkState::zeros(&model.spec);
    let window = Window {
        init: &init,
        start_t: 1,
        adaptive,
        targets,
    };
    Ok(differentiate(model, meta, window, &mut Replay { eps: eps_used }, true)?.grads)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    pub fn with_alpha(alpha: f64) -> Self {
        Self {
            alpha,
            ..Self::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            alpha: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moment accumulators, one buffer per tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub config: AdamConfig,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub step: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig, tensors: &[&[f64]]) -> Self {
        let zeros: Vec<Vec<f64>> = tensors.iter().map(|t| vec![0.0; t.len()]).collect();
        Self {
            config,
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }
}

/// Bias-corrected Adam update of `values` in place.
pub fn adam_step(state: &mut AdamState, values: Vec<&mut [f64]>, grads: Vec<&[f64]>) -> Result<()> {
    check_len("adam tensors", state.m.len(), values.len())?;
    check_len("adam grads", values.len(), grads.len())?;
    for ((x, g), m) in values.iter().zip(&grads).zip(&state.m) {
        check_len("adam tensor width", m.len(), x.len())?;
        check_len("adam grad width", x.len(), g.len())?;
    }
    state.step += 1;
    let c = state.config;
    let t = state.step as i32;
    let bc1 = 1.0 - c.beta1.powi(t);
    let bc2 = 1.0 - c.beta2.powi(t);
    for (((x, g), m), v) in values
        .into_iter()
        .zip(grads)
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        for i in 0..x.len() {
            m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
            v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            x[i] -= c.alpha * m_hat / (v_hat.sqrt() + c.epsilon);
        }
    }
    Ok(())
}

/// Central differences of `f` at `x` with step `h`.
pub fn central_difference<F>(mut f: F, x: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> f64,
{
    if !(h > 0.0) || !h.is_finite() {
        return Err(PvrnnError::InvalidArgument(format!(
            "finite-difference step must be positive, got {h}"
        )));
    }
    let mut probe = x.to_vec();
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let up = f(&probe);
        probe[i] = orig - h;
        let down = f(&probe);
        probe[i] = orig;
        out.push((up - down) / (2.0 * h));
    }
    Ok(out)
}

/// Central-difference estimate of the same gradients [`backprop`] returns.
/// Costs two rollouts per entry; meant for small models.
pub fn finite_diff(
    model: &Model,
    meta: &MetaPriorConfig,
    adaptive: &[StepAdaptive],
    targets: &[Frame],
    eps_used: &[Vec<Vec<f64>>],
    h: f64,
) -> Result<GradientSet> {
    let cost_at = |m: &Model, a: &[StepAdaptive]| -> f64 {
        let rec = forward_posterior(m, a, targets, &mut Replay { eps: eps_used })
            .expect("shapes checked");
        evaluate_cost(&rec, targets, meta, &m.spec)
            .expect("shapes checked")
            .total()
    };
    // Validate shapes once up front.
    forward_posterior(model, adaptive, targets, &mut Replay { eps: eps_used })?;

    let flat_params: Vec<f64> = model.params.tensors().concat();
    let param_grad = central_difference(
        |x| {
            let mut m = model.clone();
            unflatten(m.params.tensors_mut(), x);
            cost_at(&m, adaptive)
        },
        &flat_params,
        h,
    )?;
    let flat_a: Vec<f64> = adaptive_tensors(adaptive).concat();
    let a_grad = central_difference(
        |x| {
            let mut a = adaptive.to_vec();
            unflatten(adaptive_tensors_mut(&mut a), x);
            cost_at(model, &a)
        },
        &flat_a,
        h,
    )?;

    let mut params = ModelParams::zeros(&model.spec);
    unflatten(params.tensors_mut(), &param_grad);
    let mut ga = adaptive.to_vec();
    unflatten(adaptive_tensors_mut(&mut ga), &a_grad);
    Ok(GradientSet {
        params: Some(params),
        adaptive: ga,
    })
}

fn unflatten(tensors: Vec<&mut [f64]>, flat: &[f64]) {
    let mut offset = 0;
    for t in tensors {
        let n = t.len();
        t.copy_from_slice(&flat[offset..offset + n]);
        offset += n;
    }
}
