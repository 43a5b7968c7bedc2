//! Policy losses through the learned model, with exact reverse-mode gradients.

use crate::certify::{abstract_rollout_with_noise, concrete_rollout_with_noise, StepNoise};
use crate::domain::IntervalBox;
use crate::env::PerturbationSpec;
use crate::error::{check_dim, Error, Result};
use crate::model::{GaussianModel, GaussianPolicy};
use crate::nn::ParamGradient;

/// Loss value and its gradient with respect to the policy mean network.
#[derive(Clone, Debug)]
pub struct LossGrad {
    pub value: f64,
    pub grad: ParamGradient,
}

fn split(v: Vec<f64>, k: usize) -> (Vec<f64>, Vec<f64>) {
    let tail = v[k..].to_vec();
    let mut head = v;
    head.truncate(k);
    (head, tail)
}

fn add_into(acc: &mut [f64], v: &[f64]) {
    for (a, b) in acc.iter_mut().zip(v) {
        *a += b;
    }
}

/// Vector-Jacobian product of `(s, a) ↦ (s + Δs, r)`.
fn model_vjp(model: &GaussianModel, s: &[f64], a: &[f64], up_next: &[f64], up_r: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut x = s.to_vec();
    x.extend_from_slice(a);
    let mut up = up_next.to_vec();
    up.push(if model.reward_env.is_some() { 0.0 } else { up_r });
    let (_, gx) = model.mean_net.backward_with_input(&x, &up)?;
    let (mut gs, mut ga) = split(gx, s.len());
    add_into(&mut gs, up_next);
    if let Some(env) = &model.reward_env {
        let (rs, ra) = env.reward_grad(s, a)?;
        for (g, v) in gs.iter_mut().zip(&rs) {
            *g += up_r * v;
        }
        for (g, v) in ga.iter_mut().zip(&ra) {
            *g += up_r * v;
        }
    }
    Ok((gs, ga))
}

/// Box version of [`model_vjp`] over center and deviation.
#[allow(clippy::type_complexity)]
fn model_vjp_abs(
    model: &GaussianModel,
    s: &IntervalBox,
    a: &IntervalBox,
    up_next: (&[f64], &[f64]),
    up_r: (f64, f64),
) -> Result<((Vec<f64>, Vec<f64>), (Vec<f64>, Vec<f64>))> {
    let exact = model.reward_env.is_some();
    let mut uc = up_next.0.to_vec();
    uc.push(if exact { 0.0 } else { up_r.0 });
    let mut ud = up_next.1.to_vec();
    ud.push(if exact { 0.0 } else { up_r.1 });
    let (_, gc, gd) = model.mean_net.backward_abs_with_input(&s.concat(a), &uc, &ud)?;
    let k = s.dim();
    let (mut gsc, mut gac) = split(gc, k);
    let (mut gsd, mut gad) = split(gd, k);
    add_into(&mut gsc, up_next.0);
    add_into(&mut gsd, up_next.1);
    if let Some(env) = &model.reward_env {
        let ((rsc, rsd), (rac, rad)) = env.reward_abs_vjp(s, a, up_r)?;
        add_into(&mut gsc, &rsc);
        add_into(&mut gsd, &rsd);
        add_into(&mut gac, &rac);
        add_into(&mut gad, &rad);
    }
    Ok(((gsc, gsd), (gac, gad)))
}

/// Negative mean return of `horizon`-step rollouts through the model mean
/// from each start state, with fixed reparameterized action noise
/// `action_noise[b][t]`.
pub fn normal_loss(
    policy: &GaussianPolicy,
    model: &GaussianModel,
    starts: &[Vec<f64>],
    action_noise: &[Vec<Vec<f64>>],
) -> Result<LossGrad> {
    if starts.is_empty() {
        return Err(Error::EmptyDataset("normal-loss batch"));
    }
    check_dim(starts.len(), action_noise.len())?;
    let scale = 1.0 / starts.len() as f64;
    let mut grad = ParamGradient::zeros_like(&policy.mean_net);
    let mut value = 0.0;
    for (s0, noise) in starts.iter().zip(action_noise) {
        let mut states = vec![s0.clone()];
        let mut actions = Vec::with_capacity(noise.len());
        for e in noise {
            let s = states.last().expect("nonempty");
            let a: Vec<f64> = policy.mean(s)?.iter().zip(e).map(|(m, e)| m + e).collect();
            let (next, r) = model.predict(s, &a)?;
            value -= scale * r;
            actions.push(a);
            states.push(next);
        }
        let mut g_next = vec![0.0; s0.len()];
        for t in (0..noise.len()).rev() {
            let (mut gs, ga) = model_vjp(model, &states[t], &actions[t], &g_next, -scale)?;
            let (gp, gobs) = policy.mean_net.backward_with_input(&states[t], &ga)?;
            grad.add_scaled(&gp, 1.0);
            add_into(&mut gs, &gobs);
            g_next = gs;
        }
    }
    if !value.is_finite() || !grad.is_finite() {
        return Err(Error::NonFinite("normal loss"));
    }
    Ok(LossGrad { value, grad })
}

/// `R^o - inf β(R_min#)` for one start state and shared noise record, with
/// the gradient flowing through both the concrete and the box rollout.
pub fn symbolic_loss(
    policy: &GaussianPolicy,
    model: &GaussianModel,
    s0: &[f64],
    spec: &PerturbationSpec,
    noise: &[StepNoise],
) -> Result<LossGrad> {
    let concrete = concrete_rollout_with_noise(policy, model, s0, noise, |_, s| s.to_vec())?;
    let (steps, total) = abstract_rollout_with_noise(policy, model, s0, spec, noise)?;
    let value = concrete.total - total.lower_at(0);
    let mut grad = ParamGradient::zeros_like(&policy.mean_net);
    let k = s0.len();

    // concrete return, upstream +1 on every reward
    let mut g_next = vec![0.0; k];
    for t in (0..noise.len()).rev() {
        let (mut gs, ga) = model_vjp(model, &concrete.states[t], &concrete.actions[t], &g_next, 1.0)?;
        let (gp, gobs) = policy.mean_net.backward_with_input(&concrete.observations[t], &ga)?;
        grad.add_scaled(&gp, 1.0);
        add_into(&mut gs, &gobs);
        g_next = gs;
    }

    // minus the lower bound: upstream -1 on reward centers, +1 on deviations
    let mut gc_next = vec![0.0; k];
    let mut gd_next = vec![0.0; k];
    for t in (0..steps.len()).rev() {
        let step = &steps[t];
        let ((mut gsc, mut gsd), (gac, gad)) =
            model_vjp_abs(model, &step.state, &step.action, (&gc_next, &gd_next), (-1.0, 1.0))?;
        let (gp, goc, god) = policy.mean_net.backward_abs_with_input(&step.observed, &gac, &gad)?;
        grad.add_scaled(&gp, 1.0);
        add_into(&mut gsc, &goc);
        add_into(&mut gsd, &god);
        gc_next = gsc;
        gd_next = gsd;
    }
    if !value.is_finite() || !grad.is_finite() {
        return Err(Error::BoundExplosion { step: steps.len() });
    }
    Ok(LossGrad { value, grad })
}
