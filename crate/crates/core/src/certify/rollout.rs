use rand::Rng;

use crate::domain::IntervalBox;
use crate::env::PerturbationSpec;
use crate::error::{check_dim, Error, Result};
use crate::model::{Dynamics, GaussianPolicy};

/// Boxes beyond this magnitude make a trace not certifiable.
pub const BOUND_LIMIT: f64 = 1e12;

/// Noise drawn for one step and shared between abstract and concrete rollouts.
#[derive(Clone, Debug, PartialEq)]
pub struct StepNoise {
    /// Action offset `e_π` already scaled by the policy's σ.
    pub action: Vec<f64>,
    /// Standard-normal draw `e`, scaled by the model's σ at use.
    pub state: Vec<f64>,
}

/// One step of an abstract trace.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceStep {
    pub state: IntervalBox,
    pub observed: IntervalBox,
    pub action: IntervalBox,
    pub reward: IntervalBox,
}

/// Provenance of a trace.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceMeta {
    pub index: usize,
    pub seed: u64,
    pub epsilon: f64,
    pub eps_e: f64,
    pub horizon: usize,
    pub state_dim: usize,
    pub action_dim: usize,
    pub model_kind: String,
    pub policy_fingerprint: String,
    pub model_fingerprint: String,
    pub initial_state: Vec<f64>,
}

/// Abstract trace `τ#`: the certificate for one noise resolution.
#[derive(Clone, Debug, PartialEq)]
pub struct AbstractTrace {
    pub meta: TraceMeta,
    pub steps: Vec<TraceStep>,
    pub noise: Vec<StepNoise>,
    /// `R_min#`.
    pub total_reward: IntervalBox,
}

impl AbstractTrace {
    /// `inf β(R_min#)`.
    pub fn lower_bound(&self) -> f64 {
        self.total_reward.lower_at(0)
    }

    /// Interval sum of the per-step reward boxes.
    pub fn reward_sum(&self) -> Result<IntervalBox> {
        let mut total = IntervalBox::from_point(&[0.0])?;
        for step in &self.steps {
            total = total.add(&step.reward)?;
        }
        Ok(total)
    }
}

/// Draws the shared noise for `horizon` steps.
pub fn draw_noise<R: Rng + ?Sized>(
    policy: &GaussianPolicy,
    model: &dyn Dynamics,
    horizon: usize,
    rng: &mut R,
) -> Vec<StepNoise> {
    let k = model.state_dim();
    (0..horizon)
        .map(|_| {
            let action = policy.sample_noise(rng);
            let state = (0..k).map(|_| rng.sample(rand_distr::StandardNormal)).collect();
            StepNoise { action, state }
        })
        .collect()
}

fn scaled_noise(model: &dyn Dynamics, e: &[f64]) -> Vec<f64> {
    model.noise_std().iter().zip(e).map(|(sd, e)| sd * e).collect()
}

fn check_dims(policy: &GaussianPolicy, model: &dyn Dynamics, s0: &[f64], noise: &[StepNoise]) -> Result<()> {
    check_dim(model.state_dim(), s0.len())?;
    check_dim(model.state_dim(), policy.state_dim())?;
    check_dim(model.action_dim(), policy.action_dim())?;
    for n in noise {
        check_dim(model.action_dim(), n.action.len())?;
        check_dim(model.state_dim(), n.state.len())?;
    }
    Ok(())
}

fn explosion(step: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::NonFinite(_) => Error::BoundExplosion { step },
        other => other,
    }
}

fn bounded(b: &IntervalBox, step: usize) -> Result<()> {
    if b.is_bounded(BOUND_LIMIT) {
        Ok(())
    } else {
        Err(Error::BoundExplosion { step })
    }
}

/// Box-valued worst-case rollout over a fixed noise record. Returns the step
/// boxes and `R_min#`.
pub fn abstract_rollout_with_noise(
    policy: &GaussianPolicy,
    model: &dyn Dynamics,
    s0: &[f64],
    spec: &PerturbationSpec,
    noise: &[StepNoise],
) -> Result<(Vec<TraceStep>, IntervalBox)> {
    check_dims(policy, model, s0, noise)?;
    let eps_e = model.model_error();
    let mut state = IntervalBox::from_point(s0)?;
    let mut total = IntervalBox::from_point(&[0.0])?;
    let mut steps = Vec::with_capacity(noise.len());
    for (t, n) in noise.iter().enumerate() {
        let on_err = explosion(t);
        let observed = state.widen(spec.epsilon())?;
        let action = policy
            .mean_abs(&observed)
            .and_then(|a| a.add_point(&n.action))
            .map_err(&on_err)?;
        bounded(&action, t)?;
        let (mean_next, reward) = model.predict_abs(&state, &action).map_err(&on_err)?;
        let next = mean_next
            .add_point(&scaled_noise(model, &n.state))
            .and_then(|b| b.widen(eps_e))
            .map_err(&on_err)?;
        bounded(&reward, t)?;
        bounded(&next, t)?;
        total = total.add(&reward).map_err(&on_err)?;
        bounded(&total, t)?;
        steps.push(TraceStep {
            state,
            observed,
            action,
            reward,
        });
        state = next;
    }
    Ok((steps, total))
}

/// Draws a noise record and runs the abstract rollout from `s0`.
#[allow(clippy::too_many_arguments)]
pub fn abstract_rollout<R: Rng + ?Sized>(
    policy: &GaussianPolicy,
    model: &dyn Dynamics,
    s0: &[f64],
    spec: &PerturbationSpec,
    horizon: usize,
    seed: u64,
    index: usize,
    rng: &mut R,
) -> Result<AbstractTrace> {
    let noise = draw_noise(policy, model, horizon, rng);
    trace_from_noise(policy, model, s0, spec, noise, seed, index)
}

pub(crate) fn trace_from_noise(
    policy: &GaussianPolicy,
    model: &dyn Dynamics,
    s0: &[f64],
    spec: &PerturbationSpec,
    noise: Vec<StepNoise>,
    seed: u64,
    index: usize,
) -> Result<AbstractTrace> {
    let (steps, total_reward) = abstract_rollout_with_noise(policy, model, s0, spec, &noise)?;
    Ok(AbstractTrace {
        meta: TraceMeta {
            index,
            seed,
            epsilon: spec.epsilon(),
            eps_e: model.model_error(),
            horizon: noise.len(),
            state_dim: model.state_dim(),
            action_dim: model.action_dim(),
            model_kind: model.kind(),
            policy_fingerprint: policy.fingerprint(),
            model_fingerprint: model.fingerprint(),
            initial_state: s0.to_vec(),
        },
        steps,
        noise,
        total_reward,
    })
}

/// Concrete trajectory under an observation adversary.
#[derive(Clone, Debug, PartialEq)]
pub struct ConcreteRollout {
    pub states: Vec<Vec<f64>>,
    pub observations: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    pub total: f64,
}

/// Concrete rollout under the same noise record. `observe(t, s)` returns the
/// perturbed observation; the true state evolves from `s`.
pub fn concrete_rollout_with_noise(
    policy: &GaussianPolicy,
    model: &dyn Dynamics,
    s0: &[f64],
    noise: &[StepNoise],
    mut observe: impl FnMut(usize, &[f64]) -> Vec<f64>,
) -> Result<ConcreteRollout> {
    check_dims(policy, model, s0, noise)?;
    let mut s = s0.to_vec();
    let mut out = ConcreteRollout {
        states: Vec::with_capacity(noise.len()),
        observations: Vec::with_capacity(noise.len()),
        actions: Vec::with_capacity(noise.len()),
        rewards: Vec::with_capacity(noise.len()),
        total: 0.0,
    };
    for (t, n) in noise.iter().enumerate() {
        let obs = observe(t, &s);
        check_dim(s.len(), obs.len())?;
        let a: Vec<f64> = policy.mean(&obs)?.iter().zip(&n.action).map(|(m, e)| m + e).collect();
        let (mean_next, r) = model.predict(&s, &a)?;
        let next: Vec<f64> = mean_next
            .iter()
            .zip(scaled_noise(model, &n.state))
            .map(|(m, e)| m + e)
            .collect();
        out.total += r;
        out.states.push(s);
        out.observations.push(obs);
        out.actions.push(a);
        out.rewards.push(r);
        s = next;
    }
    if !out.total.is_finite() {
        return Err(Error::NonFinite("concrete rollout reward"));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Mdp;
    use crate::model::ExactModel;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn zero_noise(t: usize) -> Vec<StepNoise> {
        vec![
            StepNoise {
                action: vec![0.0],
                state: vec![0.0],
            };
            t
        ]
    }

    #[test]
    fn linear_toy_reward_box() {
        let policy = GaussianPolicy::identity(1).unwrap();
        let model = ExactModel::new(Mdp::linear_toy());
        let spec = PerturbationSpec::new(0.5).unwrap();
        let (steps, total) = abstract_rollout_with_noise(&policy, &model, &[1.0], &spec, &zero_noise(2)).unwrap();
        assert!((total.lower_at(0) - 4.0).abs() < 1e-9);
        assert!((total.upper_at(0) - 8.0).abs() < 1e-9);
        assert_eq!((steps[0].reward.lower_at(0), steps[0].reward.upper_at(0)), (1.5, 2.5));
        assert_eq!((steps[1].state.lower_at(0), steps[1].state.upper_at(0)), (1.5, 2.5));
        assert_eq!((steps[1].reward.lower_at(0), steps[1].reward.upper_at(0)), (2.5, 5.5));
    }

    #[test]
    fn linear_toy_noise_shifts_by_two_e() {
        let policy = GaussianPolicy::identity(1).unwrap();
        let model = ExactModel::new(Mdp::linear_toy());
        let spec = PerturbationSpec::new(0.5).unwrap();
        let e = 0.37;
        let noise = vec![
            StepNoise {
                action: vec![0.0],
                state: vec![e],
            },
            StepNoise {
                action: vec![0.0],
                state: vec![0.0],
            },
        ];
        let (_, total) = abstract_rollout_with_noise(&policy, &model, &[1.0], &spec, &noise).unwrap();
        assert!((total.lower_at(0) - (4.0 + 2.0 * e)).abs() < 1e-12);
        assert!((total.upper_at(0) - (8.0 + 2.0 * e)).abs() < 1e-12);
    }

    #[test]
    fn zero_epsilon_collapses_to_concrete() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let policy = GaussianPolicy::random(2, 2, &[8], -1.0, &mut rng).unwrap();
        let model = ExactModel::new(Mdp::pointmass(2).unwrap());
        let spec = PerturbationSpec::new(0.0).unwrap();
        let noise = draw_noise(&policy, &model, 6, &mut rng);
        let (_, total) = abstract_rollout_with_noise(&policy, &model, &[0.3, -0.4], &spec, &noise).unwrap();
        let concrete = concrete_rollout_with_noise(&policy, &model, &[0.3, -0.4], &noise, |_, s| s.to_vec()).unwrap();
        assert!(total.is_point());
        assert!((total.center()[0] - concrete.total).abs() < 1e-12);
    }

    #[test]
    fn model_error_widens_states_only() {
        let policy = GaussianPolicy::identity(1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut model = crate::model::GaussianModel::random(1, 1, &[4], &mut rng).unwrap();
        let spec = PerturbationSpec::new(0.0).unwrap();
        let (steps0, _) = abstract_rollout_with_noise(&policy, &model, &[0.2], &spec, &zero_noise(2)).unwrap();
        model.eps_e = 0.1;
        let (steps1, _) = abstract_rollout_with_noise(&policy, &model, &[0.2], &spec, &zero_noise(2)).unwrap();
        assert_eq!(steps0[0].reward, steps1[0].reward);
        assert!((steps1[1].state.deviation()[0] - steps0[1].state.deviation()[0] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn explosion_is_reported_with_step() {
        let policy = GaussianPolicy::identity(1).unwrap();
        let model = ExactModel::new(Mdp::linear_toy());
        let spec = PerturbationSpec::new(1e11).unwrap();
        let err = abstract_rollout_with_noise(&policy, &model, &[1.0], &spec, &zero_noise(5)).unwrap_err();
        assert!(matches!(err, Error::BoundExplosion { .. }), "{err}");
    }

    #[test]
    fn observed_box_contains_widened_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let policy = GaussianPolicy::random(1, 1, &[4], -1.0, &mut rng).unwrap();
        let model = ExactModel::new(Mdp::pointmass(1).unwrap());
        let spec = PerturbationSpec::new(0.1).unwrap();
        let trace = abstract_rollout(&policy, &model, &[0.5], &spec, 5, 1, 0, &mut rng).unwrap();
        for s in &trace.steps {
            assert!(s.observed.contains(&s.state.widen(0.1).unwrap()));
        }
        assert_eq!(trace.reward_sum().unwrap(), trace.total_reward);
    }
}
