use crate::env::PerturbationSpec;
use crate::error::{Error, Result};
use crate::model::{Dynamics, GaussianPolicy};

use super::rollout::{abstract_rollout_with_noise, AbstractTrace};

/// Why a trace failed verification.
#[derive(Clone, Debug, PartialEq)]
pub enum Rejection {
    PolicyFingerprint,
    ModelFingerprint,
    ReplayFailed(String),
    StepNotContained { step: usize, field: &'static str },
    TotalIsNotSum,
    TotalNotContained,
}

impl std::fmt::Display for Rejection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Rejection::PolicyFingerprint => f.write_str("policy fingerprint differs"),
            Rejection::ModelFingerprint => f.write_str("model fingerprint differs"),
            Rejection::ReplayFailed(e) => write!(f, "replay failed: {e}"),
            Rejection::StepNotContained { step, field } => {
                write!(f, "stored {field} box at step {step} does not contain the replayed box")
            }
            Rejection::TotalIsNotSum => f.write_str("total reward is not the sum of step rewards"),
            Rejection::TotalNotContained => f.write_str("stored total does not contain the replayed total"),
        }
    }
}

fn check_meta(trace: &AbstractTrace, model: &dyn Dynamics, spec: &PerturbationSpec) -> Result<()> {
    let m = &trace.meta;
    let mismatch = |what: String| Err(Error::MetadataMismatch(what));
    if m.epsilon.to_bits() != spec.epsilon().to_bits() {
        return mismatch(format!("trace ε {} vs requested {}", m.epsilon, spec.epsilon()));
    }
    if m.eps_e.to_bits() != model.model_error().to_bits() {
        return mismatch(format!("trace ε_E {} vs model {}", m.eps_e, model.model_error()));
    }
    if m.state_dim != model.state_dim() || m.action_dim != model.action_dim() {
        return mismatch("dimensions differ from the model".into());
    }
    if m.horizon != trace.steps.len() || m.horizon != trace.noise.len() {
        return mismatch("horizon differs from the stored step count".into());
    }
    if m.initial_state.len() != m.state_dim {
        return mismatch("initial state has the wrong dimension".into());
    }
    if m.model_kind != model.kind() {
        return mismatch(format!("trace model {} vs {}", m.model_kind, model.kind()));
    }
    Ok(())
}

/// Replays the rollout from the stored noise and checks every stored box.
/// Errors only on metadata that does not describe the given inputs.
pub fn check_certificate(
    trace: &AbstractTrace,
    policy: &GaussianPolicy,
    model: &dyn Dynamics,
    spec: &PerturbationSpec,
) -> Result<std::result::Result<(), Rejection>> {
    check_meta(trace, model, spec)?;
    if trace.meta.policy_fingerprint != policy.fingerprint() {
        return Ok(Err(Rejection::PolicyFingerprint));
    }
    if trace.meta.model_fingerprint != model.fingerprint() {
        return Ok(Err(Rejection::ModelFingerprint));
    }
    let (steps, total) = match abstract_rollout_with_noise(policy, model, &trace.meta.initial_state, spec, &trace.noise)
    {
        Ok(r) => r,
        Err(e) => return Ok(Err(Rejection::ReplayFailed(e.to_string()))),
    };
    for (t, (stored, fresh)) in trace.steps.iter().zip(&steps).enumerate() {
        let fields = [
            ("state", &stored.state, &fresh.state),
            ("observed", &stored.observed, &fresh.observed),
            ("action", &stored.action, &fresh.action),
            ("reward", &stored.reward, &fresh.reward),
        ];
        for (field, s, f) in fields {
            if !s.contains(f) {
                return Ok(Err(Rejection::StepNotContained { step: t, field }));
            }
        }
    }
    match trace.reward_sum() {
        Ok(sum) if sum == trace.total_reward => {}
        _ => return Ok(Err(Rejection::TotalIsNotSum)),
    }
    if !trace.total_reward.contains(&total) {
        return Ok(Err(Rejection::TotalNotContained));
    }
    Ok(Ok(()))
}

/// `true` iff the trace is a valid certificate for `policy` and `model`.
pub fn verify_certificate(
    trace: &AbstractTrace,
    policy: &GaussianPolicy,
    model: &dyn Dynamics,
    spec: &PerturbationSpec,
) -> Result<bool> {
    Ok(check_certificate(trace, policy, model, spec)?.is_ok())
}
