use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::env::{Mdp, PerturbationSpec};
use crate::error::{check_dim, Error, Result};
use crate::model::{Dynamics, GaussianPolicy};

use super::bound::{probabilistic_bound, BoundInputs};
use super::rollout::{draw_noise, trace_from_noise, AbstractTrace};

/// Sampling parameters of the worst-case reward estimate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CertConfig {
    pub samples: usize,
    pub horizon: usize,
    /// Confidence of the probabilistic bound.
    pub delta: f64,
    pub epsilon: f64,
}

impl CertConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::Config("samples must be at least 1".into()));
        }
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Config(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        if !(self.epsilon >= 0.0) || !self.epsilon.is_finite() {
            return Err(Error::Config(format!("epsilon must be finite and >= 0, got {}", self.epsilon)));
        }
        Ok(())
    }
}

/// A sample whose abstract rollout could not be completed.
#[derive(Clone, Debug, PartialEq)]
pub struct NotCertifiable {
    pub index: usize,
    pub step: usize,
}

pub type SampleOutcome = std::result::Result<AbstractTrace, NotCertifiable>;

#[derive(Clone, Debug)]
pub struct WcarResult {
    /// Mean lower bound; NaN when any sample is not certifiable.
    pub mean: f64,
    /// Mean over certified samples only.
    pub certified_mean: f64,
    /// Unbiased sample variance of the certified lower bounds.
    pub variance: f64,
    pub outcomes: Vec<SampleOutcome>,
}

impl WcarResult {
    pub fn certified(&self) -> usize {
        self.outcomes.iter().filter(|o| o.is_ok()).count()
    }

    pub fn lower_bounds(&self) -> Vec<f64> {
        self.outcomes.iter().filter_map(|o| o.as_ref().ok()).map(|t| t.lower_bound()).collect()
    }
}

/// RNG for sample `index` of a run seeded with `seed`.
pub fn sample_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// `(mean, sample variance)` accumulated in index order.
pub fn mean_and_variance(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() < 2 {
        0.0
    } else {
        values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
    };
    (mean, var)
}

/// Summarises lower bounds and failures into a result.
pub fn summarize(outcomes: Vec<SampleOutcome>) -> WcarResult {
    let lbs: Vec<f64> = outcomes.iter().filter_map(|o| o.as_ref().ok()).map(|t| t.lower_bound()).collect();
    let (certified_mean, variance) = mean_and_variance(&lbs);
    let mean = if lbs.len() == outcomes.len() { certified_mean } else { f64::NAN };
    WcarResult {
        mean,
        certified_mean,
        variance,
        outcomes,
    }
}

/// Samples `s₀ ~ S₀` and noise `cfg.samples` times and averages the certified
/// reward lower bounds. Samples run in parallel on independent streams.
pub fn wcar(
    policy: &GaussianPolicy,
    model: &dyn Dynamics,
    env: &Mdp,
    cfg: &CertConfig,
    seed: u64,
) -> Result<WcarResult> {
    cfg.validate()?;
    check_dim(env.state_dim(), model.state_dim())?;
    let spec = PerturbationSpec::new(cfg.epsilon)?;
    let outcomes: Vec<Result<SampleOutcome>> = (0..cfg.samples)
        .into_par_iter()
        .map(|index| {
            let mut rng = sample_rng(seed, index);
            let s0 = env.sample_initial(&mut rng);
            let noise = draw_noise(policy, model, cfg.horizon, &mut rng);
            match trace_from_noise(policy, model, &s0, &spec, noise, seed, index) {
                Ok(trace) => Ok(Ok(trace)),
                Err(Error::BoundExplosion { step }) => Ok(Err(NotCertifiable { index, step })),
                Err(e) => Err(e),
            }
        })
        .collect();
    Ok(summarize(outcomes.into_iter().collect::<Result<Vec<_>>>()?))
}

/// Lipschitz constants and model-error inputs for the bound.
pub fn bound_inputs(
    result: &WcarResult,
    policy: &GaussianPolicy,
    model: &dyn Dynamics,
    cfg: &CertConfig,
) -> BoundInputs {
    BoundInputs {
        wcar_mean: result.mean,
        wcar_variance: result.variance,
        samples: result.outcomes.len(),
        delta: cfg.delta,
        delta_e: model.model_error_confidence(),
        horizon: cfg.horizon,
        l_e: model.lipschitz_upper(),
        l_pi: policy.mean_net.lipschitz_upper(),
        l_r: model.reward_lipschitz(),
        d_e: model.worst_residual(),
    }
}

/// Probabilistic bound for a finished estimate; NaN when not certifiable.
pub fn certified_bound(inputs: &BoundInputs) -> Result<f64> {
    if inputs.wcar_mean.is_nan() {
        return Ok(f64::NAN);
    }
    probabilistic_bound(inputs)
}
