use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::FitConfig;
use crate::textio;

use super::schedule::EpsilonSchedule;

/// Training hyperparameters. Read from a flat TOML file; every key is
/// optional and unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub env: String,
    pub seed: u64,
    /// Outer iterations `N`.
    pub epochs: usize,
    /// Policy updates per epoch `G`.
    pub grad_steps: usize,
    /// Model rollouts per epoch `M`.
    pub model_rollouts: usize,
    pub model_rollout_length: usize,
    /// Random-action episodes that seed the environment dataset.
    pub initial_episodes: usize,
    /// Policy episodes in the real environment per epoch.
    pub env_episodes_per_epoch: usize,
    /// Deterministic episodes used for the logged nominal reward.
    pub eval_episodes: usize,
    /// Symbolic rollout length `T_train`.
    pub t_train: usize,
    /// Robustness threshold `Δ`.
    pub robust_threshold: f64,
    /// Initial multiplier `λ₀`.
    pub lambda_init: f64,
    /// Primal step size `α`.
    pub policy_lr: f64,
    /// Dual step size `α′`.
    pub dual_lr: f64,
    pub eps_target: f64,
    pub eps_end_step: usize,
    pub eps_temperature: f64,
    /// Rollout length of the normal loss.
    pub normal_horizon: usize,
    pub normal_batch: usize,
    pub symbolic_batch: usize,
    pub policy_hidden: Vec<usize>,
    pub policy_log_sigma: f64,
    pub model_hidden: Vec<usize>,
    /// Use the environment's reward function instead of learning it.
    pub exact_reward: bool,
    pub model_fit_epochs: usize,
    pub model_batch: usize,
    pub model_lr: f64,
    /// Confidence parameter of the model error radius.
    pub delta_e: f64,
    /// Every `holdout_every`-th environment transition is held out.
    pub holdout_every: usize,
    pub data_capacity: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            env: "pointmass1d".into(),
            seed: 0,
            epochs: 20,
            grad_steps: 25,
            model_rollouts: 50,
            model_rollout_length: 1,
            initial_episodes: 10,
            env_episodes_per_epoch: 2,
            eval_episodes: 5,
            t_train: 1,
            robust_threshold: 0.1,
            lambda_init: 0.0,
            policy_lr: 3e-3,
            dual_lr: 0.5,
            eps_target: 0.1,
            eps_end_step: 250,
            eps_temperature: 4.0,
            normal_horizon: 5,
            normal_batch: 16,
            symbolic_batch: 8,
            policy_hidden: vec![16],
            policy_log_sigma: -1.0,
            model_hidden: vec![32],
            exact_reward: false,
            model_fit_epochs: 10,
            model_batch: 64,
            model_lr: 3e-3,
            delta_e: 0.1,
            holdout_every: 5,
            data_capacity: 100_000,
        }
    }
}

impl TrainConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&textio::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn schedule(&self) -> EpsilonSchedule {
        EpsilonSchedule {
            target: self.eps_target,
            end_step: self.eps_end_step,
            temperature: self.eps_temperature,
        }
    }

    pub fn fit_config(&self) -> FitConfig {
        FitConfig {
            epochs: self.model_fit_epochs,
            batch_size: self.model_batch,
            lr: self.model_lr,
            ..FitConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.into()));
        if !(self.robust_threshold > 0.0) {
            return fail("robust_threshold must be > 0");
        }
        if !(self.lambda_init >= 0.0) {
            return fail("lambda_init must be >= 0");
        }
        if !(self.policy_lr > 0.0) || !(self.dual_lr >= 0.0) || !(self.model_lr > 0.0) {
            return fail("step sizes must be positive");
        }
        if !(self.eps_target >= 0.0) || !self.eps_target.is_finite() {
            return fail("eps_target must be finite and >= 0");
        }
        if !(self.eps_temperature > 0.0) {
            return fail("eps_temperature must be > 0");
        }
        if !(0.0..1.0).contains(&self.delta_e) {
            return fail("delta_e must lie in [0, 1)");
        }
        if self.t_train == 0 || self.normal_horizon == 0 || self.model_rollout_length == 0 {
            return fail("rollout lengths must be >= 1");
        }
        if self.normal_batch == 0 || self.symbolic_batch == 0 || self.model_batch == 0 {
            return fail("batch sizes must be >= 1");
        }
        if self.model_rollouts == 0 {
            return fail("model_rollouts must be >= 1");
        }
        if self.initial_episodes == 0 {
            return fail("initial_episodes must be >= 1");
        }
        if self.holdout_every < 2 {
            return fail("holdout_every must be >= 2");
        }
        if !self.policy_log_sigma.is_finite() {
            return fail("policy_log_sigma must be finite");
        }
        crate::env::Mdp::by_name(&self.env).map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }
}
