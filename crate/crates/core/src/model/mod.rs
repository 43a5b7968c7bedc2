//! Policies, the learned dynamics model, and transition data.

mod dataset;
mod dynamics;
mod gaussian;
mod policy;

pub use dataset::{Transition, TransitionDataset};
pub use dynamics::{Dynamics, ExactModel, ModelChoice};
pub use gaussian::{fit_model, measure_model_error, residual_quantile, FitConfig, FitReport, GaussianModel, ModelError};
pub use policy::{meta_path, GaussianPolicy};
