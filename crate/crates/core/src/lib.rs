//! Certifiably robust model-based reinforcement learning.
//!
//! Policies are trained against a learned Gaussian dynamics model with an
//! extra loss computed by interval bound propagation through the
//! policy/model composition under bounded observation perturbations. The same
//! abstract rollouts produce replayable certificates that lower-bound the
//! worst-case cumulative reward.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attack;
pub mod certify;
pub mod domain;
pub mod env;
pub mod harness;
pub mod error;
pub mod linalg;
pub mod model;
pub mod nn;
pub mod textio;
pub mod train;

pub use domain::IntervalBox;
pub use error::{Error, Result};
