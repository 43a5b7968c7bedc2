//! Worst-case abstract rollouts, the averaged reward lower bound, the
//! probabilistic bound on true worst-case reward, and certificate bundles.

mod bound;
mod bundle;
pub mod format;
mod rollout;
mod verify;
mod wcar;

pub use bound::{compounding_factor, model_error_correction, probabilistic_bound, BoundInputs};
pub use bundle::{verify_bundle, write_bundle, BundleEntry, BundleReport, BundleSummary, POLICY_FILE, SUMMARY_FILE, TRACE_DIR};
pub use rollout::{
    abstract_rollout, abstract_rollout_with_noise, concrete_rollout_with_noise, draw_noise, AbstractTrace,
    ConcreteRollout, StepNoise, TraceMeta, TraceStep, BOUND_LIMIT,
};
pub use verify::{check_certificate, verify_certificate, Rejection};
pub use wcar::{
    bound_inputs, certified_bound, mean_and_variance, sample_rng, summarize, wcar, CertConfig, NotCertifiable,
    SampleOutcome, WcarResult,
};
