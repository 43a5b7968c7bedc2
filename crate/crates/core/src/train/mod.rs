//! Certified policy training: model fitting, model rollouts, the nominal and
//! symbolic losses, and primal–dual multiplier updates under an ε curriculum.

mod config;
mod loss;
mod run;
mod schedule;

pub use config::TrainConfig;
pub use loss::{normal_loss, symbolic_loss, LossGrad};
pub use run::{log_to_csv, nominal_return, train, EpochLog, TrainOutcome, LOG_HEADER};
pub use schedule::{EpsilonSchedule, EPS_START};
