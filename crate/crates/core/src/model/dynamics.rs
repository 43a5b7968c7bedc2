//! The dynamics interface used by abstract rollouts.

use std::path::Path;

use crate::domain::IntervalBox;
use crate::env::Mdp;
use crate::error::{Error, Result};
use crate::textio::{self, fmt_vec, parse_vec, sha256_hex, Lines};

use super::gaussian::GaussianModel;

/// A separable Gaussian transition model `μ(s, a) + σ ⊙ e` with a
/// deterministic reward, evaluable on points and on boxes.
pub trait Dynamics: Send + Sync {
    fn state_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    /// Mean next state and reward.
    fn predict(&self, s: &[f64], a: &[f64]) -> Result<(Vec<f64>, f64)>;
    /// Box transfer of [`Dynamics::predict`].
    fn predict_abs(&self, s: &IntervalBox, a: &IntervalBox) -> Result<(IntervalBox, IntervalBox)>;
    /// Diagonal of `Σ^{1/2}` over the state.
    fn noise_std(&self) -> Vec<f64>;
    /// Error radius `ε_E` added to every predicted state box.
    fn model_error(&self) -> f64;
    /// `δ_E` of the error radius.
    fn model_error_confidence(&self) -> f64;
    /// Worst observed residual `d_E`.
    fn worst_residual(&self) -> f64;
    /// l∞ Lipschitz bound of the mean transition.
    fn lipschitz_upper(&self) -> f64;
    /// l∞ Lipschitz bound of the reward.
    fn reward_lipschitz(&self) -> f64;
    /// `"learned"` or `"exact:<env>"`.
    fn kind(&self) -> String;
    fn fingerprint(&self) -> String;
}

impl Dynamics for GaussianModel {
    fn state_dim(&self) -> usize {
        GaussianModel::state_dim(self)
    }

    fn action_dim(&self) -> usize {
        GaussianModel::action_dim(self)
    }

    fn predict(&self, s: &[f64], a: &[f64]) -> Result<(Vec<f64>, f64)> {
        GaussianModel::predict(self, s, a)
    }

    fn predict_abs(&self, s: &IntervalBox, a: &IntervalBox) -> Result<(IntervalBox, IntervalBox)> {
        GaussianModel::predict_abs(self, s, a)
    }

    fn noise_std(&self) -> Vec<f64> {
        self.state_noise_std()
    }

    fn model_error(&self) -> f64 {
        self.eps_e
    }

    fn model_error_confidence(&self) -> f64 {
        self.delta_e
    }

    fn worst_residual(&self) -> f64 {
        self.d_e
    }

    fn lipschitz_upper(&self) -> f64 {
        GaussianModel::lipschitz_upper(self)
    }

    fn reward_lipschitz(&self) -> f64 {
        match &self.reward_env {
            Some(env) => env.reward_lipschitz(),
            None => self.mean_net.lipschitz_upper(),
        }
    }

    fn kind(&self) -> String {
        match &self.reward_env {
            Some(env) => format!("learned+reward:{}", env.name()),
            None => "learned".into(),
        }
    }

    fn fingerprint(&self) -> String {
        GaussianModel::fingerprint(self)
    }
}

/// A white-box environment used as its own model: exact mean dynamics and
/// reward, `ε_E = δ_E = d_E = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExactModel {
    env: Mdp,
}

impl ExactModel {
    pub fn new(env: Mdp) -> Self {
        Self { env }
    }

    pub fn env(&self) -> &Mdp {
        &self.env
    }
}

impl Dynamics for ExactModel {
    fn state_dim(&self) -> usize {
        self.env.state_dim()
    }

    fn action_dim(&self) -> usize {
        self.env.action_dim()
    }

    fn predict(&self, s: &[f64], a: &[f64]) -> Result<(Vec<f64>, f64)> {
        Ok((self.env.mean_dynamics(s, a)?, self.env.reward(s, a)?))
    }

    fn predict_abs(&self, s: &IntervalBox, a: &IntervalBox) -> Result<(IntervalBox, IntervalBox)> {
        Ok((self.env.mean_dynamics_abs(s, a)?, self.env.reward_abs(s, a)?))
    }

    fn noise_std(&self) -> Vec<f64> {
        self.env.noise_std().to_vec()
    }

    fn model_error(&self) -> f64 {
        0.0
    }

    fn model_error_confidence(&self) -> f64 {
        0.0
    }

    fn worst_residual(&self) -> f64 {
        0.0
    }

    fn lipschitz_upper(&self) -> f64 {
        self.env.dynamics_lipschitz()
    }

    fn reward_lipschitz(&self) -> f64 {
        self.env.reward_lipschitz()
    }

    fn kind(&self) -> String {
        format!("exact:{}", self.env.name())
    }

    fn fingerprint(&self) -> String {
        let desc = format!(
            "{} noise {}",
            self.kind(),
            fmt_vec(self.env.noise_std())
        );
        sha256_hex(desc.as_bytes())
    }
}

/// Either dynamics model, with on-disk persistence as a certificate input.
#[derive(Clone, Debug, PartialEq)]
pub enum ModelChoice {
    Exact(ExactModel),
    Learned(GaussianModel),
}

impl ModelChoice {
    pub fn as_dynamics(&self) -> &dyn Dynamics {
        match self {
            ModelChoice::Exact(m) => m,
            ModelChoice::Learned(m) => m,
        }
    }

    /// Writes `exact.txt` naming the environment, or a learned checkpoint
    /// `model.ckpt`, into `dir`.
    pub fn save_into(&self, dir: &Path) -> Result<()> {
        match self {
            ModelChoice::Exact(m) => textio::write_string(
                &dir.join(EXACT_FILE),
                &format!("certrl-exact-model 1\nenv {}\nnoise_std {}\n", m.env.name(), fmt_vec(m.env.noise_std())),
            ),
            ModelChoice::Learned(m) => m.save(&dir.join(LEARNED_FILE)),
        }
    }

    pub fn load_from(dir: &Path) -> Result<Self> {
        let exact = dir.join(EXACT_FILE);
        if !exact.exists() {
            return Ok(ModelChoice::Learned(GaussianModel::load(&dir.join(LEARNED_FILE))?));
        }
        let text = textio::read_to_string(&exact)?;
        let parsed = (|| {
            let mut lines = Lines::new(&text);
            let (_, v) = lines.expect("certrl-exact-model")?;
            if v != ["1"] {
                return Err(format!("unsupported version {v:?}"));
            }
            let (_, name) = lines.expect("env")?;
            let name = name.first().ok_or("missing env name")?.to_string();
            let (_, sd) = lines.expect("noise_std")?;
            Ok((name, parse_vec(sd.into_iter())?))
        })();
        let (name, sd) = parsed.map_err(|r| Error::parse("exact model", &exact, r))?;
        let env = Mdp::by_name(&name)?.with_noise_std(sd)?;
        Ok(ModelChoice::Exact(ExactModel::new(env)))
    }
}

const EXACT_FILE: &str = "exact_model.txt";
const LEARNED_FILE: &str = "model.ckpt";
