//! White-box state-adversarial environments.
//!
//! Every environment has separable Gaussian transitions
//! `s' = μ_P(s, a) + σ ⊙ e` with `e ~ N(0, I)` and a deterministic reward,
//! and can evaluate both on interval boxes.

use std::fmt;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::domain::IntervalBox;
use crate::error::{check_dim, Error, Result};
use crate::linalg::all_finite;

/// Per-step displacement gain of the point-mass environments.
pub const POINTMASS_GAIN: f64 = 0.1;
/// Action cost weight of the point-mass reward.
pub const POINTMASS_ACTION_COST: f64 = 0.01;
/// Transition noise standard deviation of the point-mass environments.
pub const POINTMASS_NOISE_STD: f64 = 0.02;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EnvKind {
    /// `s' = s + a + e`, `r = s + a`, `s₀ = 1`.
    LinearToy,
    /// `s' = s + 0.1·clip(a) + σe`, `r = -‖s‖₁ - 0.01‖clip(a)‖₁`, `s₀ ~ U[-1,1]^k`.
    PointMass { dims: usize },
}

/// A state-adversarial MDP with separable Gaussian noise.
#[derive(Clone, Debug, PartialEq)]
pub struct Mdp {
    kind: EnvKind,
    noise_std: Vec<f64>,
    horizon: usize,
}

/// Result of one concrete environment step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub next_state: Vec<f64>,
    pub reward: f64,
}

impl Mdp {
    pub fn linear_toy() -> Self {
        Self {
            kind: EnvKind::LinearToy,
            noise_std: vec![1.0],
            horizon: 2,
        }
    }

    pub fn pointmass(dims: usize) -> Result<Self> {
        if !(1..=2).contains(&dims) {
            return Err(Error::InvalidArgument(format!(
                "point-mass supports 1 or 2 dimensions, got {dims}"
            )));
        }
        Ok(Self {
            kind: EnvKind::PointMass { dims },
            noise_std: vec![POINTMASS_NOISE_STD; dims],
            horizon: 20,
        })
    }

    /// Looks an environment up by its config name.
    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "linear_toy" => Ok(Self::linear_toy()),
            "pointmass1d" => Self::pointmass(1),
            "pointmass2d" => Self::pointmass(2),
            other => Err(Error::InvalidArgument(format!("unknown environment {other:?}"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            EnvKind::LinearToy => "linear_toy",
            EnvKind::PointMass { dims: 1 } => "pointmass1d",
            EnvKind::PointMass { .. } => "pointmass2d",
        }
    }

    pub fn kind(&self) -> EnvKind {
        self.kind
    }

    pub fn state_dim(&self) -> usize {
        match self.kind {
            EnvKind::LinearToy => 1,
            EnvKind::PointMass { dims } => dims,
        }
    }

    pub fn action_dim(&self) -> usize {
        self.state_dim()
    }

    /// Diagonal of `Σ_P^{1/2}`.
    pub fn noise_std(&self) -> &[f64] {
        &self.noise_std
    }

    pub fn with_noise_std(mut self, std: Vec<f64>) -> Result<Self> {
        check_dim(self.state_dim(), std.len())?;
        if std.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
            return Err(Error::InvalidArgument("noise std must be finite and >= 0".into()));
        }
        self.noise_std = std;
        Ok(self)
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn with_horizon(mut self, horizon: usize) -> Self {
        self.horizon = horizon;
        self
    }

    /// Symmetric bound on executed actions, if any.
    pub fn action_bound(&self) -> Option<f64> {
        match self.kind {
            EnvKind::LinearToy => None,
            EnvKind::PointMass { .. } => Some(1.0),
        }
    }

    /// Draws `s₀ ~ S₀`.
    pub fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self.kind {
            EnvKind::LinearToy => vec![1.0],
            EnvKind::PointMass { dims } => (0..dims).map(|_| rng.random_range(-1.0..=1.0)).collect(),
        }
    }

    /// Draws the standard-normal transition noise `e`.
    pub fn sample_noise<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        (0..self.state_dim()).map(|_| rng.sample(StandardNormal)).collect()
    }

    pub fn clip_action(&self, a: &[f64]) -> Vec<f64> {
        match self.action_bound() {
            Some(b) => a.iter().map(|v| v.clamp(-b, b)).collect(),
            None => a.to_vec(),
        }
    }

    fn check(&self, s: usize, a: usize) -> Result<()> {
        check_dim(self.state_dim(), s)?;
        check_dim(self.action_dim(), a)
    }

    /// `μ_P(s, a)`.
    pub fn mean_dynamics(&self, s: &[f64], a: &[f64]) -> Result<Vec<f64>> {
        self.check(s.len(), a.len())?;
        let a = self.clip_action(a);
        Ok(match self.kind {
            EnvKind::LinearToy => vec![s[0] + a[0]],
            EnvKind::PointMass { .. } => s
                .iter()
                .zip(&a)
                .map(|(s, a)| s + POINTMASS_GAIN * a)
                .collect(),
        })
    }

    pub fn reward(&self, s: &[f64], a: &[f64]) -> Result<f64> {
        self.check(s.len(), a.len())?;
        let a = self.clip_action(a);
        Ok(match self.kind {
            EnvKind::LinearToy => s[0] + a[0],
            EnvKind::PointMass { .. } => {
                -s.iter().map(|v| v.abs()).sum::<f64>()
                    - POINTMASS_ACTION_COST * a.iter().map(|v| v.abs()).sum::<f64>()
            }
        })
    }

    fn clip_action_abs(&self, a: &IntervalBox) -> IntervalBox {
        match self.action_bound() {
            Some(b) => a.clip(-b, b),
            None => a.clone(),
        }
    }

    /// Box transfer of `μ_P`.
    pub fn mean_dynamics_abs(&self, s: &IntervalBox, a: &IntervalBox) -> Result<IntervalBox> {
        self.check(s.dim(), a.dim())?;
        let a = self.clip_action_abs(a);
        match self.kind {
            EnvKind::LinearToy => s.add(&a),
            EnvKind::PointMass { .. } => s.add(&a.scale(POINTMASS_GAIN)),
        }
    }

    /// Box transfer of the reward, a one-dimensional box.
    pub fn reward_abs(&self, s: &IntervalBox, a: &IntervalBox) -> Result<IntervalBox> {
        self.check(s.dim(), a.dim())?;
        let a = self.clip_action_abs(a);
        match self.kind {
            EnvKind::LinearToy => s.add(&a),
            EnvKind::PointMass { .. } => s
                .abs()
                .sum()
                .scale(-1.0)
                .add(&a.abs().sum().scale(-POINTMASS_ACTION_COST)),
        }
    }

    /// Gradient of the reward with respect to `(s, a)`.
    pub fn reward_grad(&self, s: &[f64], a: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check(s.len(), a.len())?;
        Ok(match self.kind {
            EnvKind::LinearToy => (vec![1.0], vec![1.0]),
            EnvKind::PointMass { .. } => (
                s.iter().map(|v| -sign(*v)).collect(),
                a.iter()
                    .map(|v| if v.abs() < 1.0 { -POINTMASS_ACTION_COST * sign(*v) } else { 0.0 })
                    .collect(),
            ),
        })
    }

    /// Pulls an upstream `(u_c, u_d)` on the reward box back to the centers
    /// and deviations of `s#` and `a#`, following [`Mdp::reward_abs`].
    #[allow(clippy::type_complexity)]
    pub fn reward_abs_vjp(
        &self,
        s: &IntervalBox,
        a: &IntervalBox,
        up: (f64, f64),
    ) -> Result<((Vec<f64>, Vec<f64>), (Vec<f64>, Vec<f64>))> {
        self.check(s.dim(), a.dim())?;
        let (uc, ud) = up;
        Ok(match self.kind {
            EnvKind::LinearToy => ((vec![uc], vec![ud]), (vec![uc], vec![ud])),
            EnvKind::PointMass { .. } => {
                let gs = abs_vjp(s, -uc, ud);
                let clipped = a.clip(-1.0, 1.0);
                let (gcc, gcd) = abs_vjp(&clipped, -POINTMASS_ACTION_COST * uc, POINTMASS_ACTION_COST * ud);
                (gs, clip_vjp(a, -1.0, 1.0, &gcc, &gcd))
            }
        })
    }

    /// One transition with an explicit standard-normal draw `e`.
    pub fn step_with_noise(&self, s: &[f64], a: &[f64], e: &[f64]) -> Result<StepOutcome> {
        check_dim(self.state_dim(), e.len())?;
        let mean = self.mean_dynamics(s, a)?;
        let reward = self.reward(s, a)?;
        let next_state: Vec<f64> = mean
            .iter()
            .zip(e)
            .zip(&self.noise_std)
            .map(|((m, e), sd)| m + sd * e)
            .collect();
        if !all_finite(&next_state) || !reward.is_finite() {
            return Err(Error::NonFinite("environment state"));
        }
        Ok(StepOutcome { next_state, reward })
    }

    pub fn step<R: Rng + ?Sized>(&self, s: &[f64], a: &[f64], rng: &mut R) -> Result<StepOutcome> {
        let e = self.sample_noise(rng);
        self.step_with_noise(s, a, &e)
    }

    /// `L_r` such that `|r(s,a) - r(s',a')| ≤ L_r (‖s-s'‖∞ + ‖a-a'‖∞)`.
    pub fn reward_lipschitz(&self) -> f64 {
        match self.kind {
            EnvKind::LinearToy => 1.0,
            EnvKind::PointMass { dims } => dims as f64,
        }
    }

    /// l∞ Lipschitz constant of `μ_P` in `(s, a)` jointly.
    pub fn dynamics_lipschitz(&self) -> f64 {
        match self.kind {
            EnvKind::LinearToy => 2.0,
            EnvKind::PointMass { .. } => 1.0 + POINTMASS_GAIN,
        }
    }
}

impl fmt::Display for Mdp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Backward pass of [`IntervalBox::abs`] when every coordinate receives the
/// same upstream `(gc, gd)`.
fn abs_vjp(b: &IntervalBox, gc: f64, gd: f64) -> (Vec<f64>, Vec<f64>) {
    (0..b.dim())
        .map(|i| {
            let (lo, hi) = (b.lower_at(i), b.upper_at(i));
            if lo >= 0.0 {
                (gc, gd)
            } else if hi <= 0.0 {
                (-gc, gd)
            } else {
                // center = deviation = max(hi, -lo) / 2
                let g = 0.5 * (gc + gd);
                if hi >= -lo {
                    (g, g)
                } else {
                    (-g, g)
                }
            }
        })
        .unzip()
}

/// Backward pass of [`IntervalBox::clip`].
fn clip_vjp(b: &IntervalBox, lo: f64, hi: f64, gc: &[f64], gd: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let inside = |x: f64| if x > lo && x < hi { 1.0 } else { 0.0 };
    (0..b.dim())
        .map(|i| {
            let g_hi = 0.5 * (gc[i] + gd[i]) * inside(b.upper_at(i));
            let g_lo = 0.5 * (gc[i] - gd[i]) * inside(b.lower_at(i));
            (g_hi + g_lo, g_hi - g_lo)
        })
        .unzip()
}

/// l∞ observation perturbation set `B(s) = {s' : ‖s' - s‖∞ ≤ ε}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PerturbationSpec {
    epsilon: f64,
}

impl PerturbationSpec {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon >= 0.0) || !epsilon.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "perturbation radius must be finite and >= 0, got {epsilon}"
            )));
        }
        Ok(Self { epsilon })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// `α(B(β(s#)))`.
    pub fn abstract_ball(&self, s: &IntervalBox) -> Result<IntervalBox> {
        s.widen(self.epsilon)
    }

    pub fn contains(&self, s: &[f64], observed: &[f64]) -> bool {
        s.len() == observed.len()
            && s.iter().zip(observed).all(|(a, b)| (a - b).abs() <= self.epsilon)
    }

    /// Clamps `observed` into `B(s)` so that [`PerturbationSpec::contains`]
    /// holds exactly in floating point.
    pub fn project(&self, s: &[f64], observed: &[f64]) -> Vec<f64> {
        s.iter()
            .zip(observed)
            .map(|(&c, o)| {
                let mut v = o.clamp(c - self.epsilon, c + self.epsilon);
                while (v - c).abs() > self.epsilon {
                    v = if v > c { v.next_down() } else { v.next_up() };
                }
                v
            })
            .collect()
    }
}
