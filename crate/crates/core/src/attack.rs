//! Observation attacks on a policy, used both as an empirical robustness
//! measure and as a soundness oracle against certificates.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::certify::{
    abstract_rollout_with_noise, concrete_rollout_with_noise, draw_noise, sample_rng, CertConfig,
};
use crate::env::{Mdp, PerturbationSpec};
use crate::error::{check_dim, Error, Result};
use crate::model::{Dynamics, ExactModel, GaussianPolicy};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    Random,
    GridCorner,
    GradientMad,
}

impl AttackKind {
    pub const ALL: [AttackKind; 3] = [AttackKind::Random, AttackKind::GridCorner, AttackKind::GradientMad];

    pub fn name(self) -> &'static str {
        match self {
            AttackKind::Random => "random",
            AttackKind::GridCorner => "grid_corner",
            AttackKind::GradientMad => "gradient_mad",
        }
    }
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AttackKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown attack {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackConfig {
    pub kind: AttackKind,
    pub epsilon: f64,
    /// Ascent iterations of `gradient_mad`.
    pub steps: usize,
    /// Absolute step size of `gradient_mad`.
    pub step_size: f64,
}

impl AttackConfig {
    /// Ten sign-gradient steps of size `ε/4`.
    pub fn new(kind: AttackKind, epsilon: f64) -> Self {
        Self {
            kind,
            epsilon,
            steps: 10,
            step_size: epsilon / 4.0,
        }
    }

    pub fn spec(&self) -> Result<PerturbationSpec> {
        PerturbationSpec::new(self.epsilon)
    }
}

fn mean_displacement(policy: &GaussianPolicy, anchor: &[f64], x: &[f64]) -> Result<f64> {
    Ok(policy.mean(x)?.iter().zip(anchor).map(|(a, b)| (a - b) * (a - b)).sum())
}

fn gradient_mad<R: Rng + ?Sized>(
    policy: &GaussianPolicy,
    s: &[f64],
    cfg: &AttackConfig,
    spec: &PerturbationSpec,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let anchor = policy.mean(s)?;
    // the objective is stationary at s itself, so start from a random point
    let mut x: Vec<f64> = s.iter().map(|c| c + rng.random_range(-cfg.epsilon..=cfg.epsilon)).collect();
    x = spec.project(s, &x);
    let mut best = x.clone();
    let mut best_val = mean_displacement(policy, &anchor, &x)?;
    for _ in 0..cfg.steps {
        let out = policy.mean(&x)?;
        let up: Vec<f64> = out.iter().zip(&anchor).map(|(a, b)| 2.0 * (a - b)).collect();
        let (_, g) = policy.mean_net.backward_with_input(&x, &up)?;
        let stepped: Vec<f64> = x
            .iter()
            .zip(&g)
            .map(|(x, g)| x + cfg.step_size * if *g > 0.0 { 1.0 } else if *g < 0.0 { -1.0 } else { 0.0 })
            .collect();
        x = spec.project(s, &stepped);
        let val = mean_displacement(policy, &anchor, &x)?;
        if val > best_val {
            best_val = val;
            best = x.clone();
        }
    }
    Ok(best)
}

/// Immediate reward plus the reward one transition later under the
/// unperturbed policy, both through the model mean.
fn lookahead(policy: &GaussianPolicy, model: &dyn Dynamics, s: &[f64], obs: &[f64]) -> Result<f64> {
    let a = policy.mean(obs)?;
    let (next, r) = model.predict(s, &a)?;
    let a2 = policy.mean(&next)?;
    Ok(r + model.predict(&next, &a2)?.1)
}

fn grid_corner(policy: &GaussianPolicy, model: &dyn Dynamics, s: &[f64], eps: f64) -> Result<Vec<f64>> {
    let k = s.len();
    if k > 16 {
        return Err(Error::InvalidArgument(format!("corner enumeration needs dims <= 16, got {k}")));
    }
    let mut best = s.to_vec();
    let mut best_val = f64::INFINITY;
    for mask in 0u32..(1 << k) {
        let corner: Vec<f64> = s
            .iter()
            .enumerate()
            .map(|(i, c)| if mask & (1 << i) != 0 { c + eps } else { c - eps })
            .collect();
        let val = lookahead(policy, model, s, &corner)?;
        if val < best_val {
            best_val = val;
            best = corner;
        }
    }
    Ok(best)
}

/// Perturbed observation `ν(s) ∈ B(s, ε)`. `model` is only consulted by the
/// corner search.
pub fn attack_state<R: Rng + ?Sized>(
    policy: &GaussianPolicy,
    model: &dyn Dynamics,
    s: &[f64],
    cfg: &AttackConfig,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let spec = cfg.spec()?;
    check_dim(policy.state_dim(), s.len())?;
    if cfg.epsilon == 0.0 {
        return Ok(s.to_vec());
    }
    let raw = match cfg.kind {
        AttackKind::Random => s.iter().map(|c| c + rng.random_range(-cfg.epsilon..=cfg.epsilon)).collect(),
        AttackKind::GridCorner => grid_corner(policy, model, s, cfg.epsilon)?,
        AttackKind::GradientMad => gradient_mad(policy, s, cfg, &spec, rng)?,
    };
    Ok(spec.project(s, &raw))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AttackStats {
    pub kind: AttackKind,
    pub epsilon: f64,
    pub episodes: usize,
    pub mean: f64,
    /// Population standard deviation over episodes.
    pub std: f64,
    pub returns: Vec<f64>,
}

/// Rolls `policy` out in the true environment with every observation
/// attacked. Episode `i` draws from stream `i` of `seed`.
pub fn attacked_return(
    policy: &GaussianPolicy,
    env: &Mdp,
    cfg: &AttackConfig,
    episodes: usize,
    seed: u64,
) -> Result<AttackStats> {
    if episodes == 0 {
        return Err(Error::InvalidArgument("episodes must be at least 1".into()));
    }
    cfg.spec()?;
    let model = ExactModel::new(env.clone());
    let returns = (0..episodes)
        .into_par_iter()
        .map(|i| {
            let mut rng = sample_rng(seed, i);
            let mut s = env.sample_initial(&mut rng);
            let mut total = 0.0;
            for _ in 0..env.horizon() {
                let obs = attack_state(policy, &model, &s, cfg, &mut rng)?;
                let a = policy.act(&obs, &mut rng)?;
                let out = env.step(&s, &a, &mut rng)?;
                total += out.reward;
                s = out.next_state;
            }
            Ok(total)
        })
        .collect::<Result<Vec<f64>>>()?;
    let n = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let std = (returns.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n).sqrt();
    Ok(AttackStats {
        kind: cfg.kind,
        epsilon: cfg.epsilon,
        episodes,
        mean,
        std,
        returns,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct DominanceReport {
    pub episodes: usize,
    pub violations: usize,
    /// Smallest `attacked - certified` over all episodes.
    pub min_margin: f64,
    pub attacked_mean: f64,
    pub certified_mean: f64,
}

/// Paired check that attacked returns never fall below the certified lower
/// bound. Each sample shares its initial state and noise record between the
/// abstract rollout and the attacked concrete rollout through `model`.
/// Differences below `tol` are not counted as violations.
pub fn dominance_check(
    policy: &GaussianPolicy,
    model: &dyn Dynamics,
    env: &Mdp,
    cert: &CertConfig,
    attack: &AttackConfig,
    seed: u64,
    tol: f64,
) -> Result<DominanceReport> {
    cert.validate()?;
    if attack.epsilon > cert.epsilon {
        return Err(Error::InvalidArgument(format!(
            "attack radius {} exceeds certified radius {}",
            attack.epsilon, cert.epsilon
        )));
    }
    let spec = PerturbationSpec::new(cert.epsilon)?;
    let pairs = (0..cert.samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = sample_rng(seed, i);
            let s0 = env.sample_initial(&mut rng);
            let noise = draw_noise(policy, model, cert.horizon, &mut rng);
            let (_, total) = abstract_rollout_with_noise(policy, model, &s0, &spec, &noise)?;
            let mut failure = None;
            let concrete = concrete_rollout_with_noise(policy, model, &s0, &noise, |_, s| {
                attack_state(policy, model, s, attack, &mut rng).unwrap_or_else(|e| {
                    failure.get_or_insert(e);
                    s.to_vec()
                })
            })?;
            if let Some(e) = failure {
                return Err(e);
            }
            Ok((concrete.total, total.lower_at(0)))
        })
        .collect::<Result<Vec<(f64, f64)>>>()?;
    let n = pairs.len() as f64;
    Ok(DominanceReport {
        episodes: pairs.len(),
        violations: pairs.iter().filter(|(a, c)| a < &(c - tol)).count(),
        min_margin: pairs.iter().map(|(a, c)| a - c).fold(f64::INFINITY, f64::min),
        attacked_mean: pairs.iter().map(|p| p.0).sum::<f64>() / n,
        certified_mean: pairs.iter().map(|p| p.1).sum::<f64>() / n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn policy(seed: u64) -> GaussianPolicy {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        GaussianPolicy::random(2, 2, &[8], -1.0, &mut rng)
            .unwrap()
            .with_deterministic_eval(true)
    }

    #[test]
    fn zero_radius_is_identity() {
        let p = policy(1);
        let model = ExactModel::new(Mdp::pointmass(2).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for kind in AttackKind::ALL {
            let cfg = AttackConfig::new(kind, 0.0);
            assert_eq!(attack_state(&p, &model, &[0.3, -0.2], &cfg, &mut rng).unwrap(), vec![0.3, -0.2]);
        }
    }

    #[test]
    fn perturbations_stay_in_ball() {
        let p = policy(2);
        let model = ExactModel::new(Mdp::pointmass(2).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for kind in AttackKind::ALL {
            let cfg = AttackConfig {
                step_size: 0.3,
                ..AttackConfig::new(kind, 0.07)
            };
            let spec = cfg.spec().unwrap();
            for _ in 0..200 {
                let s: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..1.0)).collect();
                let o = attack_state(&p, &model, &s, &cfg, &mut rng).unwrap();
                assert!(spec.contains(&s, &o), "{kind}: {s:?} -> {o:?}");
            }
        }
    }

    #[test]
    fn mad_displaces_more_than_random() {
        let p = policy(3);
        let model = ExactModel::new(Mdp::pointmass(2).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (mut mad, mut rnd) = (0.0, 0.0);
        for _ in 0..100 {
            let s: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..1.0)).collect();
            let anchor = p.mean(&s).unwrap();
            let o = attack_state(&p, &model, &s, &AttackConfig::new(AttackKind::GradientMad, 0.1), &mut rng).unwrap();
            mad += mean_displacement(&p, &anchor, &o).unwrap();
            let o = attack_state(&p, &model, &s, &AttackConfig::new(AttackKind::Random, 0.1), &mut rng).unwrap();
            rnd += mean_displacement(&p, &anchor, &o).unwrap();
        }
        assert!(mad > rnd, "mad {mad} random {rnd}");
    }

    #[test]
    fn zero_radius_return_matches_nominal() {
        let env = Mdp::pointmass(2).unwrap();
        let p = policy(4);
        let stats = attacked_return(&p, &env, &AttackConfig::new(AttackKind::GradientMad, 0.0), 20, 9).unwrap();
        for (i, got) in stats.returns.iter().enumerate() {
            let mut rng = sample_rng(9, i);
            let mut s = env.sample_initial(&mut rng);
            let mut total = 0.0;
            for _ in 0..env.horizon() {
                let out = env.step(&s, &p.mean(&s).unwrap(), &mut rng).unwrap();
                total += out.reward;
                s = out.next_state;
            }
            assert_eq!(*got, total);
        }
    }

    #[test]
    fn attacks_never_beat_certificate() {
        let env = Mdp::pointmass(2).unwrap();
        let model = ExactModel::new(env.clone());
        let p = policy(5);
        let cert = CertConfig {
            samples: 200,
            horizon: 4,
            delta: 0.05,
            epsilon: 0.1,
        };
        for kind in AttackKind::ALL {
            let r = dominance_check(&p, &model, &env, &cert, &AttackConfig::new(kind, 0.1), 3, 0.0).unwrap();
            assert_eq!(r.violations, 0, "{kind}: {r:?}");
            assert!(r.attacked_mean >= r.certified_mean);
        }
    }

    #[test]
    fn names_round_trip() {
        for kind in AttackKind::ALL {
            assert_eq!(kind.name().parse::<AttackKind>().unwrap(), kind);
        }
        assert!("fgsm".parse::<AttackKind>().is_err());
    }
}
