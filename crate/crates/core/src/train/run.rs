use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::certify::draw_noise;
use crate::env::{Mdp, PerturbationSpec};
use crate::error::{Error, Result};
use crate::model::{measure_model_error, GaussianModel, GaussianPolicy, Transition, TransitionDataset};
use crate::nn::{Adam, AdamConfig, ParamGradient};

use super::config::TrainConfig;
use super::loss::{normal_loss, symbolic_loss};

/// One row of the training log.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub env_steps: usize,
    pub nominal_reward: f64,
    pub symbolic_loss: f64,
    pub lambda: f64,
    pub epsilon_t: f64,
}

pub const LOG_HEADER: &str = "epoch,env_steps,nominal_reward,symbolic_loss,lambda,epsilon_t";

pub fn log_to_csv(log: &[EpochLog]) -> String {
    let mut out = format!("{LOG_HEADER}\n");
    for r in log {
        out.push_str(&format!(
            "{},{},{:.16e},{:.16e},{:.16e},{:.16e}\n",
            r.epoch, r.env_steps, r.nominal_reward, r.symbolic_loss, r.lambda, r.epsilon_t
        ));
    }
    out
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Trained policy, set to act deterministically at evaluation.
    pub policy: GaussianPolicy,
    pub model: GaussianModel,
    pub log: Vec<EpochLog>,
    pub env_data: TransitionDataset,
    /// Symbolic-loss samples dropped because their bounds exploded.
    pub skipped_symbolic: usize,
}

enum Actor<'a> {
    Random,
    Policy(&'a GaussianPolicy),
}

/// Runs one episode in the environment, optionally recording transitions,
/// and returns its total reward.
fn episode<R: Rng + ?Sized>(
    env: &Mdp,
    actor: Actor<'_>,
    rng: &mut R,
    mut data: Option<&mut TransitionDataset>,
) -> Result<f64> {
    let mut s = env.sample_initial(rng);
    let mut total = 0.0;
    for _ in 0..env.horizon() {
        let a = match actor {
            Actor::Random => (0..env.action_dim()).map(|_| rng.random_range(-1.0..=1.0)).collect(),
            Actor::Policy(p) => p.act(&s, rng)?,
        };
        let out = env.step(&s, &a, rng)?;
        total += out.reward;
        if let Some(d) = data.as_deref_mut() {
            d.push(Transition {
                state: s.clone(),
                action: env.clip_action(&a),
                next_state: out.next_state.clone(),
                reward: out.reward,
            })?;
        }
        s = out.next_state;
    }
    Ok(total)
}

/// Mean return of the deterministic policy over a fixed set of episodes.
pub fn nominal_return(env: &Mdp, policy: &GaussianPolicy, episodes: usize, seed: u64) -> Result<f64> {
    if episodes == 0 {
        return Ok(f64::NAN);
    }
    let det = policy.clone().with_deterministic_eval(true);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let mut total = 0.0;
    for _ in 0..episodes {
        total += episode(env, Actor::Policy(&det), &mut rng, None)?;
    }
    Ok(total / episodes as f64)
}

fn sample_states<R: Rng + ?Sized>(data: &TransitionDataset, n: usize, rng: &mut R) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| data.sample(rng).expect("dataset is nonempty").state.clone())
        .collect()
}

/// Dyna-style certified training with a primal–dual robustness constraint.
pub fn train(cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let env = Mdp::by_name(&cfg.env)?;
    let (k, m) = (env.state_dim(), env.action_dim());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut policy = GaussianPolicy::random(k, m, &cfg.policy_hidden, cfg.policy_log_sigma, &mut rng)?;
    let mut model = GaussianModel::random(k, m, &cfg.model_hidden, &mut rng)?;
    if cfg.exact_reward {
        model = model.with_exact_reward(env.clone())?;
    }
    let mut d_env = TransitionDataset::new(k, m, cfg.data_capacity);
    let mut d_model = TransitionDataset::new(k, m, cfg.data_capacity);
    let mut env_steps = 0;
    for _ in 0..cfg.initial_episodes {
        episode(&env, Actor::Random, &mut rng, Some(&mut d_env))?;
        env_steps += env.horizon();
    }

    let schedule = cfg.schedule();
    let fit_cfg = cfg.fit_config();
    let mut params = policy.mean_net.flat_params();
    let mut adam = Adam::new(
        AdamConfig {
            lr: cfg.policy_lr,
            ..AdamConfig::default()
        },
        params.len(),
    );
    let mut lambda = cfg.lambda_init;
    let mut global_step = 0;
    let mut skipped = 0;
    let mut log = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let (fit_data, held) = d_env.split_holdout(cfg.holdout_every);
        let fit_data = if fit_data.is_empty() { d_env.clone() } else { fit_data };
        model
            .fit(&fit_data, &fit_cfg, &mut rng)
            .map_err(|e| Error::Diverged(format!("epoch {epoch}: {e}")))?;
        if !held.is_empty() {
            let err = measure_model_error(&model, &held, cfg.delta_e)?;
            model.eps_e = err.eps_e;
            model.d_e = err.d_e;
            model.delta_e = cfg.delta_e;
        }

        let sigma = model.state_noise_std();
        for _ in 0..cfg.model_rollouts {
            let mut s = d_env.sample(&mut rng).expect("environment data").state.clone();
            for _ in 0..cfg.model_rollout_length {
                let a = policy.act(&s, &mut rng)?;
                let (mean, r) = model.predict(&s, &a)?;
                let next: Vec<f64> = mean
                    .iter()
                    .zip(&sigma)
                    .map(|(m, sd)| m + sd * rng.sample::<f64, _>(rand_distr::StandardNormal))
                    .collect();
                if d_model
                    .push(Transition {
                        state: s.clone(),
                        action: a,
                        next_state: next.clone(),
                        reward: r,
                    })
                    .is_err()
                {
                    break;
                }
                s = next;
            }
        }
        if d_model.is_empty() {
            return Err(Error::Diverged(format!("epoch {epoch}: model rollouts produced no data")));
        }

        for _ in 0..cfg.env_episodes_per_epoch {
            episode(&env, Actor::Policy(&policy), &mut rng, Some(&mut d_env))?;
            env_steps += env.horizon();
        }

        let mut sym_total = 0.0;
        let mut sym_count = 0;
        let mut eps_t = schedule.at(global_step);
        for _ in 0..cfg.grad_steps {
            eps_t = schedule.at(global_step);
            let starts = sample_states(&d_model, cfg.normal_batch, &mut rng);
            let noise: Vec<Vec<Vec<f64>>> = starts
                .iter()
                .map(|_| (0..cfg.normal_horizon).map(|_| policy.sample_noise(&mut rng)).collect())
                .collect();
            let mut grad = normal_loss(&policy, &model, &starts, &noise)?.grad;

            if cfg.eps_target > 0.0 {
                let spec = PerturbationSpec::new(eps_t)?;
                let mut sym_grad = ParamGradient::zeros_like(&policy.mean_net);
                let mut values = Vec::with_capacity(cfg.symbolic_batch);
                for s0 in sample_states(&d_model, cfg.symbolic_batch, &mut rng) {
                    let record = draw_noise(&policy, &model, cfg.t_train, &mut rng);
                    match symbolic_loss(&policy, &model, &s0, &spec, &record) {
                        Ok(lg) => {
                            values.push(lg.value);
                            sym_grad.add_scaled(&lg.grad, 1.0);
                        }
                        Err(Error::BoundExplosion { .. }) => skipped += 1,
                        Err(e) => return Err(e),
                    }
                }
                if !values.is_empty() {
                    let n = values.len() as f64;
                    let l_sym = values.iter().sum::<f64>() / n;
                    grad.add_scaled(&sym_grad, lambda / n);
                    lambda = (lambda + cfg.dual_lr * (l_sym - cfg.robust_threshold)).max(0.0);
                    sym_total += l_sym;
                    sym_count += 1;
                }
            }

            adam.step(&mut params, &grad.flat());
            policy
                .mean_net
                .set_flat_params(&params)
                .map_err(|_| Error::Diverged(format!("epoch {epoch}: non-finite policy parameters")))?;
            global_step += 1;
        }

        log.push(EpochLog {
            epoch,
            env_steps,
            nominal_reward: nominal_return(&env, &policy, cfg.eval_episodes, cfg.seed)?,
            symbolic_loss: if sym_count > 0 { sym_total / sym_count as f64 } else { 0.0 },
            lambda,
            epsilon_t: eps_t,
        });
    }

    Ok(TrainOutcome {
        policy: policy.with_deterministic_eval(true),
        model,
        log,
        env_data: d_env,
        skipped_symbolic: skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> TrainConfig {
        TrainConfig {
            epochs: 3,
            grad_steps: 5,
            model_rollouts: 10,
            initial_episodes: 3,
            env_episodes_per_epoch: 1,
            eval_episodes: 2,
            eps_end_step: 10,
            model_fit_epochs: 3,
            t_train: 2,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn identical_seeds_give_identical_runs() {
        let a = train(&small()).unwrap();
        let b = train(&small()).unwrap();
        assert_eq!(a.log, b.log);
        assert_eq!(a.policy, b.policy);
        assert_eq!(a.model, b.model);
        assert!(a.policy.deterministic_eval);
        assert_eq!(a.log.len(), 3);
        assert_eq!(log_to_csv(&a.log).lines().next().unwrap(), LOG_HEADER);
    }

    #[test]
    fn lambda_stays_zero_below_threshold() {
        let cfg = TrainConfig {
            robust_threshold: 1e6,
            ..small()
        };
        let out = train(&cfg).unwrap();
        assert!(out.log.iter().all(|r| r.lambda == 0.0));
    }

    #[test]
    fn zero_target_skips_symbolic_term() {
        let cfg = TrainConfig {
            eps_target: 0.0,
            ..small()
        };
        let out = train(&cfg).unwrap();
        assert!(out.log.iter().all(|r| r.symbolic_loss == 0.0 && r.epsilon_t == 0.0 && r.lambda == 0.0));
    }

    #[test]
    fn lambda_nonnegative_and_responds_to_violation() {
        let cfg = TrainConfig {
            robust_threshold: 1e-9,
            eps_target: 0.2,
            ..small()
        };
        let out = train(&cfg).unwrap();
        assert!(out.log.iter().all(|r| r.lambda >= 0.0));
        assert!(out.log.last().unwrap().lambda > 0.0);
    }
}
