//! Learned Gaussian dynamics model and its held-out error measurement.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::IntervalBox;
use crate::env::Mdp;
use crate::error::{check_dim, Error, Result};
use crate::linalg::{all_finite, inf_norm};
use crate::nn::{checkpoint, Activation, Adam, AdamConfig, Mlp};
use crate::textio::{self, fmt_f64, fmt_vec, parse_f64, parse_vec, sha256_hex, Lines};

use super::dataset::TransitionDataset;
use super::policy::meta_path;

/// `E(s'|s,a) = N(s + Δ(s,a), diag(σ²))`, plus a learned reward head.
///
/// `mean_net` maps `[s; a]` to `[Δs; r]`. `log_sigma` has one entry per output
/// and does not depend on the input.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianModel {
    pub mean_net: Mlp,
    pub log_sigma: Vec<f64>,
    /// Error radius `ε_E` holding with probability `1 - δ_E`.
    pub eps_e: f64,
    pub delta_e: f64,
    /// Largest held-out residual, the plug-in for `d_E`.
    pub d_e: f64,
    /// When set, rewards come from this white-box environment instead of the
    /// learned reward head.
    pub reward_env: Option<Mdp>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub min_log_sigma: f64,
    pub max_log_sigma: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 64,
            lr: 3e-3,
            min_log_sigma: -8.0,
            max_log_sigma: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitReport {
    /// Mean per-sample negative log-likelihood (without the `log 2π` constant)
    /// over the last epoch.
    pub final_nll: f64,
    pub steps: usize,
}

/// `(ε_E, d_E)` measured on held-out data.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelError {
    pub eps_e: f64,
    pub d_e: f64,
}

impl GaussianModel {
    pub fn new(mean_net: Mlp, log_sigma: Vec<f64>) -> Result<Self> {
        check_dim(mean_net.output_dim(), log_sigma.len())?;
        if mean_net.output_dim() < 2 {
            return Err(Error::InvalidArgument("model needs at least one state output and a reward".into()));
        }
        if !all_finite(&log_sigma) {
            return Err(Error::NonFinite("model log sigma"));
        }
        Ok(Self {
            mean_net,
            log_sigma,
            eps_e: 0.0,
            delta_e: 0.0,
            d_e: 0.0,
            reward_env: None,
        })
    }

    /// Uses the environment's exact reward in place of the reward head.
    pub fn with_exact_reward(mut self, env: Mdp) -> Result<Self> {
        check_dim(self.state_dim(), env.state_dim())?;
        check_dim(self.action_dim(), env.action_dim())?;
        self.reward_env = Some(env);
        Ok(self)
    }

    pub fn random<R: Rng + ?Sized>(
        state_dim: usize,
        action_dim: usize,
        hidden: &[usize],
        rng: &mut R,
    ) -> Result<Self> {
        let mut sizes = vec![state_dim + action_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(state_dim + 1);
        let net = Mlp::random(&sizes, Activation::Tanh, Activation::Identity, rng)?;
        Self::new(net, vec![0.0; state_dim + 1])
    }

    pub fn state_dim(&self) -> usize {
        self.mean_net.output_dim() - 1
    }

    pub fn action_dim(&self) -> usize {
        self.mean_net.input_dim() - self.state_dim()
    }

    /// Diagonal of `Σ_E^{1/2}` over the state block.
    pub fn state_noise_std(&self) -> Vec<f64> {
        self.log_sigma[..self.state_dim()].iter().map(|l| l.exp()).collect()
    }

    fn input(s: &[f64], a: &[f64]) -> Vec<f64> {
        let mut x = Vec::with_capacity(s.len() + a.len());
        x.extend_from_slice(s);
        x.extend_from_slice(a);
        x
    }

    /// Mean next state `s + Δs` and mean reward.
    pub fn predict(&self, s: &[f64], a: &[f64]) -> Result<(Vec<f64>, f64)> {
        check_dim(self.state_dim(), s.len())?;
        check_dim(self.action_dim(), a.len())?;
        let out = self.mean_net.forward(&Self::input(s, a))?;
        let k = self.state_dim();
        let next = s.iter().zip(&out[..k]).map(|(s, d)| s + d).collect();
        let r = match &self.reward_env {
            Some(env) => env.reward(s, a)?,
            None => out[k],
        };
        Ok((next, r))
    }

    pub fn predict_abs(&self, s: &IntervalBox, a: &IntervalBox) -> Result<(IntervalBox, IntervalBox)> {
        check_dim(self.state_dim(), s.dim())?;
        check_dim(self.action_dim(), a.dim())?;
        let k = self.state_dim();
        let out = self.mean_net.forward_abs(&s.concat(a))?;
        let next = s.add(&out.slice(0..k))?;
        let r = match &self.reward_env {
            Some(env) => env.reward_abs(s, a)?,
            None => out.slice(k..k + 1),
        };
        Ok((next, r))
    }

    /// Maximum-likelihood training on `(Δs, r)` targets. Continues from the
    /// current parameters.
    pub fn fit<R: Rng + ?Sized>(
        &mut self,
        data: &TransitionDataset,
        cfg: &FitConfig,
        rng: &mut R,
    ) -> Result<FitReport> {
        if data.is_empty() {
            return Err(Error::EmptyDataset("model training data"));
        }
        check_dim(self.state_dim(), data.state_dim())?;
        check_dim(self.action_dim(), data.action_dim())?;
        if cfg.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be positive".into()));
        }
        let k = self.state_dim();
        let n_net = self.mean_net.param_count();
        let mut params = self.mean_net.flat_params();
        params.extend_from_slice(&self.log_sigma);
        let mut adam = Adam::new(
            AdamConfig {
                lr: cfg.lr,
                ..AdamConfig::default()
            },
            params.len(),
        );
        let mut order: Vec<usize> = (0..data.len()).collect();
        let mut steps = 0;
        let mut last_nll = f64::NAN;
        for epoch in 0..cfg.epochs {
            order.shuffle(rng);
            let mut epoch_nll = 0.0;
            for chunk in order.chunks(cfg.batch_size) {
                let inv_var: Vec<f64> = self.log_sigma.iter().map(|l| (-2.0 * l).exp()).collect();
                let mut grad = vec![0.0; params.len()];
                let scale = 1.0 / chunk.len() as f64;
                for &i in chunk {
                    let t = data.get(i).expect("index in range");
                    let x = Self::input(&t.state, &t.action);
                    let pred = self.mean_net.forward(&x)?;
                    let mut target: Vec<f64> = t.next_state.iter().zip(&t.state).map(|(n, s)| n - s).collect();
                    target.push(t.reward);
                    debug_assert_eq!(target.len(), k + 1);
                    let mut up = vec![0.0; k + 1];
                    for j in 0..=k {
                        let r = pred[j] - target[j];
                        up[j] = r * inv_var[j] * scale;
                        epoch_nll += 0.5 * r * r * inv_var[j] + self.log_sigma[j];
                        grad[n_net + j] += (1.0 - r * r * inv_var[j]) * scale;
                    }
                    let g = self.mean_net.backward(&x, &up)?;
                    for (acc, v) in grad[..n_net].iter_mut().zip(g.flat()) {
                        *acc += v;
                    }
                }
                if !all_finite(&grad) {
                    return Err(Error::Diverged(format!("non-finite model gradient at epoch {epoch}")));
                }
                adam.step(&mut params, &grad);
                for l in &mut params[n_net..] {
                    *l = l.clamp(cfg.min_log_sigma, cfg.max_log_sigma);
                }
                self.mean_net
                    .set_flat_params(&params[..n_net])
                    .map_err(|_| Error::Diverged(format!("non-finite model parameters at epoch {epoch}")))?;
                self.log_sigma.copy_from_slice(&params[n_net..]);
                steps += 1;
            }
            last_nll = epoch_nll / data.len() as f64;
            if !last_nll.is_finite() {
                return Err(Error::Diverged(format!("non-finite likelihood at epoch {epoch}")));
            }
        }
        Ok(FitReport {
            final_nll: last_nll,
            steps,
        })
    }

    /// `‖(s' - s) - Δs(s, a)‖∞` for every held-out record.
    pub fn residuals(&self, data: &TransitionDataset) -> Result<Vec<f64>> {
        let k = self.state_dim();
        data.iter()
            .map(|t| {
                let out = self.mean_net.forward(&Self::input(&t.state, &t.action))?;
                let diff: Vec<f64> = (0..k)
                    .map(|j| (t.next_state[j] - t.state[j]) - out[j])
                    .collect();
                Ok(inf_norm(&diff))
            })
            .collect()
    }

    /// Largest absolute row sum bound on the Lipschitz constant of `s + Δs`.
    pub fn lipschitz_upper(&self) -> f64 {
        1.0 + self.mean_net.lipschitz_upper()
    }

    fn meta_text(&self) -> String {
        format!(
            "certrl-model-meta 1\nlog_sigma {}\neps_e {}\ndelta_e {}\nd_e {}\nreward {}\n",
            fmt_vec(&self.log_sigma),
            fmt_f64(self.eps_e),
            fmt_f64(self.delta_e),
            fmt_f64(self.d_e),
            self.reward_env.as_ref().map_or("learned", |e| e.name())
        )
    }

    pub fn fingerprint(&self) -> String {
        let mut text = checkpoint::to_text(&self.mean_net);
        text.push_str(&self.meta_text());
        sha256_hex(text.as_bytes())
    }

    /// Writes the network to `path` and `(Σ_E, ε_E, δ_E, d_E)` to `path.meta`.
    pub fn save(&self, path: &Path) -> Result<()> {
        checkpoint::save(&self.mean_net, path)?;
        textio::write_string(&meta_path(path), &self.meta_text())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let net = checkpoint::load(path)?;
        let mp = meta_path(path);
        let text = textio::read_to_string(&mp)?;
        let parsed = (|| {
            let mut lines = Lines::new(&text);
            let (_, v) = lines.expect("certrl-model-meta")?;
            if v != ["1"] {
                return Err(format!("unsupported version {v:?}"));
            }
            let (_, ls) = lines.expect("log_sigma")?;
            let log_sigma = parse_vec(ls.into_iter())?;
            let mut scalar = |key: &str| -> std::result::Result<f64, String> {
                let (no, t) = lines.expect(key)?;
                match t.as_slice() {
                    [x] => parse_f64(x),
                    _ => Err(format!("line {no}: expected one value")),
                }
            };
            let values = (scalar("eps_e")?, scalar("delta_e")?, scalar("d_e")?);
            let (_, reward) = lines.expect("reward")?;
            let reward = match reward.as_slice() {
                ["learned"] => None,
                [name] => Some(name.to_string()),
                other => return Err(format!("bad reward source {other:?}")),
            };
            Ok((log_sigma, values, reward))
        })();
        let (log_sigma, (eps_e, delta_e, d_e), reward) =
            parsed.map_err(|r| Error::parse("model metadata", &mp, r))?;
        let mut model = Self::new(net, log_sigma)?;
        if let Some(name) = reward {
            model = model.with_exact_reward(Mdp::by_name(&name)?)?;
        }
        model.eps_e = eps_e;
        model.delta_e = delta_e;
        model.d_e = d_e;
        Ok(model)
    }
}

/// Fits a fresh model to `data`.
pub fn fit_model<R: Rng + ?Sized>(
    data: &TransitionDataset,
    hidden: &[usize],
    cfg: &FitConfig,
    rng: &mut R,
) -> Result<GaussianModel> {
    if data.is_empty() {
        return Err(Error::EmptyDataset("model training data"));
    }
    let mut model = GaussianModel::random(data.state_dim(), data.action_dim(), hidden, rng)?;
    model.fit(data, cfg, rng)?;
    Ok(model)
}

/// Nearest-rank `(1 - δ)` quantile of `residuals` and their maximum.
pub fn residual_quantile(residuals: &[f64], delta: f64) -> Result<ModelError> {
    if residuals.is_empty() {
        return Err(Error::EmptyDataset("held-out residuals"));
    }
    if !(0.0..1.0).contains(&delta) {
        return Err(Error::InvalidArgument(format!("δ_E must lie in [0, 1), got {delta}")));
    }
    let mut sorted = residuals.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    // slack absorbs representation error in (1 - δ)·n
    let rank = (((1.0 - delta) * n as f64) - 1e-9).ceil().clamp(1.0, n as f64) as usize;
    Ok(ModelError {
        eps_e: sorted[rank - 1],
        d_e: sorted[n - 1],
    })
}

/// Measures `(ε_E, d_E)` of `model` on held-out data.
pub fn measure_model_error(
    model: &GaussianModel,
    heldout: &TransitionDataset,
    delta_e: f64,
) -> Result<ModelError> {
    if heldout.is_empty() {
        return Err(Error::EmptyDataset("held-out data"));
    }
    residual_quantile(&model.residuals(heldout)?, delta_e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::dataset::Transition;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    /// `s' = s + 0.1·a + σe`, `r = 0.5·s - 0.2·a` in one dimension each.
    fn linear_data(n: usize, sigma: f64, seed: u64) -> TransitionDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ds = TransitionDataset::new(1, 1, n);
        for _ in 0..n {
            let s: f64 = rng.random_range(-1.0..1.0);
            let a: f64 = rng.random_range(-1.0..1.0);
            let e: f64 = rng.sample(StandardNormal);
            ds.push(Transition {
                state: vec![s],
                action: vec![a],
                next_state: vec![s + 0.1 * a + sigma * e],
                reward: 0.5 * s - 0.2 * a,
            })
            .unwrap();
        }
        ds
    }

    #[test]
    fn quantile_hand_values() {
        let residuals: Vec<f64> = (1..=100).map(|i| 0.1 * i as f64).collect();
        let q = residual_quantile(&residuals, 0.1).unwrap();
        assert!((q.eps_e - 9.0).abs() < 1e-12);
        assert!((q.d_e - 10.0).abs() < 1e-12);
        let all = residual_quantile(&residuals, 0.0).unwrap();
        assert_eq!(all.eps_e, all.d_e);
        assert!(residual_quantile(&[], 0.1).is_err());
        assert!(residual_quantile(&[1.0], 1.0).is_err());
    }

    #[test]
    fn quantile_is_monotone_in_delta() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let residuals: Vec<f64> = (0..257).map(|_| rng.random_range(0.0..2.0)).collect();
        let mut prev = f64::INFINITY;
        for i in 0..20 {
            let q = residual_quantile(&residuals, i as f64 * 0.05).unwrap();
            assert!(q.eps_e <= q.d_e);
            assert!(q.eps_e <= prev);
            prev = q.eps_e;
        }
    }

    #[test]
    fn fits_noiseless_linear_system() {
        let data = linear_data(2000, 0.0, 1);
        let held = linear_data(200, 0.0, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cfg = FitConfig {
            epochs: 60,
            ..FitConfig::default()
        };
        let model = fit_model(&data, &[16], &cfg, &mut rng).unwrap();
        let res = model.residuals(&held).unwrap();
        let mean = res.iter().sum::<f64>() / res.len() as f64;
        assert!(mean < 1e-2, "mean residual {mean}");
    }

    #[test]
    fn recovers_noise_scale() {
        let sigma = 0.05;
        let data = linear_data(10_000, sigma, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let cfg = FitConfig {
            epochs: 20,
            batch_size: 128,
            ..FitConfig::default()
        };
        let model = fit_model(&data, &[16], &cfg, &mut rng).unwrap();
        let learned = model.state_noise_std()[0];
        assert!(learned > sigma / 2.0 && learned < sigma * 2.0, "learned σ {learned}");
    }

    #[test]
    fn single_record_dataset() {
        let data = linear_data(1, 0.0, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = FitConfig {
            epochs: 300,
            batch_size: 4,
            ..FitConfig::default()
        };
        let model = fit_model(&data, &[8], &cfg, &mut rng).unwrap();
        let t = data.get(0).unwrap();
        let (next, r) = model.predict(&t.state, &t.action).unwrap();
        assert!((next[0] - t.next_state[0]).abs() < 1e-2);
        assert!((r - t.reward).abs() < 1e-2);
    }

    #[test]
    fn empty_inputs_rejected() {
        let empty = TransitionDataset::new(1, 1, 10);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(
            fit_model(&empty, &[4], &FitConfig::default(), &mut rng),
            Err(Error::EmptyDataset(_))
        ));
        let model = GaussianModel::random(1, 1, &[4], &mut rng).unwrap();
        assert!(measure_model_error(&model, &empty, 0.1).is_err());
    }

    #[test]
    fn residual_coverage_on_fresh_data() {
        let sigma = 0.05;
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let cfg = FitConfig {
            epochs: 10,
            batch_size: 64,
            ..FitConfig::default()
        };
        let model = fit_model(&linear_data(3000, sigma, 30), &[16], &cfg, &mut rng).unwrap();
        let delta = 0.1;
        let mut coverage = 0.0;
        let seeds = 5;
        for s in 0..seeds {
            let err = measure_model_error(&model, &linear_data(500, sigma, 100 + s), delta).unwrap();
            let fresh = model.residuals(&linear_data(2000, sigma, 200 + s)).unwrap();
            coverage += fresh.iter().filter(|r| **r <= err.eps_e).count() as f64 / fresh.len() as f64;
        }
        coverage /= seeds as f64;
        assert!(coverage >= 1.0 - delta - 0.05, "coverage {coverage}");
    }

    #[test]
    fn perfect_model_has_zero_error() {
        // Δs = 0.1·a exactly, reward head irrelevant
        let net = Mlp::linear(
            crate::linalg::Matrix::from_rows(&[vec![0.0, 0.1], vec![0.5, -0.2]]).unwrap(),
            vec![0.0, 0.0],
        )
        .unwrap();
        let model = GaussianModel::new(net, vec![0.0, 0.0]).unwrap();
        let err = measure_model_error(&model, &linear_data(100, 0.0, 4), 0.1).unwrap();
        assert!(err.eps_e < 1e-15 && err.d_e < 1e-15);
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut m = GaussianModel::random(2, 1, &[5], &mut rng).unwrap();
        m.eps_e = 0.125;
        m.delta_e = 0.1;
        m.d_e = 0.5;
        m.save(&path).unwrap();
        let back = GaussianModel::load(&path).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.fingerprint(), m.fingerprint());

        let exact = GaussianModel::random(2, 2, &[3], &mut rng)
            .unwrap()
            .with_exact_reward(Mdp::pointmass(2).unwrap())
            .unwrap();
        assert!(m.clone().with_exact_reward(Mdp::pointmass(2).unwrap()).is_err());
        assert_ne!(exact.fingerprint(), m.fingerprint());
        exact.save(&path).unwrap();
        assert_eq!(GaussianModel::load(&path).unwrap(), exact);
    }

    #[test]
    fn exact_reward_replaces_head() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let env = Mdp::pointmass(1).unwrap();
        let m = GaussianModel::random(1, 1, &[4], &mut rng).unwrap().with_exact_reward(env.clone()).unwrap();
        let (_, r) = m.predict(&[0.5], &[0.2]).unwrap();
        assert_eq!(r, env.reward(&[0.5], &[0.2]).unwrap());
        let sb = IntervalBox::new(vec![0.5], vec![0.1]).unwrap();
        let ab = IntervalBox::new(vec![0.2], vec![0.3]).unwrap();
        assert_eq!(m.predict_abs(&sb, &ab).unwrap().1, env.reward_abs(&sb, &ab).unwrap());
    }
}
