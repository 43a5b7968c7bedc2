use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::StandardNormal;

use crate::domain::IntervalBox;
use crate::error::{check_dim, Error, Result};
use crate::linalg::{all_finite, Matrix};
use crate::nn::{checkpoint, Activation, Mlp};
use crate::textio::{self, fmt_vec, parse_vec, sha256_hex, Lines};

/// Separable Gaussian policy `π(a|s) = μ_π(s) + N(0, diag(σ²))` whose noise
/// does not depend on the state.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianPolicy {
    pub mean_net: Mlp,
    pub log_sigma: Vec<f64>,
    /// When set, actions are `μ_π(s)` with no noise.
    pub deterministic_eval: bool,
}

impl GaussianPolicy {
    pub fn new(mean_net: Mlp, log_sigma: Vec<f64>, deterministic_eval: bool) -> Result<Self> {
        check_dim(mean_net.output_dim(), log_sigma.len())?;
        if !all_finite(&log_sigma) {
            return Err(Error::NonFinite("policy log sigma"));
        }
        Ok(Self {
            mean_net,
            log_sigma,
            deterministic_eval,
        })
    }

    /// Tanh network with a tanh output head, so mean actions lie in `[-1, 1]`.
    pub fn random<R: Rng + ?Sized>(
        state_dim: usize,
        action_dim: usize,
        hidden: &[usize],
        log_sigma: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let mut sizes = vec![state_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(action_dim);
        let net = Mlp::random(&sizes, Activation::Tanh, Activation::Tanh, rng)?;
        Self::new(net, vec![log_sigma; action_dim], false)
    }

    /// Deterministic `π(s) = s`.
    pub fn identity(dim: usize) -> Result<Self> {
        Self::new(Mlp::linear(Matrix::identity(dim), vec![0.0; dim])?, vec![0.0; dim], true)
    }

    pub fn state_dim(&self) -> usize {
        self.mean_net.input_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.mean_net.output_dim()
    }

    pub fn sigma(&self) -> Vec<f64> {
        self.log_sigma.iter().map(|l| l.exp()).collect()
    }

    pub fn mean(&self, s: &[f64]) -> Result<Vec<f64>> {
        self.mean_net.forward(s)
    }

    pub fn mean_abs(&self, s: &IntervalBox) -> Result<IntervalBox> {
        self.mean_net.forward_abs(s)
    }

    /// Draws the additive action noise `e_π`; zero when deterministic.
    pub fn sample_noise<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        if self.deterministic_eval {
            return vec![0.0; self.action_dim()];
        }
        self.log_sigma
            .iter()
            .map(|l| {
                let z: f64 = rng.sample(StandardNormal);
                l.exp() * z
            })
            .collect()
    }

    pub fn act<R: Rng + ?Sized>(&self, s: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        let noise = self.sample_noise(rng);
        Ok(self
            .mean(s)?
            .iter()
            .zip(&noise)
            .map(|(m, e)| m + e)
            .collect())
    }

    pub fn with_deterministic_eval(mut self, on: bool) -> Self {
        self.deterministic_eval = on;
        self
    }

    fn meta_text(&self) -> String {
        format!(
            "certrl-policy-meta 1\nlog_sigma {}\ndeterministic_eval {}\n",
            fmt_vec(&self.log_sigma),
            self.deterministic_eval
        )
    }

    /// Content hash of the network and metadata.
    pub fn fingerprint(&self) -> String {
        let mut text = checkpoint::to_text(&self.mean_net);
        text.push_str(&self.meta_text());
        sha256_hex(text.as_bytes())
    }

    /// Writes the network to `path` and the metadata to `path.meta`.
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
            let (_, v) = lines.expect("certrl-policy-meta")?;
            if v != ["1"] {
                return Err(format!("unsupported version {v:?}"));
            }
            let (_, ls) = lines.expect("log_sigma")?;
            let log_sigma = parse_vec(ls.into_iter())?;
            let (_, det) = lines.expect("deterministic_eval")?;
            let det = match det.as_slice() {
                ["true"] => true,
                ["false"] => false,
                other => return Err(format!("bad flag {other:?}")),
            };
            Ok((log_sigma, det))
        })();
        let (log_sigma, det) = parsed.map_err(|r| Error::parse("policy metadata", &mp, r))?;
        Self::new(net, log_sigma, det)
    }
}

/// Sidecar path `<path>.meta` holding checkpoint metadata.
pub fn meta_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}
