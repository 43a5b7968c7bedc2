use crate::error::{Error, Result};

/// Inputs of the probabilistic lower bound on true worst-case reward.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundInputs {
    pub wcar_mean: f64,
    pub wcar_variance: f64,
    pub samples: usize,
    pub delta: f64,
    pub delta_e: f64,
    pub horizon: usize,
    pub l_e: f64,
    pub l_pi: f64,
    pub l_r: f64,
    pub d_e: f64,
}

/// `((L)^T + (1 - L)T - 1) / (1 - L)²`, equal to `Σ_{i=1..T} Σ_{j=0..i-2} L^j`.
pub fn compounding_factor(l: f64, horizon: usize) -> f64 {
    let t = horizon as f64;
    if (1.0 - l).abs() < 1e-3 {
        // closed form cancels catastrophically near L = 1
        let mut total = 0.0;
        let mut inner = 0.0;
        let mut power = 1.0;
        for _ in 2..=horizon {
            inner += power;
            power *= l;
            total += inner;
        }
        total
    } else {
        (l.powi(horizon as i32) + (1.0 - l) * t - 1.0) / ((1.0 - l) * (1.0 - l))
    }
}

/// Model-error correction term subtracted from the sampled mean.
pub fn model_error_correction(b: &BoundInputs) -> f64 {
    if b.delta_e == 0.0 || b.d_e == 0.0 {
        return 0.0;
    }
    let miss = 1.0 - (1.0 - b.delta_e).powi(b.horizon as i32);
    miss * b.l_r * (1.0 + b.l_pi) * b.d_e * compounding_factor(b.l_e * b.l_pi, b.horizon)
}

/// `R̂ - √(Var/N)/√δ - correction`.
pub fn probabilistic_bound(b: &BoundInputs) -> Result<f64> {
    if !(b.delta > 0.0 && b.delta < 1.0) {
        return Err(Error::InvalidArgument(format!("δ must lie in (0, 1), got {}", b.delta)));
    }
    if !(0.0..1.0).contains(&b.delta_e) {
        return Err(Error::InvalidArgument(format!("δ_E must lie in [0, 1), got {}", b.delta_e)));
    }
    if b.samples == 0 {
        return Err(Error::InvalidArgument("sample count must be positive".into()));
    }
    if b.wcar_variance < 0.0 {
        return Err(Error::InvalidArgument("variance must be nonnegative".into()));
    }
    let spread = if b.wcar_variance == 0.0 {
        0.0
    } else {
        (b.wcar_variance / b.samples as f64).sqrt() / b.delta.sqrt()
    };
    Ok(b.wcar_mean - spread - model_error_correction(b))
}
