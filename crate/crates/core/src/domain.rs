//! Interval (box) abstract domain.
//!
//! A box is stored as a center and a non-negative per-dimension deviation and
//! concretizes to the hyperinterval `∏ [center_i - dev_i, center_i + dev_i]`.
//! Every transfer function here over-approximates its concrete counterpart:
//! for each `x` in the input box, `f(x)` lies in the output box.
//!
//! Outward rounding is not performed, so soundness holds up to unit roundoff.

use std::ops::Range;

use crate::error::{check_dim, Error, Result};
use crate::linalg::Matrix;

/// Interval abstract value over `ℝ^m`.
#[derive(Clone, Debug, PartialEq)]
pub struct IntervalBox {
    center: Vec<f64>,
    deviation: Vec<f64>,
}

impl IntervalBox {
    /// Builds a box from center and deviation. Deviations must be `>= 0` and
    /// nothing may be NaN.
    pub fn new(center: Vec<f64>, deviation: Vec<f64>) -> Result<Self> {
        check_dim(center.len(), deviation.len())?;
        if center.iter().any(|c| c.is_nan()) {
            return Err(Error::NonFinite("box center"));
        }
        if deviation.iter().any(|d| d.is_nan() || *d < 0.0) {
            return Err(Error::InvalidArgument(
                "box deviation must be non-negative".into(),
            ));
        }
        Ok(Self { center, deviation })
    }

    /// Smallest box containing the single point `x`.
    pub fn from_point(x: &[f64]) -> Result<Self> {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("point abstraction input"));
        }
        Ok(Self {
            center: x.to_vec(),
            deviation: vec![0.0; x.len()],
        })
    }

    /// Box from per-dimension bounds `lo <= hi`.
    pub fn from_bounds(lo: &[f64], hi: &[f64]) -> Result<Self> {
        check_dim(lo.len(), hi.len())?;
        if lo.iter().zip(hi).any(|(l, h)| !(l <= h)) {
            return Err(Error::InvalidArgument("box bounds must satisfy lo <= hi".into()));
        }
        let center = lo.iter().zip(hi).map(|(l, h)| (l + h) / 2.0).collect();
        let deviation = lo.iter().zip(hi).map(|(l, h)| (h - l) / 2.0).collect();
        Ok(Self { center, deviation })
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn deviation(&self) -> &[f64] {
        &self.deviation
    }

    pub fn lower(&self) -> Vec<f64> {
        self.center.iter().zip(&self.deviation).map(|(c, d)| c - d).collect()
    }

    pub fn upper(&self) -> Vec<f64> {
        self.center.iter().zip(&self.deviation).map(|(c, d)| c + d).collect()
    }

    pub fn lower_at(&self, i: usize) -> f64 {
        self.center[i] - self.deviation[i]
    }

    pub fn upper_at(&self, i: usize) -> f64 {
        self.center[i] + self.deviation[i]
    }

    pub fn is_point(&self) -> bool {
        self.deviation.iter().all(|d| *d == 0.0)
    }

    /// Whether `x ∈ β(self)`.
    pub fn contains_point(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .enumerate()
                .all(|(i, v)| self.lower_at(i) <= *v && *v <= self.upper_at(i))
    }

    /// Whether `x ∈ β(self)` allowing a slack of `tol` on every bound.
    pub fn contains_point_tol(&self, x: &[f64], tol: f64) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .enumerate()
                .all(|(i, v)| self.lower_at(i) - tol <= *v && *v <= self.upper_at(i) + tol)
    }

    /// Whether `β(other) ⊆ β(self)`.
    pub fn contains(&self, other: &IntervalBox) -> bool {
        other.dim() == self.dim()
            && (0..self.dim())
                .all(|i| self.lower_at(i) <= other.lower_at(i) && other.upper_at(i) <= self.upper_at(i))
    }

    /// True when every bound is finite and within `limit` in magnitude.
    pub fn is_bounded(&self, limit: f64) -> bool {
        (0..self.dim()).all(|i| {
            let (lo, hi) = (self.lower_at(i), self.upper_at(i));
            lo.is_finite() && hi.is_finite() && lo.abs() <= limit && hi.abs() <= limit
        })
    }

    /// Symmetric l∞ widening: every deviation grows by `eps`.
    pub fn widen(&self, eps: f64) -> Result<Self> {
        if !(eps >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "widening radius must be non-negative, got {eps}"
            )));
        }
        Ok(Self {
            center: self.center.clone(),
            deviation: self.deviation.iter().map(|d| d + eps).collect(),
        })
    }

    /// `⟨M·c + bias, |M|·d⟩`. An empty `bias` means no offset.
    pub fn affine(&self, m: &Matrix, bias: &[f64]) -> Result<Self> {
        Ok(Self {
            center: m.mul_vec_add(&self.center, bias)?,
            deviation: m.abs_mul_vec(&self.deviation)?,
        })
    }

    /// Minkowski sum of two boxes of equal dimension.
    pub fn add(&self, other: &IntervalBox) -> Result<Self> {
        check_dim(self.dim(), other.dim())?;
        Ok(Self {
            center: self.center.iter().zip(&other.center).map(|(a, b)| a + b).collect(),
            deviation: self
                .deviation
                .iter()
                .zip(&other.deviation)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    /// Adds a concrete offset (the abstraction of a single point).
    pub fn add_point(&self, x: &[f64]) -> Result<Self> {
        check_dim(self.dim(), x.len())?;
        Ok(Self {
            center: self.center.iter().zip(x).map(|(a, b)| a + b).collect(),
            deviation: self.deviation.clone(),
        })
    }

    /// Multiplication of every dimension by the constant `w`.
    pub fn scale(&self, w: f64) -> Self {
        Self {
            center: self.center.iter().map(|c| w * c).collect(),
            deviation: self.deviation.iter().map(|d| w.abs() * d).collect(),
        }
    }

    /// Sum of all coordinates, as a one-dimensional box.
    pub fn sum(&self) -> Self {
        Self {
            center: vec![self.center.iter().sum()],
            deviation: vec![self.deviation.iter().sum()],
        }
    }

    /// Element-wise transfer for a non-decreasing function: endpoints map to endpoints.
    pub fn map_monotone(&self, g: impl Fn(f64) -> f64) -> Self {
        let mut center = Vec::with_capacity(self.dim());
        let mut deviation = Vec::with_capacity(self.dim());
        for (c, d) in self.center.iter().zip(&self.deviation) {
            let (lo, hi) = (g(c - d), g(c + d));
            center.push((hi + lo) / 2.0);
            deviation.push((hi - lo) / 2.0);
        }
        Self { center, deviation }
    }

    pub fn relu(&self) -> Self {
        if (0..self.dim()).all(|i| self.lower_at(i) >= 0.0) {
            return self.clone();
        }
        self.map_monotone(relu)
    }

    pub fn sigmoid(&self) -> Self {
        self.map_monotone(sigmoid)
    }

    pub fn tanh(&self) -> Self {
        self.map_monotone(f64::tanh)
    }

    /// Element-wise clamp into `[lo, hi]`.
    pub fn clip(&self, lo: f64, hi: f64) -> Self {
        if (0..self.dim()).all(|i| self.lower_at(i) >= lo && self.upper_at(i) <= hi) {
            return self.clone();
        }
        self.map_monotone(|x| x.clamp(lo, hi))
    }

    /// Element-wise absolute value; exact interval hull of `|x|`.
    pub fn abs(&self) -> Self {
        let mut center = Vec::with_capacity(self.dim());
        let mut deviation = Vec::with_capacity(self.dim());
        for i in 0..self.dim() {
            let (lo, hi) = (self.lower_at(i), self.upper_at(i));
            if lo >= 0.0 {
                center.push(self.center[i]);
                deviation.push(self.deviation[i]);
            } else if hi <= 0.0 {
                center.push(-self.center[i]);
                deviation.push(self.deviation[i]);
            } else {
                let top = hi.max(-lo);
                center.push(top / 2.0);
                deviation.push(top / 2.0);
            }
        }
        Self { center, deviation }
    }

    /// Stacks `self` on top of `other`.
    pub fn concat(&self, other: &IntervalBox) -> Self {
        let mut center = self.center.clone();
        center.extend_from_slice(&other.center);
        let mut deviation = self.deviation.clone();
        deviation.extend_from_slice(&other.deviation);
        Self { center, deviation }
    }

    /// Sub-box over the coordinate range.
    pub fn slice(&self, range: Range<usize>) -> Self {
        Self {
            center: self.center[range.clone()].to_vec(),
            deviation: self.deviation[range].to_vec(),
        }
    }
}

pub(crate) fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}
