use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::domain::{relu, sigmoid, IntervalBox};
use crate::error::{check_dim, Error, Result};
use crate::linalg::{all_finite, Matrix};

use super::grad::{LayerGradient, ParamGradient};

/// Element-wise activation applied after a dense layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
    Sigmoid,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => relu(x),
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => sigmoid(x),
        }
    }

    /// Derivative at the pre-activation `x`. ReLU uses 0 at the kink.
    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Activation::Sigmoid => {
                let s = sigmoid(x);
                s * (1.0 - s)
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Identity => "identity",
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(Activation::Identity),
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "sigmoid" => Ok(Activation::Sigmoid),
            other => Err(Error::InvalidArgument(format!("unknown activation {other:?}"))),
        }
    }
}

/// One dense layer: `activation(W·x + b)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn new(weights: Matrix, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        check_dim(weights.rows(), bias.len())?;
        Ok(Self {
            weights,
            bias,
            activation,
        })
    }
}

/// Feed-forward network with explicit weights.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    layers: Vec<Layer>,
}

/// Per-layer values cached by the concrete forward pass.
struct Tape {
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

/// Per-layer boxes cached by the abstract forward pass.
struct BoxTape {
    inputs: Vec<IntervalBox>,
    pre: Vec<IntervalBox>,
}

impl Mlp {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("network needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            check_dim(pair[0].weights.rows(), pair[1].weights.cols())?;
        }
        for layer in &layers {
            if !layer.weights.is_finite() || !all_finite(&layer.bias) {
                return Err(Error::NonFinite("network parameters"));
            }
        }
        Ok(Self { layers })
    }

    /// Single affine layer with identity activation.
    pub fn linear(weights: Matrix, bias: Vec<f64>) -> Result<Self> {
        Self::new(vec![Layer::new(weights, bias, Activation::Identity)?])
    }

    /// Randomly initialised network with layer widths `sizes` (input first).
    /// Weights and biases are drawn from `U[-1/√fan_in, 1/√fan_in]`.
    pub fn random<R: Rng + ?Sized>(
        sizes: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::InvalidArgument(format!("bad layer sizes {sizes:?}")));
        }
        let last = sizes.len() - 2;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = 1.0 / (fan_in as f64).sqrt();
                let data = (0..fan_in * fan_out)
                    .map(|_| rng.random_range(-bound..=bound))
                    .collect();
                let bias = (0..fan_out).map(|_| rng.random_range(-bound..=bound)).collect();
                let act = if i == last { output } else { hidden };
                Layer::new(Matrix::from_vec(fan_out, fan_in, data)?, bias, act)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(layers)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].weights.rows()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.data().len() + l.bias.len())
            .sum()
    }

    /// Parameters flattened layer by layer: weights row-major, then bias.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(l.weights.data());
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn set_flat_params(&mut self, params: &[f64]) -> Result<()> {
        check_dim(self.param_count(), params.len())?;
        if !all_finite(params) {
            return Err(Error::NonFinite("network parameters"));
        }
        let mut offset = 0;
        for l in &mut self.layers {
            let n = l.weights.data().len();
            l.weights.data_mut().copy_from_slice(&params[offset..offset + n]);
            offset += n;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&params[offset..offset + nb]);
            offset += nb;
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.input_dim(), x.len())?;
        let mut h = x.to_vec();
        for l in &self.layers {
            let z = l.weights.mul_vec_add(&h, &l.bias)?;
            h = z.into_iter().map(|v| l.activation.apply(v)).collect();
        }
        if !all_finite(&h) {
            return Err(Error::NonFinite("network output"));
        }
        Ok(h)
    }

    fn forward_tape(&self, x: &[f64]) -> Result<(Vec<f64>, Tape)> {
        check_dim(self.input_dim(), x.len())?;
        let mut tape = Tape {
            inputs: Vec::with_capacity(self.layers.len()),
            pre: Vec::with_capacity(self.layers.len()),
        };
        let mut h = x.to_vec();
        for l in &self.layers {
            let z = l.weights.mul_vec_add(&h, &l.bias)?;
            let next = z.iter().map(|v| l.activation.apply(*v)).collect();
            tape.inputs.push(h);
            tape.pre.push(z);
            h = next;
        }
        Ok((h, tape))
    }

    /// Interval bound propagation: affine transfer then the monotone
    /// endpoint rule for each activation.
    pub fn forward_abs(&self, b: &IntervalBox) -> Result<IntervalBox> {
        self.forward_abs_tape(b).map(|(out, _)| out)
    }

    fn forward_abs_tape(&self, b: &IntervalBox) -> Result<(IntervalBox, BoxTape)> {
        check_dim(self.input_dim(), b.dim())?;
        let mut tape = BoxTape {
            inputs: Vec::with_capacity(self.layers.len()),
            pre: Vec::with_capacity(self.layers.len()),
        };
        let mut h = b.clone();
        for l in &self.layers {
            let z = h.affine(&l.weights, &l.bias)?;
            let next = match l.activation {
                Activation::Identity => z.clone(),
                act => z.map_monotone(|v| act.apply(v)),
            };
            tape.inputs.push(h);
            tape.pre.push(z);
            h = next;
        }
        Ok((h, tape))
    }

    /// Gradient of `⟨upstream, forward(x)⟩` with respect to the parameters.
    pub fn backward(&self, x: &[f64], upstream: &[f64]) -> Result<ParamGradient> {
        self.backward_with_input(x, upstream).map(|(g, _)| g)
    }

    /// As [`Mlp::backward`], also returning the gradient with respect to `x`.
    pub fn backward_with_input(
        &self,
        x: &[f64],
        upstream: &[f64],
    ) -> Result<(ParamGradient, Vec<f64>)> {
        check_dim(self.output_dim(), upstream.len())?;
        let (_, tape) = self.forward_tape(x)?;
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut g = upstream.to_vec();
        for (i, l) in self.layers.iter().enumerate().rev() {
            let gz: Vec<f64> = g
                .iter()
                .zip(&tape.pre[i])
                .map(|(g, z)| g * l.activation.derivative(*z))
                .collect();
            let input = &tape.inputs[i];
            let mut gw = Matrix::zeros(l.weights.rows(), l.weights.cols());
            for (r, gr) in gz.iter().enumerate() {
                for (c, xc) in input.iter().enumerate() {
                    gw.set(r, c, gr * xc);
                }
            }
            g = l.weights.transpose_mul_vec(&gz)?;
            grads.push(LayerGradient {
                weights: gw,
                bias: gz,
            });
        }
        grads.reverse();
        Ok((ParamGradient { layers: grads }, g))
    }

    /// Gradient of `⟨up_center, c_out⟩ + ⟨up_dev, d_out⟩` with respect to the
    /// parameters, where `⟨c_out, d_out⟩ = forward_abs(b)`.
    pub fn backward_abs(
        &self,
        b: &IntervalBox,
        up_center: &[f64],
        up_dev: &[f64],
    ) -> Result<ParamGradient> {
        self.backward_abs_with_input(b, up_center, up_dev).map(|(g, _, _)| g)
    }

    /// As [`Mlp::backward_abs`], also returning gradients with respect to the
    /// input box center and deviation.
    pub fn backward_abs_with_input(
        &self,
        b: &IntervalBox,
        up_center: &[f64],
        up_dev: &[f64],
    ) -> Result<(ParamGradient, Vec<f64>, Vec<f64>)> {
        check_dim(self.output_dim(), up_center.len())?;
        check_dim(self.output_dim(), up_dev.len())?;
        let (_, tape) = self.forward_abs_tape(b)?;
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut gc = up_center.to_vec();
        let mut gd = up_dev.to_vec();
        for (i, l) in self.layers.iter().enumerate().rev() {
            let z = &tape.pre[i];
            let (gzc, gzd): (Vec<f64>, Vec<f64>) = match l.activation {
                Activation::Identity => (gc.clone(), gd.clone()),
                act => gc
                    .iter()
                    .zip(&gd)
                    .zip(z.center().iter().zip(z.deviation()))
                    .map(|((gc, gd), (zc, zd))| {
                        // out_c = (g(hi) + g(lo))/2, out_d = (g(hi) - g(lo))/2
                        let g_hi = 0.5 * (gc + gd) * act.derivative(zc + zd);
                        let g_lo = 0.5 * (gc - gd) * act.derivative(zc - zd);
                        (g_hi + g_lo, g_hi - g_lo)
                    })
                    .unzip(),
            };
            let input = &tape.inputs[i];
            let mut gw = Matrix::zeros(l.weights.rows(), l.weights.cols());
            for r in 0..l.weights.rows() {
                for c in 0..l.weights.cols() {
                    // center' = W·c, deviation' = |W|·d
                    let w = l.weights.get(r, c);
                    let v = gzc[r] * input.center()[c] + gzd[r] * input.deviation()[c] * sign(w);
                    gw.set(r, c, v);
                }
            }
            gc = l.weights.transpose_mul_vec(&gzc)?;
            gd = l.weights.abs_transpose_mul_vec(&gzd)?;
            grads.push(LayerGradient {
                weights: gw,
                bias: gzc,
            });
        }
        grads.reverse();
        Ok((ParamGradient { layers: grads }, gc, gd))
    }

    /// Product of per-layer induced ∞-norms; an upper bound on the l∞
    /// Lipschitz constant since every activation is 1-Lipschitz.
    pub fn lipschitz_upper(&self) -> f64 {
        self.layers.iter().map(|l| l.weights.inf_norm()).product()
    }

    /// `params ← params - lr · grad`.
    pub fn apply_gradient(&mut self, grad: &ParamGradient, lr: f64) -> Result<()> {
        let mut p = self.flat_params();
        let g = grad.flat();
        check_dim(p.len(), g.len())?;
        for (pi, gi) in p.iter_mut().zip(&g) {
            *pi -= lr * gi;
        }
        self.set_flat_params(&p)
    }
}

#[inline]
fn sign(w: f64) -> f64 {
    if w > 0.0 {
        1.0
    } else if w < 0.0 {
        -1.0
    } else {
        0.0
    }
}
