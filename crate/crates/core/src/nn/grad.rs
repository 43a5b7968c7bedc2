use crate::linalg::Matrix;

use super::Mlp;

#[derive(Clone, Debug, PartialEq)]
pub struct LayerGradient {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

/// Partial derivatives shaped like the parameters of an [`Mlp`].
#[derive(Clone, Debug, PartialEq)]
pub struct ParamGradient {
    pub layers: Vec<LayerGradient>,
}

impl ParamGradient {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            layers: net
                .layers()
                .iter()
                .map(|l| LayerGradient {
                    weights: Matrix::zeros(l.weights.rows(), l.weights.cols()),
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
        }
    }

    /// Whether this gradient has the same layer shapes as `net`.
    pub fn matches(&self, net: &Mlp) -> bool {
        self.layers.len() == net.layers().len()
            && self.layers.iter().zip(net.layers()).all(|(g, l)| {
                g.weights.rows() == l.weights.rows()
                    && g.weights.cols() == l.weights.cols()
                    && g.bias.len() == l.bias.len()
            })
    }

    /// `self += scale · other`. Shapes must agree.
    pub fn add_scaled(&mut self, other: &ParamGradient, scale: f64) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.weights.data_mut().iter_mut().zip(b.weights.data()) {
                *x += scale * y;
            }
            for (x, y) in a.bias.iter_mut().zip(&b.bias) {
                *x += scale * y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for l in &mut self.layers {
            l.weights.data_mut().iter_mut().for_each(|x| *x *= s);
            l.bias.iter_mut().for_each(|x| *x *= s);
        }
    }

    /// Flattened in the same order as [`Mlp::flat_params`].
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(l.weights.data());
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn norm(&self) -> f64 {
        self.flat().iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.flat().iter().all(|x| x.is_finite())
    }
}
