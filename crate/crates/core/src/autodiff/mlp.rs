use alloc::vec;
use alloc::vec::Vec;

use libm::{sqrt, tanh};
use rand::Rng;

use super::tape::{Tape, Var};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => tanh(x),
            Activation::Relu => x.max(0.0),
        }
    }
}

/// Fully connected network with an activation after every hidden layer and
/// an affine output. Parameters live in a flat slice owned by the caller:
/// for each layer the row-major `out×in` weight followed by the bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    activation: Activation,
    offset: usize,
}

/// Parameter nodes of an [`Mlp`] bound to one tape.
#[derive(Debug, Clone)]
pub struct BoundMlp {
    layers: Vec<(Var, Var)>,
}

impl Mlp {
    /// `sizes` lists input, hidden and output widths; `offset` is where this
    /// network's parameters start in the shared flat vector.
    pub fn new(sizes: Vec<usize>, activation: Activation, offset: usize) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Config("MLP needs an input and an output layer of width >= 1".into()));
        }
        Ok(Self { sizes, activation, offset })
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn offset(&self) -> usize {
        self.offset
    }

    pub fn num_params(&self) -> usize {
        self.sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// `(weight_offset, bias_offset, fan_in, fan_out)` per layer.
    fn layout(&self) -> impl Iterator<Item = (usize, usize, usize, usize)> + '_ {
        let mut at = self.offset;
        self.sizes.windows(2).map(move |w| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let wo = at;
            let bo = at + fan_in * fan_out;
            at = bo + fan_out;
            (wo, bo, fan_in, fan_out)
        })
    }

    /// Glorot-uniform weights in `±√(6/(fan_in+fan_out))`, zero biases.
    pub fn init<R: Rng + ?Sized>(&self, params: &mut [f64], rng: &mut R) {
        for (wo, bo, fan_in, fan_out) in self.layout() {
            let limit = sqrt(6.0 / (fan_in + fan_out) as f64);
            for p in &mut params[wo..bo] {
                *p = (2.0 * rng.random::<f64>() - 1.0) * limit;
            }
            for p in &mut params[bo..bo + fan_out] {
                *p = 0.0;
            }
        }
    }

    /// Zeroes the final layer's weights (biases are left as they are).
    pub fn zero_output_weights(&self, params: &mut [f64]) {
        if let Some((wo, bo, _, _)) = self.layout().last() {
            params[wo..bo].iter_mut().for_each(|p| *p = 0.0);
        }
    }

    pub fn bind(&self, tape: &mut Tape, params: &[f64]) -> BoundMlp {
        let layers = self
            .layout()
            .map(|(wo, bo, fan_in, fan_out)| {
                (tape.param(params, wo, fan_in * fan_out), tape.param(params, bo, fan_out))
            })
            .collect();
        BoundMlp { layers }
    }

    pub fn forward_tape(&self, tape: &mut Tape, bound: &BoundMlp, x: Var) -> Var {
        let mut h = x;
        let last = self.sizes.len() - 2;
        for (i, ((w, b), win)) in bound.layers.iter().zip(self.sizes.windows(2)).enumerate() {
            let z = tape.matvec(*w, h, win[1], win[0]);
            h = tape.add(z, *b);
            if i < last {
                h = match self.activation {
                    Activation::Tanh => tape.tanh(h),
                    Activation::Relu => tape.relu(h),
                };
            }
        }
        h
    }

    /// Plain evaluation without recording.
    pub fn forward(&self, params: &[f64], x: &[f64]) -> Vec<f64> {
        let mut h = x.to_vec();
        let last = self.sizes.len() - 2;
        for (i, (wo, bo, fan_in, fan_out)) in self.layout().enumerate() {
            let mut out = vec![0.0; fan_out];
            for (r, o) in out.iter_mut().enumerate() {
                let row = &params[wo + r * fan_in..wo + (r + 1) * fan_in];
                *o = row.iter().zip(&h).map(|(a, b)| a * b).sum::<f64>() + params[bo + r];
            }
            if i < last {
                out.iter_mut().for_each(|v| *v = self.activation.apply(*v));
            }
            h = out;
        }
        h
    }
}

pub(crate) fn check_input(x: &[f64], dim: usize) -> Result<()> {
    if x.len() != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: x.len() });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    Ok(())
}
