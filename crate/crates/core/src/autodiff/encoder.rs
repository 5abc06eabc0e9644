use alloc::vec;
use alloc::vec::Vec;

use super::mlp::{check_input, Activation, BoundMlp, Mlp};
use super::tape::{Tape, Var};
use crate::error::{Error, Result};
use crate::liegroup::{AlgebraVector, GroupSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderConfig {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    /// `m + 1` for a class sphere `𝕊ᵐ`.
    pub class_output_dim: usize,
    pub algebra_output_dim: usize,
    pub activation: Activation,
    /// Multiplier on the algebra head output.
    pub pose_head_scale: f64,
}

impl EncoderConfig {
    pub fn new(input_dim: usize, class_output_dim: usize, algebra_output_dim: usize) -> Self {
        Self {
            input_dim,
            hidden_dims: vec![128, 128],
            class_output_dim,
            algebra_output_dim,
            activation: Activation::Tanh,
            pose_head_scale: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0
            || self.class_output_dim == 0
            || self.algebra_output_dim == 0
            || self.hidden_dims.contains(&0)
        {
            return Err(Error::Config("encoder dimensions must be >= 1".into()));
        }
        Ok(())
    }
}

/// The representation map `φ = (φ^ℰ, φ^G)`: an MLP whose output is split into
/// a raw class vector and an algebra vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    config: EncoderConfig,
    mlp: Mlp,
}

impl Encoder {
    pub fn new(config: EncoderConfig, offset: usize) -> Result<Self> {
        config.validate()?;
        let mut sizes = vec![config.input_dim];
        sizes.extend_from_slice(&config.hidden_dims);
        sizes.push(config.class_output_dim + config.algebra_output_dim);
        let mlp = Mlp::new(sizes, config.activation, offset)?;
        Ok(Self { config, mlp })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn mlp(&self) -> &Mlp {
        &self.mlp
    }

    pub fn num_params(&self) -> usize {
        self.mlp.num_params()
    }

    pub fn bind(&self, tape: &mut Tape, params: &[f64]) -> BoundMlp {
        self.mlp.bind(tape, params)
    }

    /// Records `x ↦ (raw_class, v)` on the tape.
    pub fn forward(&self, tape: &mut Tape, bound: &BoundMlp, x: &[f64]) -> Result<(Var, Var)> {
        check_input(x, self.config.input_dim)?;
        let xv = tape.constant(x.to_vec());
        let out = self.mlp.forward_tape(tape, bound, xv);
        let c = self.config.class_output_dim;
        let raw_class = tape.slice(out, 0, c);
        let mut v = tape.slice(out, c, self.config.algebra_output_dim);
        if self.config.pose_head_scale != 1.0 {
            v = tape.scale(v, self.config.pose_head_scale);
        }
        Ok((raw_class, v))
    }

    /// Same map without recording.
    pub fn forward_plain(&self, params: &[f64], x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        check_input(x, self.config.input_dim)?;
        let mut out = self.mlp.forward(params, x);
        let mut v = out.split_off(self.config.class_output_dim);
        if self.config.pose_head_scale != 1.0 {
            v.iter_mut().for_each(|x| *x *= self.config.pose_head_scale);
        }
        Ok((out, v))
    }

    pub fn algebra(&self, group: &GroupSpec, params: &[f64], x: &[f64]) -> Result<AlgebraVector> {
        let (_, v) = self.forward_plain(params, x)?;
        AlgebraVector::new(group, v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_output_weights_give_bias_and_zero_algebra() {
        let mut cfg = EncoderConfig::new(4, 3, 2);
        cfg.hidden_dims = vec![5];
        let enc = Encoder::new(cfg, 0).unwrap();
        let mut params = vec![0.0; enc.num_params()];
        enc.mlp().init(&mut params, &mut ChaCha8Rng::seed_from_u64(0));
        enc.mlp().zero_output_weights(&mut params);
        let n = params.len();
        // output bias: class entries set, algebra entries left at zero
        params[n - 5] = 0.1;
        params[n - 4] = -0.2;
        params[n - 3] = 0.3;
        let (c, v) = enc.forward_plain(&params, &[1.0, -2.0, 0.5, 3.0]).unwrap();
        assert_eq!(c, vec![0.1, -0.2, 0.3]);
        assert_eq!(v, vec![0.0, 0.0]);
    }

    #[test]
    fn single_layer_is_affine() {
        // 3 outputs (2 class + 1 algebra) from 2 inputs
        let mut cfg = EncoderConfig::new(2, 2, 1);
        cfg.hidden_dims = vec![];
        let enc = Encoder::new(cfg, 0).unwrap();
        let params = vec![1.0, 2.0, -1.0, 0.5, 0.0, 3.0, 0.1, 0.2, 0.3];
        let x = [2.0, -1.0];
        let (c, v) = enc.forward_plain(&params, &x).unwrap();
        // rows: (1,2)·x=0, (-1,0.5)·x=-2.5, (0,3)·x=-3
        assert_eq!(c, vec![0.1, -2.3]);
        assert!((v[0] + 2.7).abs() < 1e-15);

        let mut tape = Tape::new(params.len());
        let b = enc.bind(&mut tape, &params);
        let (ct, vt) = enc.forward(&mut tape, &b, &x).unwrap();
        assert_eq!(tape.value(ct), c.as_slice());
        assert_eq!(tape.value(vt), v.as_slice());
    }

    #[test]
    fn rejects_non_finite_and_wrong_length() {
        let enc = Encoder::new(EncoderConfig::new(2, 2, 1), 0).unwrap();
        let params = vec![0.0; enc.num_params()];
        assert!(matches!(enc.forward_plain(&params, &[f64::NAN, 0.0]), Err(Error::NonFiniteInput)));
        assert!(enc.forward_plain(&params, &[0.0]).is_err());
        let mut tape = Tape::new(params.len());
        let b = enc.bind(&mut tape, &params);
        assert!(enc.forward(&mut tape, &b, &[f64::INFINITY, 0.0]).is_err());
    }

    #[test]
    fn deterministic() {
        let enc = Encoder::new(EncoderConfig::new(3, 4, 3), 0).unwrap();
        let mut params = vec![0.0; enc.num_params()];
        enc.mlp().init(&mut params, &mut ChaCha8Rng::seed_from_u64(5));
        let x = [0.1, 0.2, -0.3];
        assert_eq!(enc.forward_plain(&params, &x).unwrap(), enc.forward_plain(&params, &x).unwrap());
    }
}
