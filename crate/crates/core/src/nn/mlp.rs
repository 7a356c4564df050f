use rand::Rng;

use super::{Bound, ParamStore};
use crate::autodiff::{AutodiffError, Scalar, Tape, Tensor, Var};
use crate::Result;

/// Linear output branch taken from the activations of a hidden layer.
#[derive(Clone, Debug, PartialEq)]
pub struct HeadSpec {
    pub name: &'static str,
    /// 1-based hidden layer whose (post-ReLU) output feeds the head.
    pub after_layer: usize,
    pub dim: usize,
    /// Multiplier on the He-uniform weight bound.
    pub weight_gain: f64,
    pub bias_init: Vec<f64>,
}

/// Fully-connected ReLU trunk with optional input skip connection and linear heads.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub width: usize,
    pub layers: usize,
    /// The input is concatenated to the output of this (1-based) layer.
    pub skip_after: Option<usize>,
    pub heads: Vec<HeadSpec>,
}

#[derive(Clone, Debug)]
struct Linear {
    weight: usize,
    bias: usize,
}

impl Linear {
    fn build<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        name: &str,
        inputs: usize,
        outputs: usize,
        gain: f64,
        bias: &[f64],
        rng: &mut R,
    ) -> Result<Self> {
        let bound = gain * (6.0 / inputs as f64).sqrt();
        let w: Vec<f64> = (0..inputs * outputs).map(|_| rng.gen_range(-bound..bound)).collect();
        let b: Vec<f64> = if bias.is_empty() { vec![0.0; outputs] } else { bias.to_vec() };
        let weight = store.register(format!("{name}.weight"), Tensor::from_f64([inputs, outputs], &w)?)?;
        let bias = store.register(format!("{name}.bias"), Tensor::from_f64([outputs], &b)?)?;
        Ok(Linear { weight, bias })
    }

    fn forward<T: Scalar>(&self, tape: &mut Tape<T>, bound: &Bound, x: Var) -> Result<Var, AutodiffError> {
        let y = tape.matmul(x, bound.get(self.weight))?;
        tape.add(y, bound.get(self.bias))
    }
}

#[derive(Clone, Debug)]
pub struct Mlp {
    spec: MlpSpec,
    hidden: Vec<Linear>,
    heads: Vec<Linear>,
}

impl Mlp {
    /// Registers the layers as `<prefix>.l<i>` and `<prefix>.<head>` in `store`.
    pub fn build<T: Scalar, R: Rng>(spec: MlpSpec, prefix: &str, store: &mut ParamStore<T>, rng: &mut R) -> Result<Self> {
        let mut hidden = Vec::with_capacity(spec.layers);
        for layer in 1..=spec.layers {
            let inputs = if layer == 1 {
                spec.input_dim
            } else if Some(layer - 1) == spec.skip_after {
                spec.width + spec.input_dim
            } else {
                spec.width
            };
            hidden.push(Linear::build(store, &format!("{prefix}.l{layer}"), inputs, spec.width, 1.0, &[], rng)?);
        }
        let mut heads = Vec::with_capacity(spec.heads.len());
        for h in &spec.heads {
            assert!(h.after_layer >= 1 && h.after_layer <= spec.layers, "head after a missing layer");
            heads.push(Linear::build(store, &format!("{prefix}.{}", h.name), spec.width, h.dim, h.weight_gain, &h.bias_init, rng)?);
        }
        Ok(Mlp { spec, hidden, heads })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    /// Raw (pre-activation) head outputs, in the order of `spec.heads`.
    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, bound: &Bound, input: Var) -> Result<Vec<Var>, AutodiffError> {
        let mut outputs = vec![None; self.heads.len()];
        let mut h = input;
        for (i, layer) in self.hidden.iter().enumerate() {
            let depth = i + 1;
            let pre = layer.forward(tape, bound, h)?;
            h = tape.relu(pre)?;
            for (slot, (spec, head)) in outputs.iter_mut().zip(self.spec.heads.iter().zip(&self.heads)) {
                if spec.after_layer == depth {
                    *slot = Some(head.forward(tape, bound, h)?);
                }
            }
            if Some(depth) == self.spec.skip_after {
                h = tape.concat(&[h, input])?;
            }
        }
        Ok(outputs.into_iter().map(|o| o.expect("every head is attached to a layer")).collect())
    }
}
