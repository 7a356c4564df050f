use std::f64::consts::PI;

/// Fourier-feature lift of an `input_dim` vector: the raw input followed by
/// `sin(2^j pi x_i), cos(2^j pi x_i)` for `j < levels`, per component.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PositionalEncoder {
    pub input_dim: usize,
    pub levels: usize,
}

impl PositionalEncoder {
    pub fn new(input_dim: usize, levels: usize) -> Self {
        PositionalEncoder { input_dim, levels }
    }

    pub fn output_dim(&self) -> usize {
        self.input_dim * (1 + 2 * self.levels)
    }

    pub fn encode_into(&self, x: &[f64], out: &mut Vec<f64>) {
        debug_assert_eq!(x.len(), self.input_dim);
        out.extend_from_slice(x);
        for &xi in x {
            for j in 0..self.levels {
                let w = (1u64 << j) as f64 * PI * xi;
                out.push(w.sin());
                out.push(w.cos());
            }
        }
    }

    pub fn encode(&self, x: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.output_dim());
        self.encode_into(x, &mut out);
        out
    }
}

/// Encodes `x` with `levels` frequency levels.
pub fn encode(x: &[f64], levels: usize) -> Vec<f64> {
    PositionalEncoder::new(x.len(), levels).encode(x)
}
