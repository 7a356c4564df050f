use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Bound, HeadSpec, Mlp, MlpSpec, ParamStore, PositionalEncoder};
use crate::autodiff::{AutodiffError, Scalar, Tape, Var};
use crate::Result;

/// Sizes of the three networks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArchConfig {
    pub surface_width: usize,
    pub surface_layers: usize,
    /// Hidden layer feeding the normal head.
    pub normal_layer: usize,
    pub skip_after: usize,
    pub depth_width: usize,
    pub depth_layers: usize,
    pub basis_width: usize,
    pub basis_layers: usize,
    pub coord_levels: usize,
    pub basis_levels: usize,
    /// Number of specular basis functions.
    pub k: usize,
}

impl Default for ArchConfig {
    fn default() -> Self {
        ArchConfig {
            surface_width: 256,
            surface_layers: 12,
            normal_layer: 8,
            skip_after: 4,
            depth_width: 256,
            depth_layers: 8,
            basis_width: 64,
            basis_layers: 3,
            coord_levels: 10,
            basis_levels: 3,
            k: 9,
        }
    }
}

/// Surface network: pixel coordinate (plus dataset colour statistics) to
/// unit normal, diffuse albedo and specular-basis weights.
#[derive(Clone, Debug)]
pub struct SurfaceNet {
    mlp: Mlp,
    encoder: PositionalEncoder,
    channels: usize,
    k: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct SurfaceOutput {
    /// `[N, 3]`, unit rows.
    pub normal: Var,
    /// `[N, channels]`, nonnegative.
    pub albedo: Var,
    /// `[N, k]`, nonnegative.
    pub coeffs: Var,
}

impl SurfaceNet {
    pub fn input_dim(&self) -> usize {
        self.encoder.output_dim() + 2 * self.channels
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Network input for normalized coordinates `coords` in (-1, 1).
    pub fn input<T: Scalar>(&self, tape: &mut Tape<T>, coords: &[[f64; 2]], color_stats: &[f64]) -> Result<Var> {
        assert_eq!(color_stats.len(), 2 * self.channels, "colour statistics are mean and deviation per channel");
        let mut data = Vec::with_capacity(coords.len() * self.input_dim());
        for c in coords {
            self.encoder.encode_into(c, &mut data);
            data.extend_from_slice(color_stats);
        }
        Ok(tape.constant_f64([coords.len(), self.input_dim()], &data)?)
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, bound: &Bound, input: Var) -> Result<SurfaceOutput, AutodiffError> {
        let heads = self.mlp.forward(tape, bound, input)?;
        let normal = tape.l2_normalize(heads[0])?;
        let albedo = tape.slice_cols(heads[1], 0, self.channels)?;
        let albedo = tape.max_zero(albedo)?;
        let coeffs = tape.slice_cols(heads[1], self.channels, self.channels + self.k)?;
        let coeffs = tape.max_zero(coeffs)?;
        Ok(SurfaceOutput { normal, albedo, coeffs })
    }
}

/// Specular basis network: `(n·h, v·h)` to `k` nonnegative lobe values.
#[derive(Clone, Debug)]
pub struct BasisNet {
    mlp: Mlp,
    levels: usize,
}

impl BasisNet {
    /// `nh`, `vh`: `[N, 1]` cosines. Returns `[N, k]`.
    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, bound: &Bound, nh: Var, vh: Var) -> Result<Var, AutodiffError> {
        let p = tape.concat(&[nh, vh])?;
        let x = tape.pos_encode(p, self.levels)?;
        let out = self.mlp.forward(tape, bound, x)?;
        tape.max_zero(out[0])
    }
}

/// Depth network: pixel coordinate to depth, in normalized image-plane units.
#[derive(Clone, Debug)]
pub struct DepthNet {
    mlp: Mlp,
    encoder: PositionalEncoder,
}

impl DepthNet {
    pub fn input<T: Scalar>(&self, tape: &mut Tape<T>, coords: &[[f64; 2]]) -> Result<Var> {
        let mut data = Vec::with_capacity(coords.len() * self.encoder.output_dim());
        for c in coords {
            self.encoder.encode_into(c, &mut data);
        }
        Ok(tape.constant_f64([coords.len(), self.encoder.output_dim()], &data)?)
    }

    /// Returns `[N, 1]`.
    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, bound: &Bound, input: Var) -> Result<Var, AutodiffError> {
        Ok(self.mlp.forward(tape, bound, input)?[0])
    }
}

/// The three networks and their parameters.
#[derive(Clone, Debug)]
pub struct Model<T> {
    pub arch: ArchConfig,
    pub store: ParamStore<T>,
    pub surface: SurfaceNet,
    pub basis: BasisNet,
    pub depth: DepthNet,
}

/// Per-point outputs of the surface network.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SurfaceEval {
    pub normals: Vec<[f64; 3]>,
    /// Row-major `[N, channels]`.
    pub albedo: Vec<f64>,
    /// Row-major `[N, k]`.
    pub coeffs: Vec<f64>,
}

const EVAL_CHUNK: usize = 4096;

impl<T: Scalar> Model<T> {
    /// Deterministic He-uniform initialization.
    ///
    /// Heads start near a camera-facing normal, a darkish albedo and small
    /// positive specular weights so that no ReLU output starts dead.
    pub fn init(arch: &ArchConfig, channels: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let coord = PositionalEncoder::new(2, arch.coord_levels);

        let mut brdf_bias = vec![0.3; channels];
        brdf_bias.extend(std::iter::repeat_n(0.1, arch.k));
        let surface_spec = MlpSpec {
            input_dim: coord.output_dim() + 2 * channels,
            width: arch.surface_width,
            layers: arch.surface_layers,
            skip_after: Some(arch.skip_after).filter(|&s| s > 0 && s < arch.surface_layers),
            heads: vec![
                HeadSpec { name: "normal", after_layer: arch.normal_layer, dim: 3, weight_gain: 0.1, bias_init: vec![0.0, 0.0, -1.0] },
                HeadSpec { name: "brdf", after_layer: arch.surface_layers, dim: channels + arch.k, weight_gain: 0.1, bias_init: brdf_bias },
            ],
        };
        let surface = SurfaceNet { mlp: Mlp::build(surface_spec, "surface", &mut store, &mut rng)?, encoder: coord, channels, k: arch.k };

        let basis_in = PositionalEncoder::new(2, arch.basis_levels);
        let basis_spec = MlpSpec {
            input_dim: basis_in.output_dim(),
            width: arch.basis_width,
            layers: arch.basis_layers,
            skip_after: None,
            heads: vec![HeadSpec { name: "basis", after_layer: arch.basis_layers, dim: arch.k, weight_gain: 0.5, bias_init: vec![0.1; arch.k] }],
        };
        let basis = BasisNet { mlp: Mlp::build(basis_spec, "basis", &mut store, &mut rng)?, levels: arch.basis_levels };

        let depth_spec = MlpSpec {
            input_dim: coord.output_dim(),
            width: arch.depth_width,
            layers: arch.depth_layers,
            skip_after: Some(arch.skip_after).filter(|&s| s > 0 && s < arch.depth_layers),
            heads: vec![HeadSpec { name: "depth", after_layer: arch.depth_layers, dim: 1, weight_gain: 0.1, bias_init: vec![0.0] }],
        };
        let depth = DepthNet { mlp: Mlp::build(depth_spec, "depth", &mut store, &mut rng)?, encoder: coord };

        Ok(Model { arch: arch.clone(), store, surface, basis, depth })
    }

    pub fn channels(&self) -> usize {
        self.surface.channels
    }

    /// Same networks with parameters converted to another precision.
    pub fn cast<U: Scalar>(&self) -> Model<U> {
        Model {
            arch: self.arch.clone(),
            store: self.store.cast(),
            surface: self.surface.clone(),
            basis: self.basis.clone(),
            depth: self.depth.clone(),
        }
    }

    pub fn eval_surface(&self, coords: &[[f64; 2]], color_stats: &[f64]) -> Result<SurfaceEval> {
        let mut out = SurfaceEval::default();
        for chunk in coords.chunks(EVAL_CHUNK) {
            let mut tape = Tape::new();
            let bound = self.store.bind_frozen(&mut tape);
            let input = self.surface.input(&mut tape, chunk, color_stats)?;
            let s = self.surface.forward(&mut tape, &bound, input)?;
            out.normals.extend(tape.value(s.normal).chunks(3).map(|n| [n[0].widen(), n[1].widen(), n[2].widen()]));
            out.albedo.extend(tape.value(s.albedo).iter().map(|v| v.widen()));
            out.coeffs.extend(tape.value(s.coeffs).iter().map(|v| v.widen()));
        }
        Ok(out)
    }

    /// Basis responses for `(n·h, v·h)` pairs, row-major `[N, k]`.
    pub fn eval_basis(&self, pairs: &[(f64, f64)]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(pairs.len() * self.arch.k);
        for chunk in pairs.chunks(EVAL_CHUNK) {
            let mut tape = Tape::new();
            let bound = self.store.bind_frozen(&mut tape);
            let nh: Vec<f64> = chunk.iter().map(|p| p.0).collect();
            let vh: Vec<f64> = chunk.iter().map(|p| p.1).collect();
            let nh = tape.constant_f64([chunk.len(), 1], &nh)?;
            let vh = tape.constant_f64([chunk.len(), 1], &vh)?;
            let b = self.basis.forward(&mut tape, &bound, nh, vh)?;
            out.extend(tape.value(b).iter().map(|v| v.widen()));
        }
        Ok(out)
    }

    pub fn eval_depth(&self, coords: &[[f64; 2]]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(coords.len());
        for chunk in coords.chunks(EVAL_CHUNK) {
            let mut tape = Tape::new();
            let bound = self.store.bind_frozen(&mut tape);
            let input = self.depth.input(&mut tape, chunk)?;
            let z = self.depth.forward(&mut tape, &bound, input)?;
            out.extend(tape.value(z).iter().map(|v| v.widen()));
        }
        Ok(out)
    }
}

/// Initializes the parameters of all three networks.
pub fn init_params<T: Scalar>(arch: &ArchConfig, channels: usize, seed: u64) -> Result<ParamStore<T>> {
    Ok(Model::<T>::init(arch, channels, seed)?.store)
}
