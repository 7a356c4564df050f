use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::loss::{loss_geo, loss_rec, loss_tv, LossReport};
use super::FitConfig;
use crate::autodiff::{Adam, AutodiffError, Tape};
use crate::eval::{psnr, PsnrReport};
use crate::nn::Model;
use crate::render::{dot3, half_vector, render_pixel, render_shadow, shadow_guidance_mask, DepthGrid, ShadowMarchConfig, VIEW};
use crate::scene::{ObservationStack, PixelGrid, SceneEstimate};
use crate::{Error, Result};

/// Everything produced by [`fit`].
#[derive(Clone, Debug)]
pub struct FitOutput {
    pub estimate: SceneEstimate,
    pub history: Vec<LossReport>,
    pub model: Model<f32>,
    /// Network input statistics of the fitted stack.
    pub color_stats: Vec<f64>,
    /// Re-rendered against observed images, over the mask.
    pub psnr: PsnrReport,
    pub runtime_s: f64,
}

/// Applies the image selection and channel settings of `cfg`.
pub fn prepare_stack(stack: &ObservationStack, cfg: &FitConfig) -> Result<ObservationStack> {
    if let Some(&i) = cfg.drop_images.iter().find(|&&i| i >= stack.len()) {
        return Err(Error::Config(format!("drop_images index {i} out of range for {} images", stack.len())));
    }
    let s = if cfg.drop_images.is_empty() { stack.clone() } else { stack.without(&cfg.drop_images)? };
    Ok(if cfg.grayscale && s.channels > 1 { s.to_grayscale() } else { s })
}

/// Per-scene constants shared by all iterations.
struct Problem<'a> {
    stack: &'a ObservationStack,
    grid: PixelGrid,
    coords: Vec<[f64; 2]>,
    stats: Vec<f64>,
    /// `[n][N][C]` observations at masked pixels.
    obs: Vec<Vec<f64>>,
    halfway: Vec<[f64; 3]>,
    /// `[n][N]`, observations kept during the guidance phase.
    guidance: Option<Vec<Vec<bool>>>,
    march: ShadowMarchConfig,
}

impl<'a> Problem<'a> {
    fn new(stack: &'a ObservationStack, cfg: &FitConfig) -> Result<Self> {
        let grid = stack.grid();
        if grid.len() < 4 {
            return Err(Error::Dataset(format!("mask has {} pixels; at least 4 are needed", grid.len())));
        }
        let hw = stack.width * stack.height;
        let obs = (0..stack.len())
            .map(|i| grid.flat_indices().iter().flat_map(|&p| stack.pixel(i, p).iter().copied()).collect())
            .collect();
        let halfway = stack.lights.iter().map(|l| half_vector(l.direction(), VIEW)).collect::<Result<_>>()?;
        let guidance = cfg.use_shadow.then(|| {
            let g = shadow_guidance_mask(stack);
            (0..stack.len()).map(|i| grid.flat_indices().iter().map(|&p| g[i * hw + p]).collect()).collect()
        });
        Ok(Problem {
            stack,
            coords: grid.coords(),
            stats: stack.color_stats(),
            grid,
            obs,
            halfway,
            guidance,
            march: ShadowMarchConfig { samples: cfg.shadow_samples, ..ShadowMarchConfig::default() },
        })
    }

    /// Ratio of pixel units to normalized units.
    fn depth_scale(&self) -> f64 {
        self.stack.width.max(self.stack.height) as f64 / 2.0
    }

    /// Shadow factors of every masked pixel for each light in `lights`
    /// (`[N][lights]` order), marching the given normalized depth.
    fn shadows(&self, depth: &[f64], lights: &[usize]) -> Vec<f64> {
        let (w, h) = (self.stack.width, self.stack.height);
        let mut values = vec![0.0; w * h];
        let mut valid = vec![false; w * h];
        for (i, &p) in self.grid.flat_indices().iter().enumerate() {
            values[p] = depth[i] * self.depth_scale();
            valid[p] = true;
        }
        let dg = DepthGrid { width: w, height: h, values, valid };
        let mut out = Vec::with_capacity(self.grid.len() * lights.len());
        for &p in self.grid.flat_indices() {
            let x = [(p % w) as f64 + 0.5, (p / w) as f64 + 0.5];
            for &l in lights {
                out.push(render_shadow(x, &self.stack.lights[l], |x, y| dg.sample(x, y), w, h, &self.march));
            }
        }
        out
    }
}

fn non_finite(iteration: usize, rec: f64, geo: f64, tv: f64) -> Error {
    Error::NonFiniteLoss { iteration, rec, geo, tv }
}

/// Fits the three networks to `stack` (lights in the internal frame) and
/// returns the recovered maps.
///
/// Deterministic for a given `cfg`, including `cfg.seed`.
pub fn fit(stack: &ObservationStack, cfg: &FitConfig) -> Result<FitOutput> {
    cfg.validate()?;
    let start = Instant::now();
    let stack = &prepare_stack(stack, cfg)?;
    if cfg.batch_size > stack.len() {
        return Err(Error::Config(format!("batch_size {} exceeds the {} available images", cfg.batch_size, stack.len())));
    }
    let prob = Problem::new(stack, cfg)?;
    let mut model = Model::<f32>::init(&cfg.arch, stack.channels, cfg.seed)?;
    let mut adam = Adam::new(cfg.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let (n_px, c, b) = (prob.grid.len(), stack.channels, cfg.batch_size);
    let rows = n_px * b;
    let mut history = Vec::with_capacity(cfg.iterations);

    for it in 0..cfg.iterations {
        let batch = rand::seq::index::sample(&mut rng, stack.len(), b).into_vec();
        let guided = cfg.in_guidance_phase(it);
        let beta = cfg.beta_at(it);

        let mut tape = Tape::<f32>::new();
        let bound = model.store.bind(&mut tape);
        let input = model.surface.input(&mut tape, &prob.coords, &prob.stats)?;
        let surf = model.surface.forward(&mut tape, &bound, input).map_err(|e| lift(e, it))?;
        let input = model.depth.input(&mut tape, &prob.coords)?;
        let z = model.depth.forward(&mut tape, &bound, input).map_err(|e| lift(e, it))?;

        // rows are pixel-major: row p * b + j pairs pixel p with image batch[j]
        let mut ldir = Vec::with_capacity(rows * 3);
        let mut obs = Vec::with_capacity(rows * c);
        let mut keep = Vec::with_capacity(rows);
        for p in 0..n_px {
            for &i in &batch {
                ldir.extend_from_slice(&stack.lights[i].direction());
                obs.extend_from_slice(&prob.obs[i][p * c..(p + 1) * c]);
                keep.push(match (&prob.guidance, guided) {
                    (Some(g), true) => g[i][p],
                    _ => true,
                });
            }
        }
        let shadow = (cfg.use_shadow && !guided).then(|| {
            let depth: Vec<f64> = tape.value(z).iter().map(|v| *v as f64).collect();
            prob.shadows(&depth, &batch)
        });

        let pred = (|| -> Result<_, AutodiffError> {
            let n = tape.repeat_rows(surf.normal, b)?;
            let l = tape.constant_f64([rows, 3], &ldir)?;
            let ndl = tape.dot(n, l)?;
            let shading = tape.max_zero(ndl)?;
            let mut refl = tape.repeat_rows(surf.albedo, b)?;
            if cfg.use_specular {
                let mut h = Vec::with_capacity(rows * 3);
                let mut vh = Vec::with_capacity(rows);
                for _ in 0..n_px {
                    for &i in &batch {
                        h.extend_from_slice(&prob.halfway[i]);
                        vh.push(dot3(VIEW, prob.halfway[i]));
                    }
                }
                let h = tape.constant_f64([rows, 3], &h)?;
                let nh = tape.dot(n, h)?;
                let vh = tape.constant_f64([rows, 1], &vh)?;
                let basis = model.basis.forward(&mut tape, &bound, nh, vh)?;
                let coeffs = tape.repeat_rows(surf.coeffs, b)?;
                let spec = tape.dot(coeffs, basis)?;
                refl = tape.add(refl, spec)?;
            }
            let mut pred = tape.mul(refl, shading)?;
            if let Some(s) = &shadow {
                let s = tape.constant_f64([rows, 1], s)?;
                pred = tape.mul(pred, s)?;
            }
            Ok(pred)
        })()
        .map_err(|e| lift(e, it))?;

        let obs = tape.constant_f64([rows, c], &obs)?;
        let rec = loss_rec(&mut tape, pred, obs, &keep).map_err(|e| lift_err(e, it))?;
        let geo = loss_geo(&mut tape, surf.normal, z, &prob.grid).map_err(|e| lift_err(e, it))?;
        let tv = loss_tv(&mut tape, surf.albedo, surf.coeffs, surf.normal, &prob.grid).map_err(|e| lift_err(e, it))?;
        let mut total = tape.add(rec, geo).map_err(|e| lift(e, it))?;
        if beta > 0.0 {
            let weighted = tape.scale(tv, beta).map_err(|e| lift(e, it))?;
            total = tape.add(total, weighted).map_err(|e| lift(e, it))?;
        }
        let report = LossReport {
            iteration: it,
            rec: tape.scalar_value(rec),
            geo: tape.scalar_value(geo),
            tv: tape.scalar_value(tv),
            total: tape.scalar_value(total),
        };
        if !report.total.is_finite() {
            return Err(non_finite(it, report.rec, report.geo, report.tv));
        }
        tape.backward(total)?;
        model.store.pull_grads(&tape, &bound)?;
        adam.step(model.store.params_mut())?;
        if it % 100 == 0 || it + 1 == cfg.iterations {
            log::info!("iteration {it}: rec {:.5} geo {:.5} tv {:.5} total {:.5}", report.rec, report.geo, report.tv, report.total);
        }
        history.push(report);
    }

    let estimate = finalize(&prob, &model, cfg)?;
    let per_image = (0..stack.len())
        .map(|i| psnr(estimate.rerender_image(i), stack.image(i), &stack.mask, c))
        .collect::<Result<Vec<_>>>()?;
    Ok(FitOutput {
        estimate,
        history,
        model,
        color_stats: prob.stats.clone(),
        psnr: PsnrReport::new(per_image),
        runtime_s: start.elapsed().as_secs_f64(),
    })
}

fn lift(e: AutodiffError, iteration: usize) -> Error {
    match e {
        AutodiffError::NonFinite { .. } => non_finite(iteration, f64::NAN, f64::NAN, f64::NAN),
        e => e.into(),
    }
}

fn lift_err(e: Error, iteration: usize) -> Error {
    match e {
        Error::Autodiff(e) => lift(e, iteration),
        e => e,
    }
}

/// Evaluates the fitted networks on every masked pixel and re-renders every image.
fn finalize(prob: &Problem<'_>, model: &Model<f32>, cfg: &FitConfig) -> Result<SceneEstimate> {
    let stack = prob.stack;
    let (w, h, c, k) = (stack.width, stack.height, stack.channels, cfg.arch.k);
    let (hw, n_px, n_img) = (w * h, prob.grid.len(), stack.len());
    let surf = model.eval_surface(&prob.coords, &prob.stats)?;
    let depth = model.eval_depth(&prob.coords)?;
    let all: Vec<usize> = (0..n_img).collect();
    let shadow = if cfg.use_shadow { prob.shadows(&depth, &all) } else { vec![1.0; n_px * n_img] };
    let basis = if cfg.use_specular {
        let pairs: Vec<(f64, f64)> = surf
            .normals
            .iter()
            .flat_map(|&n| prob.halfway.iter().map(move |&hv| (dot3(n, hv), dot3(VIEW, hv))))
            .collect();
        model.eval_basis(&pairs)?
    } else {
        Vec::new()
    };
    let coeffs: Vec<f64> = if cfg.use_specular { surf.coeffs.clone() } else { vec![0.0; n_px * k] };

    let mut est = SceneEstimate {
        width: w,
        height: h,
        channels: c,
        k,
        mask: stack.mask.clone(),
        normals: vec![[0.0; 3]; hw],
        albedo: vec![0.0; hw * c],
        coeffs: vec![0.0; hw * k],
        depth: vec![0.0; hw],
        shadows: vec![0.0; n_img * hw],
        specular: vec![0.0; n_img * hw],
        rerender: vec![0.0; n_img * hw * c],
        names: stack.names.clone(),
    };
    let zero_basis = vec![0.0; k];
    for (j, &p) in prob.grid.flat_indices().iter().enumerate() {
        let n = surf.normals[j];
        let rho = &surf.albedo[j * c..(j + 1) * c];
        let cj = &coeffs[j * k..(j + 1) * k];
        est.normals[p] = n;
        est.albedo[p * c..(p + 1) * c].copy_from_slice(rho);
        est.coeffs[p * k..(p + 1) * k].copy_from_slice(cj);
        est.depth[p] = depth[j] * prob.depth_scale();
        for (i, light) in stack.lights.iter().enumerate() {
            let s = shadow[j * n_img + i];
            let d = if cfg.use_specular { &basis[(j * n_img + i) * k..(j * n_img + i + 1) * k] } else { &zero_basis[..] };
            let spec: f64 = cj.iter().zip(d).map(|(a, b)| a * b).sum();
            est.shadows[i * hw + p] = s;
            est.specular[i * hw + p] = s * spec * dot3(n, light.direction()).max(0.0);
            let px = render_pixel(n, rho, cj, d, light, s);
            est.rerender[(i * hw + p) * c..(i * hw + p + 1) * c].copy_from_slice(&px);
        }
    }
    Ok(est)
}
