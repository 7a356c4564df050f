use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use neuralps::eval::{mae, psnr, render_brdf_sphere, Ablation, Metrics, PsnrReport};
use neuralps::nn::{ArchConfig, Model};
use neuralps::render::Light;
use neuralps::scene::{
    export_maps, load_dataset_with, load_normal_gt, make_composite_scene, make_sphere_scene, make_step_scene, read_f32_grid, read_png,
    save_synthetic, write_png16, LoadOptions, Material,
};
use neuralps::train::{fit, write_history, FitConfig};
use neuralps::Error;
use serde_json::json;

#[derive(Parser)]
#[command(name = "neuralps", version, about = "Self-supervised neural photometric stereo")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a dataset directory and export the recovered maps.
    Fit {
        dataset: PathBuf,
        /// TOML file of fit settings.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "neuralps_out")]
        out: PathBuf,
        #[arg(long, value_parser = parse_ablation)]
        ablate: Option<Ablation>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        iterations: Option<usize>,
    },
    /// Write a synthetic dataset with ground truth.
    Synth {
        kind: SceneKind,
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[arg(long, default_value_t = 16)]
        lights: usize,
        #[arg(long, value_enum, default_value_t = MaterialArg::Lambertian)]
        material: MaterialArg,
        /// Block height in pixels (step scene).
        #[arg(long, default_value_t = 8.0)]
        block_height: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "neuralps_synth")]
        out: PathBuf,
    },
    /// Score fitted maps against a dataset with ground-truth normals.
    Eval { est_dir: PathBuf, gt_dir: PathBuf },
    /// Render the material of one fitted pixel on a sphere.
    Sphere {
        est_dir: PathBuf,
        /// Column and row of the pixel.
        #[arg(long, value_parser = parse_pixel)]
        pixel: (usize, usize),
        /// Light direction, y up and z toward the camera.
        #[arg(long, value_parser = parse_light, allow_hyphen_values = true)]
        light: [f64; 3],
        #[arg(long, default_value_t = 128)]
        resolution: usize,
        /// Scale the image to a maximum of 1.
        #[arg(long)]
        normalize: bool,
        /// Output PNG; defaults to `sphere_X_Y.png` in the estimate directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SceneKind {
    Sphere,
    Step,
    Composite,
}

#[derive(Clone, Copy, ValueEnum)]
enum MaterialArg {
    Lambertian,
    Specular,
}

fn parse_ablation(s: &str) -> Result<Ablation, String> {
    match s.parse::<Ablation>() {
        Ok(Ablation::Full) | Err(_) => Err(format!("expected shadow, tv or specular, got `{s}`")),
        Ok(a) => Ok(a),
    }
}

fn parse_list(s: &str, n: usize) -> Result<Vec<f64>, String> {
    let v: Vec<f64> = s.split(',').map(|t| t.trim().parse::<f64>()).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
    if v.len() != n || v.iter().any(|x| !x.is_finite()) {
        return Err(format!("expected {n} comma-separated numbers, got `{s}`"));
    }
    Ok(v)
}

fn parse_pixel(s: &str) -> Result<(usize, usize), String> {
    let v = parse_list(s, 2)?;
    if v.iter().any(|x| *x < 0.0 || x.fract() != 0.0) {
        return Err(format!("pixel coordinates must be non-negative integers, got `{s}`"));
    }
    Ok((v[0] as usize, v[1] as usize))
}

fn parse_light(s: &str) -> Result<[f64; 3], String> {
    let v = parse_list(s, 3)?;
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    if n == 0.0 {
        return Err("light direction must be non-zero".into());
    }
    Ok([v[0] / n, v[1] / n, v[2] / n])
}

/// Failure with the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::NonFiniteLoss { .. } | Error::Autodiff(_) => 1,
            _ => 2,
        };
        Failure { code, message: e.to_string() }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure { code: 2, message: message.into() }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let text = e.to_string();
            eprintln!("{}", text.lines().next().unwrap_or("invalid arguments"));
            return ExitCode::from(2);
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message.lines().next().unwrap_or_default());
            ExitCode::from(f.code)
        }
    }
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Fit { dataset, config, out, ablate, seed, iterations } => {
            let mut cfg = match &config {
                Some(path) => FitConfig::load(path)?,
                None => FitConfig::default(),
            };
            if let Some(a) = ablate {
                cfg = a.apply(&cfg);
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(n) = iterations {
                cfg.iterations = n;
            }
            cfg.validate()?;
            cmd_fit(&dataset, &cfg, &out)
        }
        Command::Synth { kind, size, lights, material, block_height, seed, out } => {
            let material = match material {
                MaterialArg::Lambertian => Material::Lambertian,
                MaterialArg::Specular => Material::SPECULAR,
            };
            let scene = match kind {
                SceneKind::Sphere => make_sphere_scene(size, size, lights, material, seed)?,
                SceneKind::Step => make_step_scene(size, size, block_height, lights)?,
                SceneKind::Composite => make_composite_scene(size, size, lights, material, seed)?,
            };
            save_synthetic(&scene, &out)?;
            log::info!("wrote {} images to {}", scene.lights.len(), out.display());
            Ok(())
        }
        Command::Eval { est_dir, gt_dir } => cmd_eval(&est_dir, &gt_dir),
        Command::Sphere { est_dir, pixel, light, resolution, normalize, out } => {
            cmd_sphere(&est_dir, pixel, light, resolution, normalize, out)
        }
    }
}

fn cmd_fit(dataset: &Path, cfg: &FitConfig, out: &Path) -> Result<(), Failure> {
    let stack = load_dataset_with(dataset, &LoadOptions { inverse_gamma: cfg.inverse_gamma, grayscale: false })?;
    log::info!("{}: {} images of {}x{}", dataset.display(), stack.len(), stack.width, stack.height);
    let result = fit(&stack, cfg)?;
    let mae_deg = match load_normal_gt(dataset)? {
        Some((w, h, gt)) if (w, h) == (stack.width, stack.height) => Some(mae(&result.estimate.normals, &gt, &stack.mask)?),
        Some(_) => return Err(usage("normal_gt size differs from the images")),
        None => None,
    };
    let metrics = Metrics {
        mae_deg,
        psnr_db: result.psnr.clone(),
        runtime_s: result.runtime_s,
        config_echo: json!({ "dataset": dataset.display().to_string(), "config": cfg }),
    };
    export_maps(&result.estimate, &metrics, out)?;
    write_history(&result.history, &out.join("loss_history.csv"))?;
    let meta = json!({ "arch": cfg.arch, "channels": stack.channels, "color_stats": result.color_stats });
    result.model.store.save_checkpoint(out, "params", meta)?;
    println!("{}", serde_json::to_string_pretty(&metrics.to_json()).expect("plain data"));
    Ok(())
}

fn read_names(path: &Path) -> Result<Vec<String>, Failure> {
    let text = fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    Ok(text.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect())
}

fn cmd_eval(est_dir: &Path, gt_dir: &Path) -> Result<(), Failure> {
    let (w, h, c, est) = read_f32_grid(est_dir, "normal")?;
    if c != 3 {
        return Err(usage("estimated normal map must have 3 channels"));
    }
    let (gw, gh, gt) = load_normal_gt(gt_dir)?.ok_or_else(|| usage(format!("{}: no normal_gt.f32 or normal_gt.png", gt_dir.display())))?;
    if (gw, gh) != (w, h) {
        return Err(usage(format!("estimate is {w}x{h}, ground truth is {gw}x{gh}")));
    }
    // both maps are compared in the dataset frame; flipping both is an isometry
    let est: Vec<[f64; 3]> = est.chunks(3).map(|n| [n[0], n[1], n[2]]).collect();
    let gt: Vec<[f64; 3]> = gt.iter().map(|&n| neuralps::render::flip_frame(n)).collect();
    let mask = if gt_dir.join("mask.png").exists() {
        let (mw, mh, mc, m) = read_png(&gt_dir.join("mask.png"))?;
        if (mw, mh) != (w, h) {
            return Err(usage("mask size differs from the normal maps"));
        }
        m.chunks(mc).map(|px| px.iter().any(|&v| v > 0.0)).collect()
    } else {
        gt.iter().map(|n| n.iter().any(|&v| v != 0.0)).collect::<Vec<bool>>()
    };
    let mae_deg = mae(&est, &gt, &mask)?;

    let mut per_image = Vec::new();
    let names_path = est_dir.join("rerender_names.txt");
    if gt_dir.join("light_directions.txt").exists() && names_path.exists() {
        let stack = load_dataset_with(gt_dir, &LoadOptions::default())?;
        for (i, name) in read_names(&names_path)?.iter().enumerate() {
            let Some(j) = stack.names.iter().position(|n| n == name) else {
                return Err(usage(format!("re-rendered image `{name}` is not in {}", gt_dir.display())));
            };
            let (_, _, rc, img) = read_png(&est_dir.join(format!("rerender_{i:02}.png")))?;
            let observed = if rc == stack.channels { stack.image(j).to_vec() } else { stack.to_grayscale().image(j).to_vec() };
            per_image.push(psnr(&img, &observed, &stack.mask, rc)?);
        }
    }
    let metrics = Metrics {
        mae_deg: Some(mae_deg),
        psnr_db: PsnrReport::new(per_image),
        runtime_s: 0.0,
        config_echo: json!({ "est_dir": est_dir.display().to_string(), "gt_dir": gt_dir.display().to_string() }),
    };
    println!("{}", serde_json::to_string_pretty(&metrics.to_json()).expect("plain data"));
    Ok(())
}

fn cmd_sphere(
    est_dir: &Path,
    (x, y): (usize, usize),
    light: [f64; 3],
    resolution: usize,
    normalize: bool,
    out: Option<PathBuf>,
) -> Result<(), Failure> {
    let (w, h, c, albedo) = read_f32_grid(est_dir, "albedo")?;
    let (_, _, k, coeffs) = read_f32_grid(est_dir, "coeffs")?;
    if x >= w || y >= h {
        return Err(usage(format!("pixel {x},{y} lies outside the {w}x{h} image")));
    }
    let (_, _, mc, mask) = read_png(&est_dir.join("mask.png"))?;
    if mask[(y * w + x) * mc] == 0.0 {
        return Err(usage(format!("pixel {x},{y} lies outside the mask")));
    }
    let json = est_dir.join("params.json");
    let index: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&json).map_err(|e| usage(format!("{}: {e}", json.display())))?).map_err(Error::from)?;
    let arch: ArchConfig = serde_json::from_value(index["meta"]["arch"].clone()).map_err(Error::from)?;
    let channels = index["meta"]["channels"].as_u64().ok_or_else(|| usage("params.json lacks the channel count"))? as usize;
    if channels != c || arch.k != k {
        return Err(usage("checkpoint does not match the exported maps"));
    }
    let mut model = Model::<f32>::init(&arch, channels, 0)?;
    model.store.load_checkpoint(est_dir, "params")?;
    let p = y * w + x;
    let light = Light::from_dataset(light, vec![1.0])?;
    let img = render_brdf_sphere(&albedo[p * c..(p + 1) * c], &coeffs[p * k..(p + 1) * k], |q| model.eval_basis(q), &light, resolution, normalize)?;
    let out = out.unwrap_or_else(|| est_dir.join(format!("sphere_{x}_{y}.png")));
    write_png16(&out, resolution, resolution, c, &img)?;
    log::info!("wrote {}", out.display());
    Ok(())
}
