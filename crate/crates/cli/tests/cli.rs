use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const SMALL: &str = "iterations = 6
batch_size = 4
surface_width = 16
surface_layers = 3
normal_layer = 2
skip_after = 1
depth_width = 16
depth_layers = 2
basis_width = 8
basis_layers = 2
coord_levels = 2
basis_levels = 1
k = 2
";

fn neuralps(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_neuralps")).args(args).output().expect("binary runs")
}

fn ok(out: Output) -> String {
    assert!(out.status.success(), "exit {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn synth(dir: &Path, kind: &str) {
    ok(neuralps(&["synth", kind, "--size", "16", "--lights", "4", "--out", dir.to_str().unwrap()]));
}

fn fit_small(data: &Path, out: &Path, extra: &[&str]) -> Value {
    let cfg = out.with_extension("toml");
    fs::write(&cfg, SMALL).unwrap();
    let mut args = vec!["fit", data.to_str().unwrap(), "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    serde_json::from_str(&ok(neuralps(&args))).unwrap()
}

#[test]
fn synth_fit_eval_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let (data, est) = (tmp.path().join("data"), tmp.path().join("est"));
    synth(&data, "sphere");
    assert!(data.join("light_directions.txt").exists());

    let printed = fit_small(&data, &est, &[]);
    for key in ["mae_deg", "psnr_db", "runtime_s", "config_echo"] {
        assert!(printed.get(key).is_some(), "missing {key}");
    }
    assert_eq!(printed["psnr_db"]["per_image"].as_array().unwrap().len(), 4);
    assert_eq!(printed["config_echo"]["config"]["iterations"], 6);
    let on_disk: Value = serde_json::from_str(&fs::read_to_string(est.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(on_disk["mae_deg"], printed["mae_deg"]);
    for file in ["normal.png", "normal.f32", "depth.f32", "albedo.png", "coeffs.f32", "shadow_00.png", "rerender_03.png", "loss_history.csv", "params.json"] {
        assert!(est.join(file).exists(), "missing {file}");
    }
    assert_eq!(fs::read_to_string(est.join("loss_history.csv")).unwrap().lines().count(), 7);

    let evaluated: Value = serde_json::from_str(&ok(neuralps(&["eval", est.to_str().unwrap(), data.to_str().unwrap()]))).unwrap();
    let (a, b) = (evaluated["mae_deg"].as_f64().unwrap(), printed["mae_deg"].as_f64().unwrap());
    assert!((a - b).abs() < 1e-3, "eval {a} vs fit {b}");
    assert_eq!(evaluated["psnr_db"]["per_image"].as_array().unwrap().len(), 4);
}

#[test]
fn sphere_renders_a_png() {
    let tmp = tempfile::tempdir().unwrap();
    let (data, est) = (tmp.path().join("data"), tmp.path().join("est"));
    synth(&data, "sphere");
    fit_small(&data, &est, &[]);
    let png = tmp.path().join("s.png");
    let est_s = est.to_str().unwrap();
    ok(neuralps(&["sphere", est_s, "--pixel", "8,8", "--light", "0.3,-0.2,1", "--resolution", "16", "--out", png.to_str().unwrap()]));
    assert!(png.exists());

    assert_eq!(neuralps(&["sphere", est_s, "--pixel", "0,0", "--light", "0,0,1"]).status.code(), Some(2));
    assert_eq!(neuralps(&["sphere", est_s, "--pixel", "99,1", "--light", "0,0,1"]).status.code(), Some(2));
}

#[test]
fn ablation_flag_reaches_the_config() {
    let tmp = tempfile::tempdir().unwrap();
    let (data, est) = (tmp.path().join("data"), tmp.path().join("est"));
    synth(&data, "step");
    let printed = fit_small(&data, &est, &["--ablate", "specular", "--seed", "4", "--iterations", "3"]);
    let cfg = &printed["config_echo"]["config"];
    assert_eq!(cfg["use_specular"], false);
    assert_eq!(cfg["use_shadow"], true);
    assert_eq!(cfg["seed"], 4);
    assert_eq!(cfg["iterations"], 3);
}

#[test]
fn bad_input_exits_with_code_two() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nothing");
    assert_eq!(neuralps(&["fit", missing.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(neuralps(&["fit"]).status.code(), Some(2));
    assert_eq!(neuralps(&["synth", "torus"]).status.code(), Some(2));
    assert_eq!(neuralps(&["fit", ".", "--ablate", "everything"]).status.code(), Some(2));

    let cfg = tmp.path().join("bad.toml");
    fs::write(&cfg, "iteratons = 3\n").unwrap();
    let data = tmp.path().join("data");
    synth(&data, "sphere");
    let out = neuralps(&["fit", data.to_str().unwrap(), "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("iteratons"));
}

#[test]
fn divergence_exits_with_code_one() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth(&data, "sphere");
    let cfg = tmp.path().join("hot.toml");
    fs::write(&cfg, format!("{SMALL}learning_rate = 1e30\n").replace("iterations = 6", "iterations = 40")).unwrap();
    let out = neuralps(&["fit", data.to_str().unwrap(), "--config", cfg.to_str().unwrap(), "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
}
