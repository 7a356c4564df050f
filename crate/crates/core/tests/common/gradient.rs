//! Central finite-difference gradient checks, shared by the unit-style
//! gradient tests and the acceptance harness.

#![allow(dead_code)]

use std::sync::Arc;

use neuralps::autodiff::{Tape, Tensor, Var};
use neuralps::nn::{ArchConfig, Model};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SEEDS: u64 = 10;
pub const STEP: f64 = 1e-6;
pub const TOL: f64 = 1e-4;
/// Networks contain ReLUs whose pre-activations may sit within a step of the kink.
pub const TOL_KINK: f64 = 1e-3;

pub type Build = dyn Fn(&mut Tape<f64>, &[Var]) -> Var;

/// Weighted sum of `out` with fixed pseudo-random weights, so every output
/// element contributes a distinct amount to the loss.
fn project(tape: &mut Tape<f64>, out: Var) -> Var {
    let shape = tape.shape(out).to_vec();
    let n: usize = shape.iter().product();
    let w: Vec<f64> = (0..n).map(|i| ((i as f64 + 1.0) * 0.731).sin() + 0.2).collect();
    let w = tape.constant(shape, w).unwrap();
    let p = tape.mul(out, w).unwrap();
    tape.sum(p).unwrap()
}

fn loss_value(build: &Build, inputs: &[Tensor<f64>]) -> f64 {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t)).collect();
    let out = build(&mut tape, &vars);
    let l = project(&mut tape, out);
    tape.scalar_value(l)
}

/// Norm-wise relative error between analytic and numeric gradients, worst over inputs.
pub fn check(build: &Build, inputs: &[Tensor<f64>]) -> f64 {
    let inputs: Vec<Tensor<f64>> = inputs.iter().map(|t| t.clone().with_grad()).collect();
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t)).collect();
    let out = build(&mut tape, &vars);
    let l = project(&mut tape, out);
    tape.backward(l).unwrap();

    let mut worst: f64 = 0.0;
    for (k, v) in vars.iter().enumerate() {
        let analytic = tape.grad(*v).unwrap();
        let mut numeric = vec![0.0; analytic.len()];
        for j in 0..analytic.len() {
            let mut plus = inputs.clone();
            plus[k].data_mut()[j] += STEP;
            let mut minus = inputs.clone();
            minus[k].data_mut()[j] -= STEP;
            numeric[j] = (loss_value(build, &plus) - loss_value(build, &minus)) / (2.0 * STEP);
        }
        worst = worst.max(rel_error(&analytic, &numeric));
    }
    worst
}

fn rel_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
    if scale < 1e-12 {
        diff
    } else {
        diff / scale
    }
}

pub fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.5..1.5)).collect()).unwrap()
}

/// Random values at least `gap` away from zero.
pub fn away_from_zero(rng: &mut ChaCha8Rng, shape: &[usize], gap: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let m = rng.gen_range(gap..1.5);
            if rng.gen_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// Rows whose two smallest entries differ by at least 0.05.
pub fn distinct_rows(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor<f64> {
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows {
        let mut row: Vec<f64> = (0..cols).map(|i| i as f64 * 0.3 + rng.gen_range(0.0..0.2)).collect();
        for i in (1..cols).rev() {
            row.swap(i, rng.gen_range(0..=i));
        }
        data.extend(row);
    }
    Tensor::new([rows, cols], data).unwrap()
}

pub fn small_arch() -> ArchConfig {
    ArchConfig {
        surface_width: 12,
        surface_layers: 5,
        normal_layer: 3,
        skip_after: 2,
        depth_width: 12,
        depth_layers: 4,
        basis_width: 8,
        basis_layers: 2,
        coord_levels: 3,
        basis_levels: 2,
        k: 3,
    }
}

/// Checks the gradient of `forward` with respect to every parameter whose
/// name starts with `prefix`, on a random subset of entries per tensor.
pub fn check_network(seed: u64, prefix: &str, forward: &dyn Fn(&Model<f64>, &mut Tape<f64>, &neuralps::nn::Bound) -> Var) -> f64 {
    let model = Model::<f64>::init(&small_arch(), 3, seed).unwrap();
    // Move off the initialization so the heads are not at their bias values.
    let mut model = model;
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
    for p in model.store.params_mut() {
        for v in p.tensor.data_mut() {
            *v += rng.gen_range(-0.05..0.05);
        }
    }

    let loss = |m: &Model<f64>| {
        let mut tape = Tape::new();
        let bound = m.store.bind(&mut tape);
        let out = forward(m, &mut tape, &bound);
        let l = project(&mut tape, out);
        tape.scalar_value(l)
    };

    let mut tape = Tape::new();
    let bound = model.store.bind(&mut tape);
    let out = forward(&model, &mut tape, &bound);
    let l = project(&mut tape, out);
    tape.backward(l).unwrap();

    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for i in 0..model.store.len() {
        if !model.store.get(i).name.starts_with(prefix) {
            continue;
        }
        checked += 1;
        let analytic = tape.grad(bound.get(i)).unwrap();
        let n = analytic.len();
        let picks: Vec<usize> = (0..n.min(8)).map(|_| rng.gen_range(0..n)).collect();
        let mut a = Vec::new();
        let mut b = Vec::new();
        for &j in &picks {
            let mut plus = model.clone();
            plus.store.params_mut()[i].tensor.data_mut()[j] += STEP;
            let mut minus = model.clone();
            minus.store.params_mut()[i].tensor.data_mut()[j] -= STEP;
            a.push(analytic[j]);
            b.push((loss(&plus) - loss(&minus)) / (2.0 * STEP));
        }
        worst = worst.max(rel_error(&a, &b));
    }
    assert!(checked > 0, "no parameters named {prefix}*");
    worst
}

pub fn coords(seed: u64) -> Vec<[f64; 2]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 7);
    (0..6).map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect()
}


pub type Make = dyn Fn(&mut ChaCha8Rng) -> Vec<Tensor<f64>>;

pub struct OpCase {
    pub name: &'static str,
    pub build: Box<Build>,
    pub make: Box<Make>,
}

fn case(name: &'static str, build: impl Fn(&mut Tape<f64>, &[Var]) -> Var + 'static, make: impl Fn(&mut ChaCha8Rng) -> Vec<Tensor<f64>> + 'static) -> OpCase {
    OpCase { name, build: Box::new(build), make: Box::new(make) }
}

/// Every tape op, with inputs kept away from kinks where the op has one.
pub fn op_cases() -> Vec<OpCase> {
    let mut cases = vec![case("matmul", |t, v| t.matmul(v[0], v[1]).unwrap(), |r| vec![random(r, &[4, 3]), random(r, &[3, 5])])];
    for shapes in [[[3, 4], [3, 4]], [[3, 4], [1, 4]], [[3, 4], [3, 1]], [[1, 4], [3, 4]]] {
        let make = move |r: &mut ChaCha8Rng| vec![random(r, &shapes[0]), random(r, &shapes[1])];
        cases.push(case("add", |t, v| t.add(v[0], v[1]).unwrap(), make));
        cases.push(case("sub", |t, v| t.sub(v[0], v[1]).unwrap(), make));
        cases.push(case("mul", |t, v| t.mul(v[0], v[1]).unwrap(), make));
    }
    let kinked = |r: &mut ChaCha8Rng| vec![away_from_zero(r, &[3, 5], 0.05)];
    cases.push(case("relu", |t, v| t.relu(v[0]).unwrap(), kinked));
    cases.push(case("max_zero", |t, v| t.max_zero(v[0]).unwrap(), kinked));
    cases.push(case("abs", |t, v| t.abs(v[0]).unwrap(), kinked));
    cases.push(case("min_reduce", |t, v| t.min_reduce(v[0]).unwrap(), |r| vec![distinct_rows(r, 4, 5)]));

    let plain = |r: &mut ChaCha8Rng| vec![random(r, &[3, 4])];
    cases.push(case("sin", |t, v| t.sin(v[0]).unwrap(), plain));
    cases.push(case("cos", |t, v| t.cos(v[0]).unwrap(), plain));
    cases.push(case("square", |t, v| t.square(v[0]).unwrap(), plain));
    cases.push(case("scale", |t, v| t.scale(v[0], -2.5).unwrap(), plain));
    cases.push(case("add_scalar", |t, v| t.add_scalar(v[0], 0.7).unwrap(), plain));
    cases.push(case("reciprocal", |t, v| t.reciprocal(v[0]).unwrap(), |r| vec![away_from_zero(r, &[3, 4], 0.3)]));
    cases.push(case("sum", |t, v| t.sum(v[0]).unwrap(), plain));
    cases.push(case("mean", |t, v| t.mean(v[0]).unwrap(), plain));
    cases.push(case("dot", |t, v| t.dot(v[0], v[1]).unwrap(), |r| vec![random(r, &[5, 3]), random(r, &[5, 3])]));
    cases.push(case("l2_normalize", |t, v| t.l2_normalize(v[0]).unwrap(), |r| vec![away_from_zero(r, &[6, 3], 0.2)]));

    cases.push(case("concat", |t, v| t.concat(&[v[0], v[1], v[2]]).unwrap(), |r| {
        vec![random(r, &[3, 2]), random(r, &[3, 1]), random(r, &[3, 4])]
    }));
    cases.push(case("reshape", |t, v| t.reshape(v[0], [6, 2]).unwrap(), plain));
    cases.push(case("slice_cols", |t, v| t.slice_cols(v[0], 1, 4).unwrap(), |r| vec![random(r, &[3, 5])]));
    let idx: Arc<[usize]> = Arc::from(vec![2, 0, 2, 3, 1]);
    cases.push(case("gather_rows", move |t, v| t.gather_rows(v[0], idx.clone()).unwrap(), |r| vec![random(r, &[4, 3])]));
    cases.push(case("repeat_rows", |t, v| t.repeat_rows(v[0], 3).unwrap(), |r| vec![random(r, &[4, 2])]));
    cases.push(case("pos_encode", |t, v| t.pos_encode(v[0], 3).unwrap(), |r| vec![random(r, &[4, 2])]));
    cases
}

pub fn op_error(case: &OpCase, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inputs = (case.make)(&mut rng);
    check(&*case.build, &inputs)
}

pub const NETWORKS: [&str; 4] = ["surface", "basis", "basis input", "depth"];

/// Worst relative error of the named network check for one seed.
pub fn network_error(name: &str, seed: u64) -> f64 {
    match name {
        "surface" => {
            let pts = coords(seed);
            check_network(seed, "surface", &|m, t, b| {
                let input = m.surface.input(t, &pts, &[0.4, 0.3, 0.2, 0.1, 0.1, 0.05]).unwrap();
                let s = m.surface.forward(t, b, input).unwrap();
                t.concat(&[s.normal, s.albedo, s.coeffs]).unwrap()
            })
        }
        "basis" => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 11);
            let nh: Vec<f64> = (0..6).map(|_| rng.gen_range(0.0..1.0)).collect();
            let vh: Vec<f64> = (0..6).map(|_| rng.gen_range(0.0..1.0)).collect();
            check_network(seed, "basis", &|m, t, b| {
                let nh = t.constant_f64([6, 1], &nh).unwrap();
                let vh = t.constant_f64([6, 1], &vh).unwrap();
                m.basis.forward(t, b, nh, vh).unwrap()
            })
        }
        // The basis sees the cosines computed from the predicted normal, so the
        // gradient must also flow into its inputs.
        "basis input" => {
            let model = Model::<f64>::init(&small_arch(), 3, seed).unwrap();
            let build = move |t: &mut Tape<f64>, v: &[Var]| {
                let bound = model.store.bind_frozen(t);
                model.basis.forward(t, &bound, v[0], v[1]).unwrap()
            };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let nh = Tensor::new([6, 1], (0..6).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap();
            let vh = Tensor::new([6, 1], (0..6).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap();
            check(&build, &[nh, vh])
        }
        "depth" => {
            let pts = coords(seed);
            check_network(seed, "depth", &|m, t, b| {
                let input = m.depth.input(t, &pts).unwrap();
                m.depth.forward(t, b, input).unwrap()
            })
        }
        _ => panic!("unknown network {name}"),
    }
}
