use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Scalar, Tape, Var};
use crate::scene::PixelGrid;
use crate::{Error, Result};

/// Loss terms of one iteration; `total = rec + geo + beta * tv` with the
/// beta in effect at that iteration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub iteration: usize,
    pub rec: f64,
    pub geo: f64,
    pub tv: f64,
    pub total: f64,
}

pub fn history_csv(history: &[LossReport]) -> String {
    let mut out = String::from("iteration,rec,geo,tv,total\n");
    for r in history {
        let _ = writeln!(out, "{},{},{},{},{}", r.iteration, r.rec, r.geo, r.tv, r.total);
    }
    out
}

pub fn write_history(history: &[LossReport], path: &Path) -> Result<()> {
    fs::write(path, history_csv(history)).map_err(Error::io(path))
}

fn weights<T: Scalar>(tape: &mut Tape<T>, mask: &[bool]) -> Result<(Var, usize)> {
    let w: Vec<f64> = mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect();
    Ok((tape.constant_f64([mask.len(), 1], &w)?, mask.iter().filter(|&&m| m).count()))
}

/// Mean absolute difference over the rows of `[R, C]` tensors whose `mask`
/// entry is set.
pub fn loss_rec<T: Scalar>(tape: &mut Tape<T>, pred: Var, obs: Var, mask: &[bool]) -> Result<Var> {
    let cols = *tape.shape(pred).last().unwrap_or(&1);
    let (w, count) = weights(tape, mask)?;
    if count == 0 {
        return Err(Error::Invalid("reconstruction loss over an empty mask".into()));
    }
    let d = tape.sub(pred, obs)?;
    let d = tape.abs(d)?;
    let d = tape.mul(d, w)?;
    let s = tape.sum(d)?;
    Ok(tape.scale(s, 1.0 / (count * cols) as f64)?)
}

/// Pixels with a depth difference available along both axes.
pub fn geo_pixels(grid: &PixelGrid) -> Vec<bool> {
    let (sx, sy) = (grid.stencil(0), grid.stencil(1));
    sx.inv_span.iter().zip(&sy.inv_span).map(|(a, b)| *a > 0.0 && *b > 0.0).collect()
}

/// Mean of `1 - n·g` where `g = normalize(z_x, z_y, -1)` is the normal of the
/// depth field `depth` (`[N, 1]`, normalized units) over the masked pixels of
/// `grid`; `normals` is `[N, 3]`.
pub fn loss_geo<T: Scalar>(tape: &mut Tape<T>, normals: Var, depth: Var, grid: &PixelGrid) -> Result<Var> {
    let n = grid.len();
    let mut grads = Vec::with_capacity(2);
    for axis in 0..2 {
        let st = grid.stencil(axis);
        let hi = tape.gather_rows(depth, st.plus)?;
        let lo = tape.gather_rows(depth, st.minus)?;
        let d = tape.sub(hi, lo)?;
        let inv = tape.constant_f64([n, 1], &st.inv_span)?;
        grads.push(tape.mul(d, inv)?);
    }
    let (w, count) = weights(tape, &geo_pixels(grid))?;
    if count == 0 {
        return Err(Error::Invalid("no pixel has depth neighbours along both axes".into()));
    }
    let minus_one = tape.constant_f64([n, 1], &vec![-1.0; n])?;
    let g = tape.concat(&[grads[0], grads[1], minus_one])?;
    let g = tape.l2_normalize(g)?;
    let d = tape.dot(normals, g)?;
    let d = tape.mul(d, w)?;
    let s = tape.sum(d)?;
    let m = tape.scale(s, -1.0 / count as f64)?;
    Ok(tape.add_scalar(m, 1.0)?)
}

/// Absolute differences of `albedo` and `coeffs` plus squared differences of
/// `normals` across right and down neighbour pairs, summed over components
/// and averaged over pairs. Zero when no pair exists.
pub fn loss_tv<T: Scalar>(tape: &mut Tape<T>, albedo: Var, coeffs: Var, normals: Var, grid: &PixelGrid) -> Result<Var> {
    let (a, b) = grid.neighbor_pairs();
    if a.is_empty() {
        return Ok(tape.constant_f64([], &[0.0])?);
    }
    let pairs = a.len();
    let mut terms = Vec::with_capacity(3);
    for (field, squared) in [(albedo, false), (coeffs, false), (normals, true)] {
        let x = tape.gather_rows(field, a.clone())?;
        let y = tape.gather_rows(field, b.clone())?;
        let d = tape.sub(x, y)?;
        let d = if squared { tape.square(d)? } else { tape.abs(d)? };
        terms.push(tape.sum(d)?);
    }
    let s = tape.add(terms[0], terms[1])?;
    let s = tape.add(s, terms[2])?;
    Ok(tape.scale(s, 1.0 / pairs as f64)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn value(tape: &Tape<f64>, v: Var) -> f64 {
        tape.scalar_value(v)
    }

    #[test]
    fn rec_trivial_cases() {
        let mut t = Tape::<f64>::new();
        let p = t.constant_f64([2, 3], &[0.1, 0.2, 0.3, 0.4, 0.5, 0.6]).unwrap();
        let o = t.constant_f64([2, 3], &[0.2, 0.3, 0.4, 0.5, 0.6, 0.7]).unwrap();
        let same = loss_rec(&mut t, p, p, &[true, true]).unwrap();
        assert_eq!(value(&t, same), 0.0);
        let off = loss_rec(&mut t, o, p, &[true, true]).unwrap();
        assert!((value(&t, off) - 0.1).abs() < 1e-12);
        assert!(loss_rec(&mut t, o, p, &[false, false]).is_err());
    }

    #[test]
    fn rec_matches_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (rows, cols) = (17, 3);
        let a: Vec<f64> = (0..rows * cols).map(|_| rng.gen()).collect();
        let b: Vec<f64> = (0..rows * cols).map(|_| rng.gen()).collect();
        let mask: Vec<bool> = (0..rows).map(|_| rng.gen_bool(0.6)).collect();
        let mut want = 0.0;
        let mut count = 0;
        for r in (0..rows).filter(|&r| mask[r]) {
            for c in 0..cols {
                want += (a[r * cols + c] - b[r * cols + c]).abs();
                count += 1;
            }
        }
        let mut t = Tape::<f64>::new();
        let (pa, pb) = (t.constant_f64([rows, cols], &a).unwrap(), t.constant_f64([rows, cols], &b).unwrap());
        let l = loss_rec(&mut t, pa, pb, &mask).unwrap();
        assert!((value(&t, l) - want / count as f64).abs() < 1e-12);
    }

    fn normals_tensor(t: &mut Tape<f64>, n: &[[f64; 3]]) -> Var {
        t.constant_f64([n.len(), 3], &n.concat()).unwrap()
    }

    #[test]
    fn geo_trivial_cases() {
        let grid = PixelGrid::from_mask(4, 3, &[true; 12]);
        let mut t = Tape::<f64>::new();
        let z = t.constant_f64([12, 1], &[0.7; 12]).unwrap();
        let facing = normals_tensor(&mut t, &[[0.0, 0.0, -1.0]; 12]);
        let l = loss_geo(&mut t, facing, z, &grid).unwrap();
        assert_eq!(value(&t, l), 0.0);
        let side = normals_tensor(&mut t, &[[1.0, 0.0, 0.0]; 12]);
        let l = loss_geo(&mut t, side, z, &grid).unwrap();
        assert_eq!(value(&t, l), 1.0);
    }

    #[test]
    fn geo_tilted_plane_matches_analytic_normal() {
        let grid = PixelGrid::from_mask(6, 5, &[true; 30]);
        let coords = grid.coords();
        let mut t = Tape::<f64>::new();
        let z: Vec<f64> = coords.iter().map(|c| 0.2 * c[0]).collect();
        let z = t.constant_f64([30, 1], &z).unwrap();
        let r = (1.0f64 + 0.04).sqrt();
        let g = [0.2 / r, 0.0, -1.0 / r];
        let n = normals_tensor(&mut t, &vec![g; 30]);
        let l = loss_geo(&mut t, n, z, &grid).unwrap();
        // every per-pixel dot exceeds 1 - 1e-6, so the mean loss stays below 1e-6
        assert!(value(&t, l) < 1e-6);
        assert!(value(&t, l) >= -1e-12);
    }

    #[test]
    fn geo_skips_isolated_pixels() {
        // a single row has no vertical neighbours at all
        let grid = PixelGrid::from_mask(4, 1, &[true; 4]);
        let mut t = Tape::<f64>::new();
        let z = t.constant_f64([4, 1], &[0.0; 4]).unwrap();
        let n = normals_tensor(&mut t, &[[0.0, 0.0, -1.0]; 4]);
        assert!(loss_geo(&mut t, n, z, &grid).is_err());
        let mask = [true, true, false, true, true, true];
        let grid = PixelGrid::from_mask(3, 2, &mask);
        assert_eq!(geo_pixels(&grid), vec![true, true, true, true, false]);
    }

    #[test]
    fn tv_trivial_cases() {
        let grid = PixelGrid::from_mask(2, 1, &[true; 2]);
        let mut t = Tape::<f64>::new();
        let rho = t.constant_f64([2, 1], &[0.0, 1.0]).unwrap();
        let c = t.constant_f64([2, 2], &[0.3, 0.1, 0.3, 0.1]).unwrap();
        let n = normals_tensor(&mut t, &[[0.0, 0.0, -1.0]; 2]);
        let l = loss_tv(&mut t, rho, c, n, &grid).unwrap();
        assert_eq!(value(&t, l), 1.0);
        let flat = t.constant_f64([2, 1], &[0.4, 0.4]).unwrap();
        let l = loss_tv(&mut t, flat, c, n, &grid).unwrap();
        assert_eq!(value(&t, l), 0.0);
    }

    #[test]
    fn tv_matches_neighbour_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (w, h) = (5, 4);
        let mask: Vec<bool> = (0..w * h).map(|_| rng.gen_bool(0.8)).collect();
        let grid = PixelGrid::from_mask(w, h, &mask);
        let n = grid.len();
        let rho: Vec<f64> = (0..n * 3).map(|_| rng.gen()).collect();
        let c: Vec<f64> = (0..n * 2).map(|_| rng.gen()).collect();
        let nm: Vec<f64> = (0..n * 3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut sum = 0.0;
        let mut pairs = 0;
        for r in 0..h {
            for col in 0..w {
                let Some(i) = grid.index_of(r, col) else { continue };
                for j in [grid.index_of(r, col + 1), grid.index_of(r + 1, col)].into_iter().flatten() {
                    pairs += 1;
                    sum += (0..3).map(|k| (rho[i * 3 + k] - rho[j * 3 + k]).abs()).sum::<f64>();
                    sum += (0..2).map(|k| (c[i * 2 + k] - c[j * 2 + k]).abs()).sum::<f64>();
                    sum += (0..3).map(|k| (nm[i * 3 + k] - nm[j * 3 + k]).powi(2)).sum::<f64>();
                }
            }
        }
        let mut t = Tape::<f64>::new();
        let (a, b, m) = (
            t.constant_f64([n, 3], &rho).unwrap(),
            t.constant_f64([n, 2], &c).unwrap(),
            t.constant_f64([n, 3], &nm).unwrap(),
        );
        let l = loss_tv(&mut t, a, b, m, &grid).unwrap();
        assert!((value(&t, l) - sum / pairs as f64).abs() < 1e-12);
    }

    #[test]
    fn csv_header() {
        let r = LossReport { iteration: 3, rec: 0.5, geo: 0.25, tv: 1.0, total: 0.76 };
        assert_eq!(history_csv(&[r]), "iteration,rec,geo,tv,total\n3,0.5,0.25,1,0.76\n");
    }
}
