use crate::render::{dot3, half_vector, Light, VIEW};
use crate::Result;

/// Inscribed-disk mask of a `resolution²` image.
pub fn sphere_mask(resolution: usize) -> Vec<bool> {
    (0..resolution * resolution).map(|p| sphere_normal(p, resolution).is_some()).collect()
}

/// Camera-facing unit-sphere normal seen at flat pixel `p`, if on the disk.
pub fn sphere_normal(p: usize, resolution: usize) -> Option<[f64; 3]> {
    let r = resolution as f64;
    let u = 2.0 * ((p % resolution) as f64 + 0.5) / r - 1.0;
    let v = 2.0 * ((p / resolution) as f64 + 0.5) / r - 1.0;
    let q = 1.0 - u * u - v * v;
    (q > 0.0).then(|| [u, v, -q.sqrt()])
}

/// Shades a unit sphere with one material point: albedo `rho_d`, basis
/// weights `c` and a basis evaluated by `basis` on `(n·h, v·h)` pairs
/// (row-major `[pairs, k]` result). Returns `[res][res][channels]`; pixels off
/// the disk are zero. With `normalize`, the image is scaled to a maximum of 1.
pub fn render_brdf_sphere(
    rho_d: &[f64],
    c: &[f64],
    basis: impl Fn(&[(f64, f64)]) -> Result<Vec<f64>>,
    light: &Light,
    resolution: usize,
    normalize: bool,
) -> Result<Vec<f64>> {
    let l = light.direction();
    let h = half_vector(l, VIEW)?;
    let vh = dot3(VIEW, h);
    let normals: Vec<Option<[f64; 3]>> = (0..resolution * resolution).map(|p| sphere_normal(p, resolution)).collect();
    let pairs: Vec<(f64, f64)> = normals.iter().flatten().map(|&n| (dot3(n, h), vh)).collect();
    let k = c.len();
    let responses = if k == 0 { Vec::new() } else { basis(&pairs)? };
    let mut out = Vec::with_capacity(normals.len() * rho_d.len());
    let mut at = 0;
    for n in &normals {
        match n {
            Some(n) => {
                let spec: f64 = if k == 0 { 0.0 } else { c.iter().zip(&responses[at * k..(at + 1) * k]).map(|(a, b)| a * b).sum() };
                let shading = dot3(*n, l).max(0.0);
                out.extend(rho_d.iter().map(|d| (d + spec) * shading));
                at += 1;
            }
            None => out.extend(std::iter::repeat_n(0.0, rho_d.len())),
        }
    }
    if normalize {
        let peak = out.iter().cloned().fold(0.0, f64::max);
        if peak > 0.0 {
            out.iter_mut().for_each(|v| *v /= peak);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::light_at;

    #[test]
    fn zero_weights_give_cosine_shading() {
        let light = light_at(0.5, 1.0);
        let img = render_brdf_sphere(&[0.7], &[0.0; 3], |p| Ok(vec![5.0; 3 * p.len()]), &light, 32, false).unwrap();
        for p in 0..32 * 32 {
            let want = sphere_normal(p, 32).map_or(0.0, |n| 0.7 * dot3(n, light.direction()).max(0.0));
            assert!((img[p] - want).abs() < 1e-6);
        }
    }

    #[test]
    fn mask_is_inscribed_disk() {
        let m = sphere_mask(8);
        assert!(!m[0] && !m[7] && !m[56] && !m[63]);
        assert!(m[3 * 8 + 3] && m[4 * 8 + 0] && m[3 * 8 + 7]);
    }

    #[test]
    fn narrow_lobe_peaks_at_the_half_vector() {
        let res = 128;
        let light = light_at(0.9, 2.3);
        let lobe = |pairs: &[(f64, f64)]| Ok(pairs.iter().map(|&(nh, _)| nh.max(0.0).powf(400.0)).collect());
        let img = render_brdf_sphere(&[0.0], &[1.0], lobe, &light, res, true).unwrap();
        let argmax = (0..res * res).max_by(|&a, &b| img[a].total_cmp(&img[b])).unwrap();
        let h = half_vector(light.direction(), VIEW).unwrap();
        // pixel whose sphere normal is h
        let col = (h[0] + 1.0) / 2.0 * res as f64 - 0.5;
        let row = (h[1] + 1.0) / 2.0 * res as f64 - 0.5;
        let (ac, ar) = ((argmax % res) as f64, (argmax / res) as f64);
        assert!((ac - col).hypot(ar - row) <= 3.0, "peak at ({ac}, {ar}), expected ({col}, {row})");
        assert_eq!(img[argmax], 1.0);
    }
}
