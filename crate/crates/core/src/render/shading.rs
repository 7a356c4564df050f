use super::light::{dot3, norm3};
use super::Light;
use crate::{Error, Result};

/// Normalized bisector of `l` and `v`.
pub fn half_vector(l: [f64; 3], v: [f64; 3]) -> Result<[f64; 3]> {
    let s = [l[0] + v[0], l[1] + v[1], l[2] + v[2]];
    let n = norm3(s);
    if n < 1e-12 {
        return Err(Error::Invalid("half vector of antiparallel directions".into()));
    }
    Ok([s[0] / n, s[1] / n, s[2] / n])
}

/// Intensity per channel: `s * (rho_d + c·basis) * max(l·n, 0)`.
///
/// The specular term is shared by all channels; `basis` must already be
/// evaluated at `(n·h, v·h)`.
pub fn render_pixel(n: [f64; 3], rho_d: &[f64], c: &[f64], basis: &[f64], light: &Light, s: f64) -> Vec<f64> {
    debug_assert_eq!(c.len(), basis.len());
    let shading = dot3(light.direction(), n).max(0.0);
    let specular: f64 = c.iter().zip(basis).map(|(a, b)| a * b).sum();
    rho_d.iter().map(|&d| s * (d + specular) * shading).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::render::VIEW;
    use proptest::prelude::*;

    fn unit(v: [f64; 3]) -> [f64; 3] {
        let n = norm3(v);
        [v[0] / n, v[1] / n, v[2] / n]
    }

    #[test]
    fn half_vector_cases() {
        assert_eq!(half_vector(VIEW, VIEW).unwrap(), VIEW);
        let h = half_vector([1.0, 0.0, 0.0], VIEW).unwrap();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert!((h[0] - r).abs() < 1e-15 && h[1] == 0.0 && (h[2] + r).abs() < 1e-15);
        assert!(half_vector([0.0, 0.0, 1.0], VIEW).is_err());
    }

    #[test]
    fn attached_and_cast_shadows_are_black() {
        let light = Light::white(unit([0.3, 0.2, -0.9])).unwrap();
        let away = unit([-0.3, -0.2, 0.9]);
        assert_eq!(render_pixel(away, &[0.9], &[1.0], &[2.0], &light, 1.0), vec![0.0]);
        assert_eq!(render_pixel(unit([0.0, 0.0, -1.0]), &[0.9], &[1.0], &[2.0], &light, 0.0), vec![0.0]);
    }

    #[test]
    fn head_on_lambertian() {
        let light = Light::white(VIEW).unwrap();
        let i = render_pixel(VIEW, &[0.5], &[0.0; 9], &[0.7; 9], &light, 1.0);
        assert!((i[0] - 0.5).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn half_vector_is_unit(a in -1.0f64..1.0, b in -1.0f64..1.0, c in -1.0f64..-0.05) {
            let l = unit([a, b, c]);
            let h = half_vector(l, VIEW).unwrap();
            prop_assert!((norm3(h) - 1.0).abs() < 1e-12);
        }

        #[test]
        fn zero_coefficients_give_lambertian(nx in -0.9f64..0.9, ny in -0.9f64..0.9, lx in -0.7f64..0.7, ly in -0.7f64..0.7, rho in 0.0f64..2.0, basis in proptest::collection::vec(0.0f64..5.0, 9)) {
            let n = unit([nx, ny, -1.0]);
            let light = Light::white(unit([lx, ly, -1.0])).unwrap();
            let i = render_pixel(n, &[rho], &[0.0; 9], &basis, &light, 1.0);
            let lambert = rho * dot3(n, light.direction()).max(0.0);
            prop_assert_eq!(i[0], lambert);
            prop_assert!(i[0] >= 0.0);
        }
    }
}
