use crate::scene::ObservationStack;

/// Per-image, per-pixel flags (`[n][H*W]`, row-major): `false` where the
/// channel-averaged intensity falls below a tenth of that pixel's mean over
/// all images. Such observations are left out of the reconstruction loss
/// while the depth network is still untrained.
pub fn shadow_guidance_mask(stack: &ObservationStack) -> Vec<bool> {
    let n = stack.len();
    let hw = stack.width * stack.height;
    let gray: Vec<f64> = (0..n)
        .flat_map(|i| (0..hw).map(move |p| (i, p)))
        .map(|(i, p)| {
            let px = stack.pixel(i, p);
            px.iter().sum::<f64>() / px.len() as f64
        })
        .collect();
    let mut mean = vec![0.0; hw];
    for i in 0..n {
        for p in 0..hw {
            mean[p] += gray[i * hw + p] / n as f64;
        }
    }
    gray.iter().enumerate().map(|(k, &v)| v >= 0.1 * mean[k % hw]).collect()
}
