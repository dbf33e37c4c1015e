use std::f64::consts::PI;

use crate::rng::RngStream;

/// Random direction of unit Euclidean norm (uniform on the sphere).
pub fn sample_unit_direction(dim: usize, rng: &mut RngStream) -> Vec<f64> {
    assert!(dim >= 1, "direction dimension must be positive");
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.standard_normal()).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-300 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Product of zero-mean normal densities with common standard deviation.
pub fn gaussian_pdf(x: &[f64], sigma: f64) -> f64 {
    gaussian_log_pdf(x, sigma).exp()
}

pub fn gaussian_log_pdf(x: &[f64], sigma: f64) -> f64 {
    assert!(sigma > 0.0, "sigma must be positive");
    let norm = -0.5 * (2.0 * PI).ln() - sigma.ln();
    x.iter()
        .map(|v| norm - 0.5 * (v / sigma) * (v / sigma))
        .sum()
}
