//! Reference values for convolution covariances by direct numerical integration.
//!
//! Independent of the closed forms in the parent module: the smoothing kernels are
//! evaluated as densities on a grid and the convolution integral is summed with the
//! trapezoid rule. Only meant for one- and two-dimensional inputs.

use std::f64::consts::PI;

use super::KernelSpec;
use crate::error::{Error, Result};

/// `K(u) = α (4π)^{D/4} |Λ|^{-1/4} N(u | 0, Λ⁻¹)`.
pub fn smoothing_kernel(k: &KernelSpec, u: &[f64]) -> f64 {
    let dim = k.dim() as f64;
    let det: f64 = k.lengthscale_diag.iter().product();
    let quad: f64 = k.lengthscale_diag.iter().zip(u).map(|(l, x)| l * x * x).sum();
    let density = det.sqrt() * (2.0 * PI).powf(-dim / 2.0) * (-0.5 * quad).exp();
    k.amplitude * (4.0 * PI).powf(dim / 4.0) * det.powf(-0.25) * density
}

const HALF_WIDTH_SIGMAS: f64 = 12.0;
const STEPS_PER_SIGMA: f64 = 10.0;

/// Trapezoid nodes covering the support of `K_a(u) K_b(u - d)` along one axis.
fn axis_nodes(lambda_a: f64, lambda_b: f64, d: f64) -> (Vec<f64>, f64) {
    let sa = lambda_a.powf(-0.5);
    let sb = lambda_b.powf(-0.5);
    // the product is negligible outside the overlap of the two kernels' supports
    let lo = (-HALF_WIDTH_SIGMAS * sa).max(d - HALF_WIDTH_SIGMAS * sb);
    let hi = (HALF_WIDTH_SIGMAS * sa).min(d + HALF_WIDTH_SIGMAS * sb);
    let (lo, hi) = if lo < hi { (lo, hi) } else { (hi - 1.0, hi + 1.0) };
    let h_target = sa.min(sb) / STEPS_PER_SIGMA;
    let steps = ((hi - lo) / h_target).ceil().max(8.0) as usize;
    let h = (hi - lo) / steps as f64;
    ((0..=steps).map(|k| lo + k as f64 * h).collect(), h)
}

fn trapezoid_weight(k: usize, n: usize) -> f64 {
    if k == 0 || k + 1 == n {
        0.5
    } else {
        1.0
    }
}

/// `scale² ∫ K_a(u) K_b(u - d) du` by trapezoid quadrature.
pub fn quadrature_oracle(kernel_a: &KernelSpec, kernel_b: &KernelSpec, scale: f64, d: &[f64]) -> Result<f64> {
    let dim = d.len();
    if kernel_a.dim() != dim || kernel_b.dim() != dim {
        return Err(Error::Argument("dimension mismatch".into()));
    }
    if dim > 2 {
        return Err(Error::Unsupported(format!(
            "quadrature reference supports D <= 2, got D = {dim}"
        )));
    }
    if scale == 0.0 {
        return Ok(0.0);
    }
    let axes: Vec<(Vec<f64>, f64)> = (0..dim)
        .map(|c| axis_nodes(kernel_a.lengthscale_diag[c], kernel_b.lengthscale_diag[c], d[c]))
        .collect();
    let integrand = |u: &[f64]| {
        let shifted: Vec<f64> = u.iter().zip(d).map(|(a, b)| a - b).collect();
        smoothing_kernel(kernel_a, u) * smoothing_kernel(kernel_b, &shifted)
    };
    let sum = match dim {
        1 => {
            let (nodes, h) = &axes[0];
            let n = nodes.len();
            nodes
                .iter()
                .enumerate()
                .map(|(k, &u)| trapezoid_weight(k, n) * integrand(&[u]))
                .sum::<f64>()
                * h
        }
        _ => {
            let (n0, h0) = &axes[0];
            let (n1, h1) = &axes[1];
            let mut total = 0.0;
            for (a, &u0) in n0.iter().enumerate() {
                let wa = trapezoid_weight(a, n0.len());
                let mut row = 0.0;
                for (b, &u1) in n1.iter().enumerate() {
                    row += trapezoid_weight(b, n1.len()) * integrand(&[u0, u1]);
                }
                total += wa * row;
            }
            total * h0 * h1
        }
    };
    Ok(scale * scale * sum)
}
