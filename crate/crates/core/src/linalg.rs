use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::covariance::{add_block_jitter, JITTER};
use crate::error::{Error, Result};

/// Jitter multipliers tried in turn when a factorization fails.
const ESCALATION: [f64; 5] = [1.0, 1e1, 1e2, 1e3, 1e4];

/// Cholesky factor of a covariance after per-block jitter, escalating the jitter
/// until the factorization succeeds.
pub fn factorize(c: &DMatrix<f64>, block_sizes: &[usize]) -> Result<Cholesky<f64, Dyn>> {
    factorize_jittered(c, block_sizes).map(|(ch, _)| ch)
}

/// [`factorize`] that also returns the jitter factor applied, which
/// [`gradient_weights`] needs because the jitter depends on the covariance.
pub fn factorize_jittered(c: &DMatrix<f64>, block_sizes: &[usize]) -> Result<(Cholesky<f64, Dyn>, f64)> {
    for mult in ESCALATION {
        let factor = JITTER * mult;
        let mut m = c.clone();
        add_block_jitter(&mut m, block_sizes, factor);
        if let Some(ch) = m.cholesky() {
            if ch.l_dirty().diagonal().iter().all(|v| v.is_finite() && *v > 0.0) {
                return Ok((ch, factor));
            }
        }
    }
    let diag_min = c.diagonal().min();
    let diag_max = c.diagonal().max();
    Err(Error::Numerical(format!(
        "Cholesky factorization failed for a {}x{} covariance after jitter {:e}; diagonal range [{diag_min:e}, {diag_max:e}]",
        c.nrows(),
        c.ncols(),
        JITTER * ESCALATION[ESCALATION.len() - 1],
    )))
}

/// `log |C|` from the Cholesky factor.
pub fn log_det(ch: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * ch.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>()
}

/// Gaussian negative log-density of `y ~ N(0, C)` from a factor of `C`, constant included.
pub fn gaussian_nll(ch: &Cholesky<f64, Dyn>, y: &DVector<f64>) -> (f64, DVector<f64>) {
    let alpha = ch.solve(y);
    let n = y.len() as f64;
    let value = 0.5 * y.dot(&alpha) + 0.5 * log_det(ch) + 0.5 * n * (2.0 * std::f64::consts::PI).ln();
    (value, alpha)
}

/// Weights `W` with `∂nll/∂θ = ½⟨W, ∂C/∂θ⟩` for the jittered covariance.
///
/// Starts from `C⁻¹ - ααᵀ`, `α = C⁻¹y`. Block `b` carries jitter `f·mean(diag C_b)`,
/// whose derivative is folded in by adding `f·tr(W_b)/n_b` to that block's diagonal.
pub fn gradient_weights(
    ch: &Cholesky<f64, Dyn>,
    alpha: &DVector<f64>,
    block_sizes: &[usize],
    factor: f64,
) -> DMatrix<f64> {
    let mut w = ch.inverse();
    w.ger(-1.0, alpha, alpha, 1.0);
    let mut start = 0;
    for &len in block_sizes {
        if len == 0 {
            continue;
        }
        let shift = factor * (start..start + len).map(|r| w[(r, r)]).sum::<f64>() / len as f64;
        for r in start..start + len {
            w[(r, r)] += shift;
        }
        start += len;
    }
    w
}

/// `½ Σ_rs W_rs D_rs`.
pub fn half_inner(w: &DMatrix<f64>, d: &DMatrix<f64>) -> f64 {
    0.5 * w.component_mul(d).sum()
}
