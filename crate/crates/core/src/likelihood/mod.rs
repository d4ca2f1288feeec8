//! Negative log-likelihood of the pairwise submodel and its analytic gradient.
//!
//! `ℓ(θ) = ½ yᵀC⁻¹y + ½ log|C| + ½ p log 2π` where `C` is the stacked bivariate
//! covariance. All evaluations go through a Cholesky factor; the gradient uses
//! `∂ℓ/∂θ = ½ ⟨C⁻¹ - ααᵀ, ∂C/∂θ⟩` with `α = C⁻¹y`.

mod full;
pub mod layout;
mod penalty;
mod separable;
mod univariate;

pub use full::{full_layout_len, full_nll, full_nll_grad, FullProblem};
pub use layout::{BivariateLayout, KernelSlot, ParamId};
pub use penalty::{penalty, PenaltyConfig, PenaltyKind, DEFAULT_SCAD_GAMMA, SMOOTHING_EPS};
pub use separable::SeparableProblem;
pub use univariate::{univariate_nll, univariate_nll_grad, UnivariateProblem};

use nalgebra::{DMatrix, DVector};

use crate::covariance::{
    assemble_bivariate_cov, row_diff, BivariateParams, GaussianTerm, Inputs, KernelSpec, OutputTag,
};
use crate::data::OutputData;
use crate::error::{Error, Result};
use crate::linalg;

pub fn stack(a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(a.len() + b.len(), a.iter().chain(b.iter()).copied())
}

fn check_pair(data_i: &OutputData, data_j: &OutputData) -> Result<()> {
    if data_i.is_empty() || data_j.is_empty() {
        return Err(Error::Argument("both outputs need at least one observation".into()));
    }
    Ok(())
}

/// Negative log-likelihood of the stacked observations of outputs `i` and `j`.
pub fn nll(params: &BivariateParams, data_i: &OutputData, data_j: &OutputData) -> Result<f64> {
    check_pair(data_i, data_j)?;
    let c = assemble_bivariate_cov(params, &data_i.x, &data_j.x)?;
    let ch = linalg::factorize(&c, &[data_i.len(), data_j.len()])?;
    Ok(linalg::gaussian_nll(&ch, &stack(&data_i.y, &data_j.y)).0)
}

fn put_symmetric(m: &mut DMatrix<f64>, offset: usize, x: &Inputs, f: impl Fn(&[f64]) -> f64) {
    let mut d = vec![0.0; x.ncols()];
    for r in 0..x.nrows() {
        for s in r..x.nrows() {
            row_diff(x, r, x, s, &mut d);
            let v = f(&d);
            m[(offset + r, offset + s)] = v;
            m[(offset + s, offset + r)] = v;
        }
    }
}

fn put_cross(m: &mut DMatrix<f64>, x_i: &Inputs, x_j: &Inputs, f: impl Fn(&[f64]) -> f64) {
    let pi = x_i.nrows();
    let mut d = vec![0.0; x_i.ncols()];
    for r in 0..pi {
        for s in 0..x_j.nrows() {
            row_diff(x_i, r, x_j, s, &mut d);
            let v = f(&d);
            m[(r, pi + s)] = v;
            m[(pi + s, r)] = v;
        }
    }
}

/// `∂ log T / ∂λ_a[c]` for the cross term between kernels `a` and `b`, as a function
/// of the displacement component `d_c`.
pub(crate) fn cross_log_lengthscale_slope(la: f64, lb: f64, dc: f64) -> f64 {
    let s = la + lb;
    0.25 / la - 0.5 / s - 0.5 * dc * dc * lb * lb / (s * s)
}

fn with_amplitude(k: &KernelSpec, amplitude: f64) -> KernelSpec {
    KernelSpec {
        amplitude,
        lengthscale_diag: k.lengthscale_diag.clone(),
    }
}

/// Closed-form derivative of the stacked covariance with respect to one raw parameter.
pub fn cov_param_derivative(
    params: &BivariateParams,
    which: ParamId,
    x_i: &Inputs,
    x_j: &Inputs,
) -> Result<DMatrix<f64>> {
    params.validate()?;
    let dim = params.dim();
    if x_i.ncols() != dim || x_j.ncols() != dim {
        return Err(Error::Argument("input dimension does not match parameters".into()));
    }
    let (pi, pj) = (x_i.nrows(), x_j.nrows());
    let mut m = DMatrix::zeros(pi + pj, pi + pj);
    let block = |w: OutputTag| match w {
        OutputTag::I => (0, x_i),
        OutputTag::J => (pi, x_j),
    };
    match which {
        ParamId::Sigma(w) => {
            let (off, x) = block(w);
            let v = 2.0 * params.sigma(w);
            for r in 0..x.nrows() {
                m[(off + r, off + r)] = v;
            }
        }
        ParamId::Xi0 => {
            let xi0 = params.xi0;
            for w in [OutputTag::I, OutputTag::J] {
                let (off, x) = block(w);
                let t = GaussianTerm::marginal(params.shared(w), 1.0);
                put_symmetric(&mut m, off, x, |d| 2.0 * xi0 * t.eval(d));
            }
            let t = GaussianTerm::cross(&params.shared_i, &params.shared_j, 1.0);
            put_cross(&mut m, x_i, x_j, |d| 2.0 * xi0 * t.eval(d));
        }
        ParamId::UniqueScale(w) => {
            let (off, x) = block(w);
            let t = GaussianTerm::marginal(params.unique(w), 1.0);
            let xi = params.unique_scale(w);
            put_symmetric(&mut m, off, x, |d| 2.0 * xi * t.eval(d));
        }
        ParamId::Amplitude(slot) => {
            let w = slot.output();
            let (off, x) = block(w);
            let k = slot.kernel(params);
            let scale = if slot.is_shared() {
                params.xi0
            } else {
                params.unique_scale(w)
            };
            // ∂(s²α² e)/∂α = 2 s² α e
            let t = GaussianTerm::marginal(&with_amplitude(k, 1.0), scale);
            let alpha = k.amplitude;
            put_symmetric(&mut m, off, x, |d| 2.0 * alpha * t.eval(d));
            if slot.is_shared() {
                let other = params.shared(w.other());
                let t = GaussianTerm::cross(&with_amplitude(k, 1.0), other, params.xi0);
                put_cross(&mut m, x_i, x_j, |d| t.eval(d));
            }
        }
        ParamId::Lengthscale(slot, c) => {
            if c >= dim {
                return Err(Error::Argument(format!(
                    "length-scale index {c} out of range for D={dim}"
                )));
            }
            let w = slot.output();
            let (off, x) = block(w);
            let k = slot.kernel(params);
            let scale = if slot.is_shared() {
                params.xi0
            } else {
                params.unique_scale(w)
            };
            let t = GaussianTerm::marginal(k, scale);
            put_symmetric(&mut m, off, x, |d| -0.25 * d[c] * d[c] * t.eval(d));
            if slot.is_shared() {
                let other = params.shared(w.other());
                let t = GaussianTerm::cross(k, other, params.xi0);
                let (la, lb) = (k.lengthscale_diag[c], other.lengthscale_diag[c]);
                put_cross(&mut m, x_i, x_j, |d| {
                    t.eval(d) * cross_log_lengthscale_slope(la, lb, d[c])
                });
            }
        }
    }
    Ok(m)
}

/// Likelihood pieces shared by the value and gradient computations.
struct Evaluation {
    value: f64,
    weights: DMatrix<f64>,
}

fn evaluate(params: &BivariateParams, data_i: &OutputData, data_j: &OutputData) -> Result<Evaluation> {
    check_pair(data_i, data_j)?;
    let c = assemble_bivariate_cov(params, &data_i.x, &data_j.x)?;
    let sizes = [data_i.len(), data_j.len()];
    let (ch, jitter) = linalg::factorize_jittered(&c, &sizes)?;
    let (value, alpha) = linalg::gaussian_nll(&ch, &stack(&data_i.y, &data_j.y));
    let weights = linalg::gradient_weights(&ch, &alpha, &sizes, jitter);
    Ok(Evaluation { value, weights })
}

fn raw_gradient(
    params: &BivariateParams,
    data_i: &OutputData,
    data_j: &OutputData,
    layout: &BivariateLayout,
    weights: &DMatrix<f64>,
) -> Result<Vec<f64>> {
    let mut err = None;
    let g = layout.chain_gradient(params, |id| {
        match cov_param_derivative(params, id, &data_i.x, &data_j.x) {
            Ok(dc) => linalg::half_inner(weights, &dc),
            Err(e) => {
                err.get_or_insert(e);
                f64::NAN
            }
        }
    });
    match err {
        Some(e) => Err(e),
        None => Ok(g),
    }
}

/// Gradient of [`nll`] in the optimizer coordinates of `layout`.
pub fn nll_grad(
    params: &BivariateParams,
    data_i: &OutputData,
    data_j: &OutputData,
    layout: &BivariateLayout,
) -> Result<Vec<f64>> {
    let ev = evaluate(params, data_i, data_j)?;
    raw_gradient(params, data_i, data_j, layout, &ev.weights)
}

/// [`nll`] plus the (smoothed) penalty on `ξ₀`.
pub fn penalized_nll(
    params: &BivariateParams,
    data_i: &OutputData,
    data_j: &OutputData,
    cfg: &PenaltyConfig,
) -> Result<f64> {
    cfg.validate()?;
    Ok(nll(params, data_i, data_j)? + cfg.smoothed(params.xi0).0)
}

/// Gradient of [`penalized_nll`] in the optimizer coordinates of `layout`.
pub fn penalized_grad(
    params: &BivariateParams,
    data_i: &OutputData,
    data_j: &OutputData,
    cfg: &PenaltyConfig,
    layout: &BivariateLayout,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    let mut g = nll_grad(params, data_i, data_j, layout)?;
    g[layout.xi0_index()] += cfg.smoothed(params.xi0).1;
    Ok(g)
}

/// Penalized objective of one pairwise submodel over optimizer coordinates.
#[derive(Debug, Clone)]
pub struct BivariateProblem<'a> {
    pub data_i: &'a OutputData,
    pub data_j: &'a OutputData,
    pub layout: BivariateLayout,
    pub penalty: PenaltyConfig,
}

impl<'a> BivariateProblem<'a> {
    pub fn new(
        data_i: &'a OutputData,
        data_j: &'a OutputData,
        layout: BivariateLayout,
        penalty: PenaltyConfig,
    ) -> Result<Self> {
        check_pair(data_i, data_j)?;
        penalty.validate()?;
        if data_i.dim() != layout.dim || data_j.dim() != layout.dim {
            return Err(Error::Argument("input dimension does not match the layout".into()));
        }
        Ok(BivariateProblem {
            data_i,
            data_j,
            layout,
            penalty,
        })
    }

    pub fn value(&self, v: &[f64]) -> Result<f64> {
        let p = self.layout.from_vector(v)?;
        penalized_nll(&p, self.data_i, self.data_j, &self.penalty)
    }

    pub fn value_and_grad(&self, v: &[f64]) -> Result<(f64, Vec<f64>)> {
        let p = self.layout.from_vector(v)?;
        let ev = evaluate(&p, self.data_i, self.data_j)?;
        let mut g = raw_gradient(&p, self.data_i, self.data_j, &self.layout, &ev.weights)?;
        let (pv, pg) = self.penalty.smoothed(p.xi0);
        g[self.layout.xi0_index()] += pg;
        Ok((ev.value + pv, g))
    }
}
