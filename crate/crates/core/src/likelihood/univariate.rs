use crate::covariance::{assemble_univariate_cov, fill_symmetric, KernelSpec, UnivariateParams};
use crate::data::OutputData;
use crate::error::{Error, Result};
use crate::linalg;

pub fn univariate_nll(params: &UnivariateParams, data: &OutputData) -> Result<f64> {
    let c = assemble_univariate_cov(params, &data.x)?;
    let ch = linalg::factorize(&c, &[data.len()])?;
    Ok(linalg::gaussian_nll(&ch, &data.y).0)
}

/// Gradient with respect to `(ln α, ln λ_1 … ln λ_D, ln σ)`; the latent scale is held fixed.
pub fn univariate_nll_grad(params: &UnivariateParams, data: &OutputData) -> Result<(f64, Vec<f64>)> {
    let c = assemble_univariate_cov(params, &data.x)?;
    let (ch, jitter) = linalg::factorize_jittered(&c, &[data.len()])?;
    let (value, alpha) = linalg::gaussian_nll(&ch, &data.y);
    let w = linalg::gradient_weights(&ch, &alpha, &[data.len()], jitter);
    let term = params.term();
    let k = fill_symmetric(&data.x, |d| term.eval(d));
    let dim = params.dim();
    let mut g = Vec::with_capacity(dim + 2);
    g.push(linalg::half_inner(&w, &(2.0 * &k)));
    for c in 0..dim {
        let lam = params.kernel.lengthscale_diag[c];
        let dk = fill_symmetric(&data.x, |d| -0.25 * lam * d[c] * d[c] * term.eval(d));
        g.push(linalg::half_inner(&w, &dk));
    }
    g.push(params.sigma * params.sigma * w.trace());
    Ok((value, g))
}

/// Single-output marginal likelihood over log coordinates with unit latent scale.
#[derive(Debug, Clone)]
pub struct UnivariateProblem<'a> {
    pub data: &'a OutputData,
}

impl<'a> UnivariateProblem<'a> {
    pub fn new(data: &'a OutputData) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::Argument("output has no observations".into()));
        }
        Ok(UnivariateProblem { data })
    }

    pub fn len(&self) -> usize {
        self.data.dim() + 2
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn from_vector(&self, v: &[f64]) -> Result<UnivariateParams> {
        if v.len() != self.len() {
            return Err(Error::Argument("parameter vector has the wrong length".into()));
        }
        let dim = self.data.dim();
        Ok(UnivariateParams {
            kernel: KernelSpec {
                amplitude: v[0].exp(),
                lengthscale_diag: v[1..=dim].iter().map(|x| x.exp()).collect(),
            },
            scale: 1.0,
            sigma: v[dim + 1].exp(),
        })
    }

    pub fn to_vector(&self, p: &UnivariateParams) -> Result<Vec<f64>> {
        p.validate()?;
        if p.dim() != self.data.dim() || p.kernel.amplitude <= 0.0 {
            return Err(Error::Argument("parameters do not fit this problem".into()));
        }
        // absorb the latent scale into the amplitude
        let mut v = vec![(p.scale.abs() * p.kernel.amplitude).ln()];
        v.extend(p.kernel.lengthscale_diag.iter().map(|x| x.ln()));
        v.push(p.sigma.ln());
        Ok(v)
    }

    pub fn value(&self, v: &[f64]) -> Result<f64> {
        univariate_nll(&self.from_vector(v)?, self.data)
    }

    pub fn value_and_grad(&self, v: &[f64]) -> Result<(f64, Vec<f64>)> {
        univariate_nll_grad(&self.from_vector(v)?, self.data)
    }
}
