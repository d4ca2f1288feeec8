//! Gaussian predictive distributions at new inputs.
//!
//! Each predictor factorizes its training covariance once and reuses the factor for
//! every test point. Variances are for a noisy observation at the test input.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::covariance::{
    assemble_bivariate_cov, assemble_full_cov, assemble_univariate_cov, BivariateParams, FullMgcpParams, GaussianTerm,
    MarginalTerms, OutputTag, UnivariateParams,
};
use crate::data::OutputData;
use crate::error::{Error, Result};
use crate::likelihood::stack;
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianPrediction {
    pub mean: f64,
    pub variance: f64,
}

fn check_point(x0: &[f64], dim: usize) -> Result<()> {
    if x0.len() != dim {
        return Err(Error::Argument(format!(
            "test input has {} coordinates but the model has D = {dim}",
            x0.len()
        )));
    }
    Ok(())
}

/// Mean `kᵀ C⁻¹ y` and variance `prior - kᵀ C⁻¹ k` from a factor of `C`.
fn gaussian_conditional(
    ch: &Cholesky<f64, Dyn>,
    alpha: &DVector<f64>,
    k: &DVector<f64>,
    prior: f64,
) -> GaussianPrediction {
    let mean = k.dot(alpha);
    let v = ch
        .l()
        .solve_lower_triangular(k)
        .expect("Cholesky factor has a positive diagonal");
    let variance = (prior - v.norm_squared()).max(f64::EPSILON * prior);
    GaussianPrediction { mean, variance }
}

fn displacement(x0: &[f64], x: &DMatrix<f64>, r: usize) -> Vec<f64> {
    x0.iter().enumerate().map(|(c, v)| v - x[(r, c)]).collect()
}

/// Predictor for one pairwise submodel.
#[derive(Debug, Clone)]
pub struct BivariatePredictor<'a> {
    params: BivariateParams,
    data_i: &'a OutputData,
    data_j: &'a OutputData,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
}

impl<'a> BivariatePredictor<'a> {
    pub fn new(params: &BivariateParams, data_i: &'a OutputData, data_j: &'a OutputData) -> Result<Self> {
        let c = assemble_bivariate_cov(params, &data_i.x, &data_j.x)?;
        let chol = linalg::factorize(&c, &[data_i.len(), data_j.len()])?;
        let alpha = chol.solve(&stack(&data_i.y, &data_j.y));
        Ok(BivariatePredictor {
            params: params.clone(),
            data_i,
            data_j,
            chol,
            alpha,
        })
    }

    pub fn predict(&self, x0: &[f64], target: OutputTag) -> Result<GaussianPrediction> {
        check_point(x0, self.params.dim())?;
        let own = MarginalTerms::new(&self.params, target);
        let cross = GaussianTerm::cross(&self.params.shared_i, &self.params.shared_j, self.params.xi0);
        let (pi, pj) = (self.data_i.len(), self.data_j.len());
        let k = DVector::from_fn(pi + pj, |r, _| {
            let (data, row, same) = if r < pi {
                (self.data_i, r, target == OutputTag::I)
            } else {
                (self.data_j, r - pi, target == OutputTag::J)
            };
            let d = displacement(x0, &data.x, row);
            if same {
                own.eval(&d)
            } else {
                cross.eval(&d)
            }
        });
        let s = self.params.sigma(target);
        let prior = own.eval(&vec![0.0; x0.len()]) + s * s;
        Ok(gaussian_conditional(&self.chol, &self.alpha, &k, prior))
    }
}

pub fn predict_bivariate(
    params: &BivariateParams,
    data_i: &OutputData,
    data_j: &OutputData,
    x0: &[f64],
    target: OutputTag,
) -> Result<GaussianPrediction> {
    BivariatePredictor::new(params, data_i, data_j)?.predict(x0, target)
}

#[derive(Debug, Clone)]
pub struct UnivariatePredictor<'a> {
    params: UnivariateParams,
    data: &'a OutputData,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
}

impl<'a> UnivariatePredictor<'a> {
    pub fn new(params: &UnivariateParams, data: &'a OutputData) -> Result<Self> {
        let c = assemble_univariate_cov(params, &data.x)?;
        let chol = linalg::factorize(&c, &[data.len()])?;
        let alpha = chol.solve(&data.y);
        Ok(UnivariatePredictor {
            params: params.clone(),
            data,
            chol,
            alpha,
        })
    }

    pub fn predict(&self, x0: &[f64]) -> Result<GaussianPrediction> {
        check_point(x0, self.params.dim())?;
        let t = self.params.term();
        let k = DVector::from_fn(self.data.len(), |r, _| t.eval(&displacement(x0, &self.data.x, r)));
        let prior = self.params.prior_variance() + self.params.sigma * self.params.sigma;
        Ok(gaussian_conditional(&self.chol, &self.alpha, &k, prior))
    }
}

pub fn predict_univariate(params: &UnivariateParams, data: &OutputData, x0: &[f64]) -> Result<GaussianPrediction> {
    UnivariatePredictor::new(params, data)?.predict(x0)
}

#[derive(Debug, Clone)]
pub struct FullPredictor<'a> {
    params: FullMgcpParams,
    outputs: &'a [OutputData],
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
}

impl<'a> FullPredictor<'a> {
    pub fn new(params: &FullMgcpParams, outputs: &'a [OutputData]) -> Result<Self> {
        let xs: Vec<_> = outputs.iter().map(|o| o.x.clone()).collect();
        let c = assemble_full_cov(params, &xs)?;
        let sizes: Vec<usize> = outputs.iter().map(|o| o.len()).collect();
        let chol = linalg::factorize(&c, &sizes)?;
        let y = DVector::from_iterator(c.nrows(), outputs.iter().flat_map(|o| o.y.iter().copied()));
        let alpha = chol.solve(&y);
        Ok(FullPredictor {
            params: params.clone(),
            outputs,
            chol,
            alpha,
        })
    }

    pub fn predict(&self, x0: &[f64], target: usize) -> Result<GaussianPrediction> {
        let n = self.params.n_outputs();
        if target >= n {
            return Err(Error::Argument(format!("target {target} out of range for {n} outputs")));
        }
        check_point(x0, self.params.dim())?;
        let own = self.params.marginal_terms(target);
        let mut k = Vec::with_capacity(self.chol.l_dirty().nrows());
        for (a, o) in self.outputs.iter().enumerate() {
            if a == target {
                for r in 0..o.len() {
                    let d = displacement(x0, &o.x, r);
                    k.push(own.iter().map(|t| t.eval(&d)).sum());
                }
            } else {
                let t = self.params.cross_term(target, a);
                for r in 0..o.len() {
                    k.push(t.eval(&displacement(x0, &o.x, r)));
                }
            }
        }
        let zero = vec![0.0; x0.len()];
        let s = self.params.noise[target];
        let prior = own.iter().map(|t| t.eval(&zero)).sum::<f64>() + s * s;
        Ok(gaussian_conditional(
            &self.chol,
            &self.alpha,
            &DVector::from_vec(k),
            prior,
        ))
    }
}

pub fn predict_full_mgcp(
    params: &FullMgcpParams,
    outputs: &[OutputData],
    x0: &[f64],
    target: usize,
) -> Result<GaussianPrediction> {
    FullPredictor::new(params, outputs)?.predict(x0, target)
}

/// Off-diagonal block `(C⁻¹)[..split, split..]` of the precision matrix.
pub fn precision_block(cov: &DMatrix<f64>, split: usize) -> Result<DMatrix<f64>> {
    if !cov.is_square() || split == 0 || split >= cov.nrows() {
        return Err(Error::Argument(
            "precision_block needs a square matrix and an interior split".into(),
        ));
    }
    let ch = cov
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("matrix is not positive definite".into()))?;
    let n = cov.nrows();
    let inv = ch.inverse();
    Ok(inv.view((0, split), (split, n - split)).into_owned())
}
