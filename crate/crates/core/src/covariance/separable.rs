use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{check_inputs, fill_block, fill_symmetric, GaussianTerm, Inputs, KernelSpec, OutputTag};
use crate::error::{Error, Result};

/// Separable bivariate model `cov(y_a(x), y_b(x')) = T_ab k(x, x') + σ_a² δ`, where `T`
/// has unit diagonal and off-diagonal `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparableParams {
    pub t: f64,
    pub base_kernel: KernelSpec,
    pub noise: [f64; 2],
}

impl SeparableParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.t.abs() < 1.0) {
            return Err(Error::Argument(format!(
                "between-output correlation must lie in (-1, 1), got {}",
                self.t
            )));
        }
        self.base_kernel.validate()?;
        if self.noise.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::Argument("noise must be positive".into()));
        }
        Ok(())
    }

    pub fn sigma(&self, which: OutputTag) -> f64 {
        match which {
            OutputTag::I => self.noise[0],
            OutputTag::J => self.noise[1],
        }
    }

    pub(crate) fn base_term(&self) -> GaussianTerm {
        GaussianTerm::marginal(&self.base_kernel, 1.0)
    }
}

/// Noise-free covariance `T_ab k(x, x')`.
pub fn separable_cov(params: &SeparableParams, a: OutputTag, b: OutputTag, x: &[f64], x_prime: &[f64]) -> Result<f64> {
    params.validate()?;
    if x.len() != params.base_kernel.dim() || x_prime.len() != x.len() {
        return Err(Error::Argument("input dimension mismatch".into()));
    }
    let d: Vec<f64> = x.iter().zip(x_prime).map(|(p, q)| p - q).collect();
    let base = params.base_term().eval(&d);
    Ok(if a == b { base } else { params.t * base })
}

/// Covariance of `[y_i; y_j]` under the separable model, noise included.
pub fn assemble_separable_cov(params: &SeparableParams, x_i: &Inputs, x_j: &Inputs) -> Result<DMatrix<f64>> {
    params.validate()?;
    let dim = params.base_kernel.dim();
    check_inputs(x_i, dim, "X_i")?;
    check_inputs(x_j, dim, "X_j")?;
    let base = params.base_term();
    let (pi, pj) = (x_i.nrows(), x_j.nrows());
    let mut c = DMatrix::zeros(pi + pj, pi + pj);
    c.view_mut((0, 0), (pi, pi))
        .copy_from(&fill_symmetric(x_i, |d| base.eval(d)));
    c.view_mut((pi, pi), (pj, pj))
        .copy_from(&fill_symmetric(x_j, |d| base.eval(d)));
    let cross = fill_block(x_i, x_j, |d| params.t * base.eval(d));
    c.view_mut((0, pi), (pi, pj)).copy_from(&cross);
    c.view_mut((pi, 0), (pj, pi)).copy_from(&cross.transpose());
    for r in 0..pi {
        c[(r, r)] += params.noise[0] * params.noise[0];
    }
    for r in pi..pi + pj {
        c[(r, r)] += params.noise[1] * params.noise[1];
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(t: f64) -> SeparableParams {
        SeparableParams {
            t,
            base_kernel: KernelSpec::new(1.3, vec![0.8]).unwrap(),
            noise: [0.1, 0.2],
        }
    }

    #[test]
    fn zero_correlation_has_no_cross_covariance() {
        assert_eq!(
            separable_cov(&params(0.0), OutputTag::I, OutputTag::J, &[0.2], &[0.5]).unwrap(),
            0.0
        );
    }

    #[test]
    fn cross_covariance_is_linear_in_t() {
        let p = params(0.5);
        let base = separable_cov(&p, OutputTag::I, OutputTag::I, &[0.2], &[0.5]).unwrap();
        let cross = separable_cov(&p, OutputTag::I, OutputTag::J, &[0.2], &[0.5]).unwrap();
        assert!((cross - 0.5 * base).abs() < 1e-15);
    }

    #[test]
    fn same_output_ignores_t() {
        let a = separable_cov(&params(0.0), OutputTag::J, OutputTag::J, &[0.1], &[0.4]).unwrap();
        let b = separable_cov(&params(0.9), OutputTag::J, OutputTag::J, &[0.1], &[0.4]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn correlation_outside_unit_interval_is_rejected() {
        for t in [1.0, -1.0, 1.5] {
            assert!(matches!(
                separable_cov(&params(t), OutputTag::I, OutputTag::J, &[0.0], &[0.0]),
                Err(Error::Argument(_))
            ));
        }
    }

    #[test]
    fn assembled_matrix_is_block_diagonal_at_zero_t() {
        let x = Inputs::from_fn(3, 1, |r, _| r as f64);
        let c = assemble_separable_cov(&params(0.0), &x, &x).unwrap();
        assert!(c.view((0, 3), (3, 3)).iter().all(|v| *v == 0.0));
        let c = assemble_separable_cov(&params(0.6), &x, &x).unwrap();
        assert!(c.cholesky().is_some());
    }
}
