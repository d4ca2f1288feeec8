use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{check_inputs, fill_block, fill_symmetric, GaussianTerm, Inputs, KernelSpec};
use crate::error::{Error, Result};

/// The latent function shared by one unordered pair of outputs in the full model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairLatent {
    pub first: usize,
    pub second: usize,
    pub kernel_first: KernelSpec,
    pub kernel_second: KernelSpec,
    pub scale: f64,
}

/// Full multivariate model: one latent per unordered pair, no per-output unique latents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FullMgcpParams {
    /// Ordered lexicographically by `(first, second)`.
    pub latents: Vec<PairLatent>,
    pub noise: Vec<f64>,
}

impl FullMgcpParams {
    pub fn n_outputs(&self) -> usize {
        self.noise.len()
    }

    pub fn dim(&self) -> usize {
        self.latents.first().map_or(0, |l| l.kernel_first.dim())
    }

    /// Free parameters when latent scales are absorbed into the kernel amplitudes:
    /// `N(N-1)(1+D) + N`.
    pub fn param_count(n_outputs: usize, dim: usize) -> usize {
        n_outputs * (n_outputs - 1) * (1 + dim) + n_outputs
    }

    /// Position of the latent for pair `(a, b)` in [`FullMgcpParams::latents`].
    pub fn pair_index(n: usize, a: usize, b: usize) -> usize {
        let (i, j) = if a < b { (a, b) } else { (b, a) };
        // pairs (0,1) (0,2) .. (0,n-1) (1,2) ..
        i * n - i * (i + 1) / 2 + (j - i - 1)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_outputs();
        if n < 2 {
            return Err(Error::Config("full model needs at least two outputs".into()));
        }
        let expected = n * (n - 1) / 2;
        if self.latents.len() != expected {
            return Err(Error::Config(format!(
                "expected {expected} pair latents for {n} outputs, got {}",
                self.latents.len()
            )));
        }
        let dim = self.dim();
        for (idx, l) in self.latents.iter().enumerate() {
            if l.first >= l.second || l.second >= n || Self::pair_index(n, l.first, l.second) != idx {
                return Err(Error::Config(format!(
                    "latent {idx} is registered for pair ({}, {}), which is missing or out of order",
                    l.first, l.second
                )));
            }
            l.kernel_first.validate()?;
            l.kernel_second.validate()?;
            if l.kernel_first.dim() != dim || l.kernel_second.dim() != dim {
                return Err(Error::Argument("kernels disagree on input dimension".into()));
            }
            if !l.scale.is_finite() {
                return Err(Error::Numerical("latent scale is not finite".into()));
            }
        }
        if let Some(s) = self.noise.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(Error::Argument(format!("noise must be positive, got {s}")));
        }
        Ok(())
    }

    /// Terms of the autocovariance of output `c`: one per latent touching `c`.
    pub fn marginal_terms(&self, c: usize) -> Vec<GaussianTerm> {
        self.latents
            .iter()
            .filter_map(|l| {
                if l.first == c {
                    Some(GaussianTerm::marginal(&l.kernel_first, l.scale))
                } else if l.second == c {
                    Some(GaussianTerm::marginal(&l.kernel_second, l.scale))
                } else {
                    None
                }
            })
            .collect()
    }

    pub fn cross_term(&self, a: usize, b: usize) -> GaussianTerm {
        let l = &self.latents[Self::pair_index(self.n_outputs(), a, b)];
        GaussianTerm::cross(&l.kernel_first, &l.kernel_second, l.scale)
    }
}

/// Noise-free covariance between outputs `a` and `b` at displacement `d`.
pub fn full_output_cov(params: &FullMgcpParams, a: usize, b: usize, d: &[f64]) -> Result<f64> {
    let n = params.n_outputs();
    if a >= n || b >= n {
        return Err(Error::Argument(format!("output index out of range for {n} outputs")));
    }
    if d.len() != params.dim() {
        return Err(Error::Argument("displacement dimension mismatch".into()));
    }
    if a == b {
        Ok(params.marginal_terms(a).iter().map(|t| t.eval(d)).sum())
    } else {
        Ok(params.cross_term(a, b).eval(d))
    }
}

/// Covariance of all stacked observations `[y_1; …; y_N]`, noise included.
pub fn assemble_full_cov(params: &FullMgcpParams, xs: &[Inputs]) -> Result<DMatrix<f64>> {
    params.validate()?;
    let n = params.n_outputs();
    if xs.len() != n {
        return Err(Error::Argument(format!("{} input sets for {n} outputs", xs.len())));
    }
    let dim = params.dim();
    for x in xs {
        check_inputs(x, dim, "X")?;
    }
    let offsets: Vec<usize> = xs
        .iter()
        .scan(0, |acc, x| {
            let o = *acc;
            *acc += x.nrows();
            Some(o)
        })
        .collect();
    let total: usize = xs.iter().map(|x| x.nrows()).sum();
    let mut c = DMatrix::zeros(total, total);
    for a in 0..n {
        let terms = params.marginal_terms(a);
        let block = fill_symmetric(&xs[a], |d| terms.iter().map(|t| t.eval(d)).sum());
        let p = xs[a].nrows();
        c.view_mut((offsets[a], offsets[a]), (p, p)).copy_from(&block);
        for r in 0..p {
            c[(offsets[a] + r, offsets[a] + r)] += params.noise[a] * params.noise[a];
        }
        for b in a + 1..n {
            let term = params.cross_term(a, b);
            let block = fill_block(&xs[a], &xs[b], |d| term.eval(d));
            let q = xs[b].nrows();
            c.view_mut((offsets[a], offsets[b]), (p, q)).copy_from(&block);
            c.view_mut((offsets[b], offsets[a]), (q, p))
                .copy_from(&block.transpose());
        }
    }
    if c.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("covariance matrix has non-finite entries".into()));
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::{assemble_bivariate_cov, BivariateParams};

    fn kernel(a: f64, l: f64) -> KernelSpec {
        KernelSpec::new(a, vec![l]).unwrap()
    }

    fn params(n: usize, scale: f64) -> FullMgcpParams {
        let mut latents = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                latents.push(PairLatent {
                    first: i,
                    second: j,
                    kernel_first: kernel(1.0 + 0.1 * i as f64, 0.5 + 0.2 * j as f64),
                    kernel_second: kernel(0.8 + 0.05 * j as f64, 1.1 + 0.1 * i as f64),
                    scale,
                });
            }
        }
        FullMgcpParams {
            latents,
            noise: (0..n).map(|i| 0.1 + 0.05 * i as f64).collect(),
        }
    }

    fn grid(p: usize, shift: f64) -> Inputs {
        Inputs::from_fn(p, 1, |r, _| r as f64 * 0.7 + shift)
    }

    #[test]
    fn pair_index_is_lexicographic() {
        let n = 5;
        let mut k = 0;
        for i in 0..n {
            for j in i + 1..n {
                assert_eq!(FullMgcpParams::pair_index(n, i, j), k);
                assert_eq!(FullMgcpParams::pair_index(n, j, i), k);
                k += 1;
            }
        }
    }

    #[test]
    fn two_outputs_match_bivariate_without_unique_latents() {
        let full = params(2, 0.9);
        let l = &full.latents[0];
        let biv = BivariateParams {
            shared_i: l.kernel_first.clone(),
            shared_j: l.kernel_second.clone(),
            unique_i: kernel(1.0, 1.0),
            unique_j: kernel(1.0, 1.0),
            xi0: l.scale,
            xi_i: 0.0,
            xi_j: 0.0,
            sigma_i: full.noise[0],
            sigma_j: full.noise[1],
        };
        let xs = [grid(3, 0.0), grid(4, 0.3)];
        let a = assemble_full_cov(&full, &xs).unwrap();
        let b = assemble_bivariate_cov(&biv, &xs[0], &xs[1]).unwrap();
        assert_eq!(a.shape(), b.shape());
        for (u, v) in a.iter().zip(b.iter()) {
            assert!((u - v).abs() <= 1e-15 * v.abs().max(1.0));
        }
    }

    #[test]
    fn zero_scales_leave_noise_only() {
        let full = params(3, 0.0);
        let xs = [grid(2, 0.0), grid(2, 1.0), grid(2, 2.0)];
        let c = assemble_full_cov(&full, &xs).unwrap();
        for r in 0..6 {
            for s in 0..6 {
                let expect = if r == s { full.noise[r / 2].powi(2) } else { 0.0 };
                assert_eq!(c[(r, s)], expect);
            }
        }
    }

    #[test]
    fn three_outputs_shape_and_symmetry() {
        let full = params(3, 1.2);
        let xs = [grid(2, 0.0), grid(2, 1.0), grid(2, 2.0)];
        let c = assemble_full_cov(&full, &xs).unwrap();
        assert_eq!(c.shape(), (6, 6));
        assert_eq!(c, c.transpose());
        assert!(c.clone().cholesky().is_some());
    }

    #[test]
    fn missing_pair_is_a_configuration_error() {
        let mut full = params(3, 1.0);
        full.latents.remove(1);
        let xs = [grid(2, 0.0), grid(2, 1.0), grid(2, 2.0)];
        assert!(matches!(assemble_full_cov(&full, &xs), Err(Error::Config(_))));
    }

    #[test]
    fn parameter_count_formula() {
        assert_eq!(FullMgcpParams::param_count(5, 1), 45);
        assert_eq!(FullMgcpParams::param_count(30, 1), 1770);
        assert_eq!(FullMgcpParams::param_count(50, 1), 4950);
    }
}
