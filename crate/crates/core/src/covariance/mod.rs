//! Convolution-process covariance functions.
//!
//! Every output is a sum of Gaussian smoothing kernels convolved with white-noise
//! latent functions. Convolving two scaled Gaussian kernels gives another Gaussian
//! in the displacement `d = x - x'`, so every covariance here is a finite sum of
//! [`GaussianTerm`]s.

mod full;
pub mod quadrature;
mod separable;

pub use full::{assemble_full_cov, full_output_cov, FullMgcpParams, PairLatent};
pub use separable::{assemble_separable_cov, separable_cov, SeparableParams};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Input locations for one output, one row per observation.
pub type Inputs = DMatrix<f64>;

/// Relative jitter added to each output block's diagonal before factorization.
pub const JITTER: f64 = 1e-8;

/// Scaled Gaussian smoothing kernel `K(x) = α (4π)^{D/4} |Λ|^{-1/4} N(x | 0, Λ⁻¹)` with
/// diagonal `Λ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub amplitude: f64,
    /// Diagonal of `Λ` (inverse squared length-scales).
    pub lengthscale_diag: Vec<f64>,
}

impl KernelSpec {
    pub fn new(amplitude: f64, lengthscale_diag: Vec<f64>) -> Result<Self> {
        let k = KernelSpec {
            amplitude,
            lengthscale_diag,
        };
        k.validate()?;
        Ok(k)
    }

    /// Isotropic kernel in `dim` dimensions.
    pub fn isotropic(amplitude: f64, lengthscale: f64, dim: usize) -> Result<Self> {
        Self::new(amplitude, vec![lengthscale; dim])
    }

    pub fn dim(&self) -> usize {
        self.lengthscale_diag.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.lengthscale_diag.is_empty() {
            return Err(Error::Argument("kernel needs at least one dimension".into()));
        }
        if !self.amplitude.is_finite() {
            return Err(Error::Numerical(format!(
                "kernel amplitude is not finite: {}",
                self.amplitude
            )));
        }
        if let Some(v) = self.lengthscale_diag.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::Argument(format!(
                "length-scale entries must be positive and finite, got {v}"
            )));
        }
        Ok(())
    }
}

/// `weight · exp(-½ Σ_c precision_c d_c²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianTerm {
    pub weight: f64,
    pub precision: Vec<f64>,
}

impl GaussianTerm {
    /// Term produced by convolving two (possibly different) kernels through a latent
    /// function with scale `scale`.
    pub fn cross(a: &KernelSpec, b: &KernelSpec, scale: f64) -> Self {
        let dim = a.dim();
        let mut log_det = 0.0;
        let precision = a
            .lengthscale_diag
            .iter()
            .zip(&b.lengthscale_diag)
            .map(|(&la, &lb)| {
                log_det += 0.25 * (la.ln() + lb.ln()) - 0.5 * (la + lb).ln();
                la * lb / (la + lb)
            })
            .collect();
        let omega = 2f64.powf(dim as f64 / 2.0) * a.amplitude * b.amplitude * log_det.exp();
        GaussianTerm {
            weight: scale * scale * omega,
            precision,
        }
    }

    /// Self-convolution of one kernel: `scale² α² exp(-¼ dᵀΛd)`.
    pub fn marginal(k: &KernelSpec, scale: f64) -> Self {
        GaussianTerm {
            weight: scale * scale * k.amplitude * k.amplitude,
            precision: k.lengthscale_diag.iter().map(|l| 0.5 * l).collect(),
        }
    }

    #[inline]
    pub fn quad(&self, d: &[f64]) -> f64 {
        self.precision.iter().zip(d).map(|(p, x)| p * x * x).sum::<f64>()
    }

    #[inline]
    pub fn eval(&self, d: &[f64]) -> f64 {
        if self.weight == 0.0 {
            return 0.0;
        }
        self.weight * (-0.5 * self.quad(d)).exp()
    }
}

fn check_dims(a: &KernelSpec, b: &KernelSpec, d: &[f64]) -> Result<()> {
    if a.dim() != b.dim() || a.dim() != d.len() {
        return Err(Error::Argument(format!(
            "dimension mismatch: kernels have D={} and D={}, displacement has {}",
            a.dim(),
            b.dim(),
            d.len()
        )));
    }
    Ok(())
}

/// One summand `ξ² ω̃ exp(-½ dᵀ Φ⁻¹ d)` of the convolution covariance between outputs
/// smoothed by `kernel_a` and `kernel_b`.
pub fn cross_cov_term(kernel_a: &KernelSpec, kernel_b: &KernelSpec, scale: f64, d: &[f64]) -> Result<f64> {
    check_dims(kernel_a, kernel_b, d)?;
    Ok(GaussianTerm::cross(kernel_a, kernel_b, scale).eval(d))
}

/// Which output of a bivariate submodel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OutputTag {
    I,
    J,
}

impl OutputTag {
    pub fn other(self) -> OutputTag {
        match self {
            OutputTag::I => OutputTag::J,
            OutputTag::J => OutputTag::I,
        }
    }
}

/// Parameters of one pairwise submodel: a shared latent `X₀` smoothed by
/// `shared_i`/`shared_j`, and one unique latent per output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BivariateParams {
    pub shared_i: KernelSpec,
    pub shared_j: KernelSpec,
    pub unique_i: KernelSpec,
    pub unique_j: KernelSpec,
    pub xi0: f64,
    pub xi_i: f64,
    pub xi_j: f64,
    pub sigma_i: f64,
    pub sigma_j: f64,
}

impl BivariateParams {
    pub fn dim(&self) -> usize {
        self.shared_i.dim()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        for k in [&self.shared_i, &self.shared_j, &self.unique_i, &self.unique_j] {
            k.validate()?;
            if k.dim() != d {
                return Err(Error::Argument("kernels disagree on input dimension".into()));
            }
        }
        for (name, v) in [("xi0", self.xi0), ("xi_i", self.xi_i), ("xi_j", self.xi_j)] {
            if !v.is_finite() {
                return Err(Error::Numerical(format!("{name} is not finite")));
            }
        }
        for (name, v) in [("sigma_i", self.sigma_i), ("sigma_j", self.sigma_j)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Argument(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    pub fn shared(&self, which: OutputTag) -> &KernelSpec {
        match which {
            OutputTag::I => &self.shared_i,
            OutputTag::J => &self.shared_j,
        }
    }

    pub fn unique(&self, which: OutputTag) -> &KernelSpec {
        match which {
            OutputTag::I => &self.unique_i,
            OutputTag::J => &self.unique_j,
        }
    }

    pub fn unique_scale(&self, which: OutputTag) -> f64 {
        match which {
            OutputTag::I => self.xi_i,
            OutputTag::J => self.xi_j,
        }
    }

    pub fn sigma(&self, which: OutputTag) -> f64 {
        match which {
            OutputTag::I => self.sigma_i,
            OutputTag::J => self.sigma_j,
        }
    }

    /// Autocovariance of the noise-free output `which` at displacement `d`.
    pub fn marginal_cov(&self, which: OutputTag, d: &[f64]) -> Result<f64> {
        let shared = self.shared(which);
        let unique = self.unique(which);
        check_dims(shared, unique, d)?;
        Ok(MarginalTerms::new(self, which).eval(d))
    }

    /// Cross-covariance between the two noise-free outputs; only `X₀` contributes.
    pub fn cross_cov(&self, d: &[f64]) -> Result<f64> {
        cross_cov_term(&self.shared_i, &self.shared_j, self.xi0, d)
    }

    /// Covariance of the noisy observations `y_a(x)` and `y_b(x')`.
    pub fn output_cov(&self, a: OutputTag, b: OutputTag, x: &[f64], x_prime: &[f64]) -> Result<f64> {
        if x.len() != x_prime.len() {
            return Err(Error::Argument("input points differ in dimension".into()));
        }
        let d: Vec<f64> = x.iter().zip(x_prime).map(|(p, q)| p - q).collect();
        if a == b {
            let mut v = self.marginal_cov(a, &d)?;
            if x == x_prime {
                let s = self.sigma(a);
                v += s * s;
            }
            Ok(v)
        } else {
            self.cross_cov(&d)
        }
    }

    /// Drops the shared latent and keeps the univariate model of one output.
    pub fn restrict(&self, which: OutputTag) -> UnivariateParams {
        UnivariateParams {
            kernel: self.unique(which).clone(),
            scale: self.unique_scale(which),
            sigma: self.sigma(which),
        }
    }
}

/// The two Gaussian terms making up the autocovariance of one output.
#[derive(Debug, Clone)]
pub struct MarginalTerms {
    pub shared: GaussianTerm,
    pub unique: GaussianTerm,
}

impl MarginalTerms {
    pub fn new(p: &BivariateParams, which: OutputTag) -> Self {
        MarginalTerms {
            shared: GaussianTerm::marginal(p.shared(which), p.xi0),
            unique: GaussianTerm::marginal(p.unique(which), p.unique_scale(which)),
        }
    }

    #[inline]
    pub fn eval(&self, d: &[f64]) -> f64 {
        self.shared.eval(d) + self.unique.eval(d)
    }
}

/// Single-output squared-exponential model `scale² α² exp(-¼ dᵀΛd) + σ²δ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnivariateParams {
    pub kernel: KernelSpec,
    pub scale: f64,
    pub sigma: f64,
}

impl UnivariateParams {
    pub fn dim(&self) -> usize {
        self.kernel.dim()
    }

    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(Error::Argument(format!("sigma must be positive, got {}", self.sigma)));
        }
        if !self.scale.is_finite() {
            return Err(Error::Numerical("latent scale is not finite".into()));
        }
        Ok(())
    }

    pub fn term(&self) -> GaussianTerm {
        GaussianTerm::marginal(&self.kernel, self.scale)
    }

    pub fn prior_variance(&self) -> f64 {
        let a = self.scale * self.kernel.amplitude;
        a * a
    }
}

/// Writes `x_a[r] - x_b[s]` into `out`.
#[inline]
pub fn row_diff(xa: &Inputs, r: usize, xb: &Inputs, s: usize, out: &mut [f64]) {
    for (c, o) in out.iter_mut().enumerate() {
        *o = xa[(r, c)] - xb[(s, c)];
    }
}

/// Evaluates `f(d)` for every pair of rows, filling a `rows(xa) × rows(xb)` matrix.
pub fn fill_block<F: Fn(&[f64]) -> f64>(xa: &Inputs, xb: &Inputs, f: F) -> DMatrix<f64> {
    let mut d = vec![0.0; xa.ncols()];
    DMatrix::from_fn(xa.nrows(), xb.nrows(), |r, s| {
        row_diff(xa, r, xb, s, &mut d);
        f(&d)
    })
}

/// Symmetric variant of [`fill_block`]; only the upper triangle is evaluated.
pub fn fill_symmetric<F: Fn(&[f64]) -> f64>(x: &Inputs, f: F) -> DMatrix<f64> {
    let n = x.nrows();
    let mut m = DMatrix::zeros(n, n);
    let mut d = vec![0.0; x.ncols()];
    for r in 0..n {
        for s in r..n {
            row_diff(x, r, x, s, &mut d);
            let v = f(&d);
            m[(r, s)] = v;
            m[(s, r)] = v;
        }
    }
    m
}

pub(crate) fn check_inputs(x: &Inputs, dim: usize, what: &str) -> Result<()> {
    if x.ncols() != dim {
        return Err(Error::Argument(format!(
            "{what} has {} columns but the model has input dimension {dim}",
            x.ncols()
        )));
    }
    Ok(())
}

/// Covariance of the stacked observations `[y_i; y_j]`, noise included, jitter excluded.
pub fn assemble_bivariate_cov(params: &BivariateParams, x_i: &Inputs, x_j: &Inputs) -> Result<DMatrix<f64>> {
    params.validate()?;
    let dim = params.dim();
    check_inputs(x_i, dim, "X_i")?;
    check_inputs(x_j, dim, "X_j")?;
    let (pi, pj) = (x_i.nrows(), x_j.nrows());
    let mi = MarginalTerms::new(params, OutputTag::I);
    let mj = MarginalTerms::new(params, OutputTag::J);
    let cross = GaussianTerm::cross(&params.shared_i, &params.shared_j, params.xi0);

    let mut c = DMatrix::zeros(pi + pj, pi + pj);
    c.view_mut((0, 0), (pi, pi))
        .copy_from(&fill_symmetric(x_i, |d| mi.eval(d)));
    c.view_mut((pi, pi), (pj, pj))
        .copy_from(&fill_symmetric(x_j, |d| mj.eval(d)));
    let cij = fill_block(x_i, x_j, |d| cross.eval(d));
    c.view_mut((0, pi), (pi, pj)).copy_from(&cij);
    c.view_mut((pi, 0), (pj, pi)).copy_from(&cij.transpose());
    for r in 0..pi {
        c[(r, r)] += params.sigma_i * params.sigma_i;
    }
    for r in pi..pi + pj {
        c[(r, r)] += params.sigma_j * params.sigma_j;
    }
    if c.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("covariance matrix has non-finite entries".into()));
    }
    Ok(c)
}

/// Covariance of one output's noisy observations under a univariate model.
pub fn assemble_univariate_cov(params: &UnivariateParams, x: &Inputs) -> Result<DMatrix<f64>> {
    params.validate()?;
    check_inputs(x, params.dim(), "X")?;
    let term = params.term();
    let mut c = fill_symmetric(x, |d| term.eval(d));
    for r in 0..x.nrows() {
        c[(r, r)] += params.sigma * params.sigma;
    }
    Ok(c)
}

/// Adds `factor × mean(block diagonal)` to the diagonal of every output block.
///
/// Jitter is scaled per block so that a block-diagonal covariance factorizes exactly
/// like its blocks do on their own.
pub fn add_block_jitter(c: &mut DMatrix<f64>, block_sizes: &[usize], factor: f64) {
    let mut start = 0;
    for &len in block_sizes {
        if len == 0 {
            continue;
        }
        let mean = (start..start + len).map(|r| c[(r, r)]).sum::<f64>() / len as f64;
        let eps = factor * mean.abs();
        for r in start..start + len {
            c[(r, r)] += eps;
        }
        start += len;
    }
}
