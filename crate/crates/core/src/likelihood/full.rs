use nalgebra::{DMatrix, DVector};

use super::cross_log_lengthscale_slope;
use crate::covariance::{assemble_full_cov, row_diff, FullMgcpParams, GaussianTerm, Inputs, KernelSpec, PairLatent};
use crate::data::OutputData;
use crate::error::{Error, Result};
use crate::linalg;

/// Optimizer coordinates of the full model: per latent `(ln α, ln λ[D])` for both of
/// its kernels, then `ln σ` per output. Latent scales are fixed to one.
pub fn full_layout_len(n_outputs: usize, dim: usize) -> usize {
    FullMgcpParams::param_count(n_outputs, dim)
}

fn offsets(data: &[OutputData]) -> Vec<usize> {
    let mut o = Vec::with_capacity(data.len());
    let mut acc = 0;
    for d in data {
        o.push(acc);
        acc += d.len();
    }
    o
}

fn stacked_y(data: &[OutputData]) -> DVector<f64> {
    DVector::from_iterator(
        data.iter().map(|d| d.len()).sum(),
        data.iter().flat_map(|d| d.y.iter().copied()),
    )
}

fn inputs(data: &[OutputData]) -> Vec<Inputs> {
    data.iter().map(|d| d.x.clone()).collect()
}

pub fn full_nll(params: &FullMgcpParams, data: &[OutputData]) -> Result<f64> {
    let c = assemble_full_cov(params, &inputs(data))?;
    let sizes: Vec<usize> = data.iter().map(|d| d.len()).collect();
    let ch = linalg::factorize(&c, &sizes)?;
    Ok(linalg::gaussian_nll(&ch, &stacked_y(data)).0)
}

/// Accumulates `½ Σ W ∘ ∂C` over one symmetric diagonal block for the log amplitude
/// and log length-scales of `k`; writes into `g[0..=D]`.
fn diagonal_block_grad(w: &DMatrix<f64>, off: usize, x: &Inputs, k: &KernelSpec, scale: f64, g: &mut [f64]) {
    let t = GaussianTerm::marginal(k, scale);
    let dim = x.ncols();
    let mut d = vec![0.0; dim];
    for r in 0..x.nrows() {
        for s in 0..x.nrows() {
            row_diff(x, r, x, s, &mut d);
            let m = t.eval(&d);
            let wm = 0.5 * w[(off + r, off + s)] * m;
            g[0] += 2.0 * wm;
            for c in 0..dim {
                g[1 + c] += -0.25 * k.lengthscale_diag[c] * d[c] * d[c] * wm;
            }
        }
    }
}

/// Gradient of [`full_nll`] in the coordinates of [`full_layout_len`].
pub fn full_nll_grad(params: &FullMgcpParams, data: &[OutputData]) -> Result<(f64, Vec<f64>)> {
    let c = assemble_full_cov(params, &inputs(data))?;
    let sizes: Vec<usize> = data.iter().map(|d| d.len()).collect();
    let (ch, jitter) = linalg::factorize_jittered(&c, &sizes)?;
    let (value, alpha) = linalg::gaussian_nll(&ch, &stacked_y(data));
    let w = linalg::gradient_weights(&ch, &alpha, &sizes, jitter);
    let off = offsets(data);
    let dim = params.dim();
    let per = 2 * (1 + dim);
    let mut g = vec![0.0; full_layout_len(params.n_outputs(), dim)];
    for (idx, l) in params.latents.iter().enumerate() {
        let base = idx * per;
        let (a, b) = (l.first, l.second);
        diagonal_block_grad(
            &w,
            off[a],
            &data[a].x,
            &l.kernel_first,
            l.scale,
            &mut g[base..base + 1 + dim],
        );
        diagonal_block_grad(
            &w,
            off[b],
            &data[b].x,
            &l.kernel_second,
            l.scale,
            &mut g[base + 1 + dim..base + per],
        );
        let t = GaussianTerm::cross(&l.kernel_first, &l.kernel_second, l.scale);
        let (xa, xb) = (&data[a].x, &data[b].x);
        let mut d = vec![0.0; dim];
        for r in 0..xa.nrows() {
            for s in 0..xb.nrows() {
                row_diff(xa, r, xb, s, &mut d);
                // the block and its transpose contribute equally
                let wt = w[(off[a] + r, off[b] + s)] * t.eval(&d);
                g[base] += wt;
                g[base + 1 + dim] += wt;
                for c in 0..dim {
                    let (la, lb) = (l.kernel_first.lengthscale_diag[c], l.kernel_second.lengthscale_diag[c]);
                    g[base + 1 + c] += wt * la * cross_log_lengthscale_slope(la, lb, d[c]);
                    g[base + 2 + dim + c] += wt * lb * cross_log_lengthscale_slope(lb, la, d[c]);
                }
            }
        }
    }
    let so = params.latents.len() * per;
    for (a, s) in params.noise.iter().enumerate() {
        let tr: f64 = (0..data[a].len()).map(|r| w[(off[a] + r, off[a] + r)]).sum();
        g[so + a] = s * s * tr;
    }
    Ok((value, g))
}

/// Maximum-likelihood objective of the full model over log coordinates.
#[derive(Debug, Clone)]
pub struct FullProblem<'a> {
    pub data: &'a [OutputData],
    dim: usize,
}

impl<'a> FullProblem<'a> {
    pub fn new(data: &'a [OutputData]) -> Result<Self> {
        if data.len() < 2 {
            return Err(Error::Config("full model needs at least two outputs".into()));
        }
        if data.iter().any(|d| d.is_empty()) {
            return Err(Error::Argument("every output needs at least one observation".into()));
        }
        let dim = data[0].dim();
        if data.iter().any(|d| d.dim() != dim) {
            return Err(Error::Argument("outputs disagree on input dimension".into()));
        }
        Ok(FullProblem { data, dim })
    }

    pub fn len(&self) -> usize {
        full_layout_len(self.data.len(), self.dim)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn from_vector(&self, v: &[f64]) -> Result<FullMgcpParams> {
        if v.len() != self.len() {
            return Err(Error::Argument("parameter vector has the wrong length".into()));
        }
        let (n, dim) = (self.data.len(), self.dim);
        let per = 2 * (1 + dim);
        let kernel = |s: &[f64]| KernelSpec {
            amplitude: s[0].exp(),
            lengthscale_diag: s[1..].iter().map(|x| x.exp()).collect(),
        };
        let mut latents = Vec::with_capacity(n * (n - 1) / 2);
        let mut idx = 0;
        for a in 0..n {
            for b in a + 1..n {
                let s = &v[idx * per..(idx + 1) * per];
                latents.push(PairLatent {
                    first: a,
                    second: b,
                    kernel_first: kernel(&s[..1 + dim]),
                    kernel_second: kernel(&s[1 + dim..]),
                    scale: 1.0,
                });
                idx += 1;
            }
        }
        let noise = v[idx * per..].iter().map(|x| x.exp()).collect();
        Ok(FullMgcpParams { latents, noise })
    }

    pub fn to_vector(&self, p: &FullMgcpParams) -> Result<Vec<f64>> {
        p.validate()?;
        if p.n_outputs() != self.data.len() || p.dim() != self.dim {
            return Err(Error::Argument("parameters do not fit this problem".into()));
        }
        let mut v = Vec::with_capacity(self.len());
        for l in &p.latents {
            for k in [&l.kernel_first, &l.kernel_second] {
                if k.amplitude <= 0.0 {
                    return Err(Error::Argument("log-parameterized amplitudes must be positive".into()));
                }
                // the latent scale is split evenly between the two kernels
                v.push((k.amplitude * l.scale.abs().sqrt()).ln());
                v.extend(k.lengthscale_diag.iter().map(|x| x.ln()));
            }
        }
        v.extend(p.noise.iter().map(|s| s.ln()));
        Ok(v)
    }

    pub fn value(&self, v: &[f64]) -> Result<f64> {
        full_nll(&self.from_vector(v)?, self.data)
    }

    pub fn value_and_grad(&self, v: &[f64]) -> Result<(f64, Vec<f64>)> {
        full_nll_grad(&self.from_vector(v)?, self.data)
    }
}
