use nalgebra::DMatrix;

use super::{check_pair, stack, PenaltyConfig};
use crate::covariance::{assemble_separable_cov, row_diff, Inputs, KernelSpec, SeparableParams};
use crate::data::OutputData;
use crate::error::{Error, Result};
use crate::linalg;

/// Penalized likelihood of the separable bivariate model.
///
/// Coordinates are `(ln α, ln λ[D], ln σ_i, ln σ_j, r)` with `t = tanh r`; the penalty
/// acts on `t`.
#[derive(Debug, Clone)]
pub struct SeparableProblem<'a> {
    pub data_i: &'a OutputData,
    pub data_j: &'a OutputData,
    pub penalty: PenaltyConfig,
}

impl<'a> SeparableProblem<'a> {
    pub fn new(data_i: &'a OutputData, data_j: &'a OutputData, penalty: PenaltyConfig) -> Result<Self> {
        check_pair(data_i, data_j)?;
        penalty.validate()?;
        if data_i.dim() != data_j.dim() {
            return Err(Error::Argument("outputs disagree on input dimension".into()));
        }
        Ok(SeparableProblem {
            data_i,
            data_j,
            penalty,
        })
    }

    fn dim(&self) -> usize {
        self.data_i.dim()
    }

    pub fn len(&self) -> usize {
        self.dim() + 4
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn from_vector(&self, v: &[f64]) -> Result<SeparableParams> {
        if v.len() != self.len() {
            return Err(Error::Argument("parameter vector has the wrong length".into()));
        }
        let d = self.dim();
        Ok(SeparableParams {
            t: v[d + 3].tanh(),
            base_kernel: KernelSpec {
                amplitude: v[0].exp(),
                lengthscale_diag: v[1..=d].iter().map(|x| x.exp()).collect(),
            },
            noise: [v[d + 1].exp(), v[d + 2].exp()],
        })
    }

    pub fn to_vector(&self, p: &SeparableParams) -> Result<Vec<f64>> {
        p.validate()?;
        if p.base_kernel.dim() != self.dim() || p.base_kernel.amplitude <= 0.0 {
            return Err(Error::Argument("parameters do not fit this problem".into()));
        }
        let mut v = vec![p.base_kernel.amplitude.ln()];
        v.extend(p.base_kernel.lengthscale_diag.iter().map(|x| x.ln()));
        v.push(p.noise[0].ln());
        v.push(p.noise[1].ln());
        v.push(p.t.atanh());
        Ok(v)
    }

    fn stacked_inputs(&self) -> Inputs {
        let (pi, pj, d) = (self.data_i.len(), self.data_j.len(), self.dim());
        DMatrix::from_fn(pi + pj, d, |r, c| {
            if r < pi {
                self.data_i.x[(r, c)]
            } else {
                self.data_j.x[(r - pi, c)]
            }
        })
    }

    pub fn value(&self, v: &[f64]) -> Result<f64> {
        let p = self.from_vector(v)?;
        let c = assemble_separable_cov(&p, &self.data_i.x, &self.data_j.x)?;
        let ch = linalg::factorize(&c, &[self.data_i.len(), self.data_j.len()])?;
        let y = stack(&self.data_i.y, &self.data_j.y);
        Ok(linalg::gaussian_nll(&ch, &y).0 + self.penalty.smoothed(p.t).0)
    }

    pub fn value_and_grad(&self, v: &[f64]) -> Result<(f64, Vec<f64>)> {
        let p = self.from_vector(v)?;
        let c = assemble_separable_cov(&p, &self.data_i.x, &self.data_j.x)?;
        let pi = self.data_i.len();
        let sizes = [pi, self.data_j.len()];
        let (ch, jitter) = linalg::factorize_jittered(&c, &sizes)?;
        let y = stack(&self.data_i.y, &self.data_j.y);
        let (value, alpha) = linalg::gaussian_nll(&ch, &y);
        let w = linalg::gradient_weights(&ch, &alpha, &sizes, jitter);
        let x = self.stacked_inputs();
        let base = p.base_term();
        let dim = self.dim();
        let n = x.nrows();
        let mut g = vec![0.0; self.len()];
        let mut d = vec![0.0; dim];
        for r in 0..n {
            for s in 0..n {
                row_diff(&x, r, &x, s, &mut d);
                let k = base.eval(&d);
                let same = (r < pi) == (s < pi);
                let wk = 0.5 * w[(r, s)] * k;
                let tk = if same { wk } else { p.t * wk };
                g[0] += 2.0 * tk;
                for c in 0..dim {
                    g[1 + c] += -0.25 * p.base_kernel.lengthscale_diag[c] * d[c] * d[c] * tk;
                }
                if !same {
                    g[dim + 3] += (1.0 - p.t * p.t) * wk;
                }
            }
        }
        let trace = |lo: usize, hi: usize| (lo..hi).map(|r| w[(r, r)]).sum::<f64>();
        g[dim + 1] = p.noise[0] * p.noise[0] * trace(0, pi);
        g[dim + 2] = p.noise[1] * p.noise[1] * trace(pi, n);
        let (pv, pg) = self.penalty.smoothed(p.t);
        g[dim + 3] += pg * (1.0 - p.t * p.t);
        Ok((value + pv, g))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::likelihood::PenaltyKind;

    #[test]
    fn gradient_matches_finite_differences() {
        let xi: Vec<f64> = (0..5).map(|i| 0.6 * i as f64).collect();
        let yi: Vec<f64> = xi.iter().map(|x| x.sin()).collect();
        let xj: Vec<f64> = (0..4).map(|i| 0.3 + 0.7 * i as f64).collect();
        let yj: Vec<f64> = xj.iter().map(|x| 0.8 * x.sin() + 0.1).collect();
        let di = OutputData::from_1d("i", &xi, &yi).unwrap();
        let dj = OutputData::from_1d("j", &xj, &yj).unwrap();
        for kind in [PenaltyKind::None, PenaltyKind::L1, PenaltyKind::Scad] {
            let prob = SeparableProblem::new(&di, &dj, PenaltyConfig::new(kind, 0.4)).unwrap();
            let v = vec![0.1, -0.3, -1.2, -1.0, 0.35];
            let (f, g) = prob.value_and_grad(&v).unwrap();
            assert!((f - prob.value(&v).unwrap()).abs() < 1e-12);
            for k in 0..v.len() {
                let h = 1e-5;
                let mut a = v.clone();
                let mut b = v.clone();
                a[k] += h;
                b[k] -= h;
                let fd = (prob.value(&a).unwrap() - prob.value(&b).unwrap()) / (2.0 * h);
                assert!(
                    (fd - g[k]).abs() < 1e-5 * g[k].abs().max(1e-2),
                    "{kind} {k}: {fd} vs {}",
                    g[k]
                );
            }
        }
    }
}
