//! Mapping between [`BivariateParams`] and the flat optimizer coordinates.
//!
//! Coordinate order (`D` = input dimension, bracketed blocks are optional):
//!
//! | block | length | meaning |
//! |---|---|---|
//! | `[shared_ratio]` | 1 | `ln(α_0i)`; `α_0j = 1/α_0i`. Absent when shared kernels are tied |
//! | `shared_i` | D | `ln Λ_0i` diagonal |
//! | `[shared_j]` | D | `ln Λ_0j` diagonal. Absent when tied |
//! | `unique_i` | 1 + D | `ln α_ii`, `ln Λ_ii` diagonal |
//! | `unique_j` | 1 + D | `ln α_jj`, `ln Λ_jj` diagonal |
//! | `noise` | 2 | `ln σ_i`, `ln σ_j` |
//! | `xi0` | 1 | raw `ξ₀` |
//! | `[unique_scales]` | 2 | raw `ξ_i`, `ξ_j`. Present only when freed |
//!
//! `ξ₀` only ever multiplies `α_0i α_0j` or `α_0c²`, so the product `α_0i α_0j` is pinned
//! to one. Without this the penalized objective could shrink `ξ₀` for free by inflating
//! both shared amplitudes.

use serde::{Deserialize, Serialize};

use crate::covariance::{BivariateParams, KernelSpec, OutputTag};
use crate::error::{Error, Result};

/// Raw (untransformed) parameter of a bivariate model, as used by
/// [`cov_param_derivative`](super::cov_param_derivative).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamId {
    Xi0,
    UniqueScale(OutputTag),
    Amplitude(KernelSlot),
    Lengthscale(KernelSlot, usize),
    Sigma(OutputTag),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelSlot {
    SharedI,
    SharedJ,
    UniqueI,
    UniqueJ,
}

impl KernelSlot {
    pub const ALL: [KernelSlot; 4] = [
        KernelSlot::SharedI,
        KernelSlot::SharedJ,
        KernelSlot::UniqueI,
        KernelSlot::UniqueJ,
    ];

    pub fn kernel(self, p: &BivariateParams) -> &KernelSpec {
        match self {
            KernelSlot::SharedI => &p.shared_i,
            KernelSlot::SharedJ => &p.shared_j,
            KernelSlot::UniqueI => &p.unique_i,
            KernelSlot::UniqueJ => &p.unique_j,
        }
    }

    pub fn kernel_mut(self, p: &mut BivariateParams) -> &mut KernelSpec {
        match self {
            KernelSlot::SharedI => &mut p.shared_i,
            KernelSlot::SharedJ => &mut p.shared_j,
            KernelSlot::UniqueI => &mut p.unique_i,
            KernelSlot::UniqueJ => &mut p.unique_j,
        }
    }

    pub fn output(self) -> OutputTag {
        match self {
            KernelSlot::SharedI | KernelSlot::UniqueI => OutputTag::I,
            KernelSlot::SharedJ | KernelSlot::UniqueJ => OutputTag::J,
        }
    }

    pub fn is_shared(self) -> bool {
        matches!(self, KernelSlot::SharedI | KernelSlot::SharedJ)
    }
}

/// Structural options of the bivariate parameterization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BivariateLayout {
    pub dim: usize,
    /// Optimize `ξ_i`, `ξ_j` instead of fixing them to one.
    pub free_unique_scales: bool,
    /// Use a single kernel for `K_0i` and `K_0j`.
    pub tie_shared_kernels: bool,
}

impl BivariateLayout {
    pub fn new(dim: usize) -> Self {
        BivariateLayout {
            dim,
            free_unique_scales: false,
            tie_shared_kernels: false,
        }
    }

    fn shared_len(&self) -> usize {
        if self.tie_shared_kernels {
            self.dim
        } else {
            1 + 2 * self.dim
        }
    }

    pub fn len(&self) -> usize {
        self.shared_len() + 2 * (1 + self.dim) + 2 + 1 + if self.free_unique_scales { 2 } else { 0 }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn unique_offset(&self, which: OutputTag) -> usize {
        self.shared_len()
            + match which {
                OutputTag::I => 0,
                OutputTag::J => 1 + self.dim,
            }
    }

    pub fn sigma_offset(&self) -> usize {
        self.shared_len() + 2 * (1 + self.dim)
    }

    /// Index of the raw `ξ₀` coordinate.
    pub fn xi0_index(&self) -> usize {
        self.sigma_offset() + 2
    }

    pub fn from_vector(&self, v: &[f64]) -> Result<BivariateParams> {
        if v.len() != self.len() {
            return Err(Error::Argument(format!(
                "parameter vector has length {} but the layout expects {}",
                v.len(),
                self.len()
            )));
        }
        let d = self.dim;
        let exp_all = |s: &[f64]| s.iter().map(|x| x.exp()).collect::<Vec<_>>();
        let (shared_i, shared_j) = if self.tie_shared_kernels {
            let k = KernelSpec {
                amplitude: 1.0,
                lengthscale_diag: exp_all(&v[..d]),
            };
            (k.clone(), k)
        } else {
            let ratio = v[0];
            (
                KernelSpec {
                    amplitude: ratio.exp(),
                    lengthscale_diag: exp_all(&v[1..1 + d]),
                },
                KernelSpec {
                    amplitude: (-ratio).exp(),
                    lengthscale_diag: exp_all(&v[1 + d..1 + 2 * d]),
                },
            )
        };
        let unique = |which| {
            let o = self.unique_offset(which);
            KernelSpec {
                amplitude: v[o].exp(),
                lengthscale_diag: exp_all(&v[o + 1..o + 1 + d]),
            }
        };
        let s = self.sigma_offset();
        let (xi_i, xi_j) = if self.free_unique_scales {
            (v[s + 3], v[s + 4])
        } else {
            (1.0, 1.0)
        };
        Ok(BivariateParams {
            shared_i,
            shared_j,
            unique_i: unique(OutputTag::I),
            unique_j: unique(OutputTag::J),
            xi0: v[s + 2],
            xi_i,
            xi_j,
            sigma_i: v[s].exp(),
            sigma_j: v[s + 1].exp(),
        })
    }

    /// Optimizer coordinates of `p`.
    ///
    /// Shared amplitudes are renormalized to unit product with the excess moved into
    /// `ξ₀`, which leaves every covariance value unchanged. Unique scales must be one
    /// unless they are free.
    pub fn to_vector(&self, p: &BivariateParams) -> Result<Vec<f64>> {
        p.validate()?;
        if p.dim() != self.dim {
            return Err(Error::Argument("parameter dimension does not match the layout".into()));
        }
        let (ai, aj) = (p.shared_i.amplitude, p.shared_j.amplitude);
        let (au, auj) = (p.unique_i.amplitude, p.unique_j.amplitude);
        if !(ai > 0.0 && aj > 0.0 && au > 0.0 && auj > 0.0) {
            return Err(Error::Argument("log-parameterized amplitudes must be positive".into()));
        }
        if !self.free_unique_scales && (p.xi_i != 1.0 || p.xi_j != 1.0) {
            return Err(Error::Argument(
                "unique latent scales are fixed to 1 in this layout".into(),
            ));
        }
        let ln_all = |s: &[f64]| s.iter().map(|x| x.ln()).collect::<Vec<_>>();
        let mut v = Vec::with_capacity(self.len());
        if self.tie_shared_kernels {
            if p.shared_i.lengthscale_diag != p.shared_j.lengthscale_diag || ai != aj {
                return Err(Error::Argument("shared kernels are tied but differ".into()));
            }
            v.extend(ln_all(&p.shared_i.lengthscale_diag));
        } else {
            v.push(0.5 * (ai / aj).ln());
            v.extend(ln_all(&p.shared_i.lengthscale_diag));
            v.extend(ln_all(&p.shared_j.lengthscale_diag));
        }
        for k in [&p.unique_i, &p.unique_j] {
            v.push(k.amplitude.ln());
            v.extend(ln_all(&k.lengthscale_diag));
        }
        v.push(p.sigma_i.ln());
        v.push(p.sigma_j.ln());
        v.push(p.xi0 * (ai * aj).sqrt());
        if self.free_unique_scales {
            v.push(p.xi_i);
            v.push(p.xi_j);
        }
        Ok(v)
    }

    /// Converts a gradient over raw parameters into one over optimizer coordinates.
    ///
    /// `raw` is queried once per raw parameter; its values are `∂f/∂θ` for the
    /// untransformed `θ` of `p`.
    pub fn chain_gradient<F: FnMut(ParamId) -> f64>(&self, p: &BivariateParams, mut raw: F) -> Vec<f64> {
        let d = self.dim;
        let mut g = Vec::with_capacity(self.len());
        let lam_grad = |raw: &mut F, slot: KernelSlot, c: usize| {
            slot.kernel(p).lengthscale_diag[c] * raw(ParamId::Lengthscale(slot, c))
        };
        if self.tie_shared_kernels {
            for c in 0..d {
                g.push(lam_grad(&mut raw, KernelSlot::SharedI, c) + lam_grad(&mut raw, KernelSlot::SharedJ, c));
            }
        } else {
            let gi = p.shared_i.amplitude * raw(ParamId::Amplitude(KernelSlot::SharedI));
            let gj = p.shared_j.amplitude * raw(ParamId::Amplitude(KernelSlot::SharedJ));
            g.push(gi - gj);
            for slot in [KernelSlot::SharedI, KernelSlot::SharedJ] {
                for c in 0..d {
                    g.push(lam_grad(&mut raw, slot, c));
                }
            }
        }
        for slot in [KernelSlot::UniqueI, KernelSlot::UniqueJ] {
            g.push(slot.kernel(p).amplitude * raw(ParamId::Amplitude(slot)));
            for c in 0..d {
                g.push(lam_grad(&mut raw, slot, c));
            }
        }
        g.push(p.sigma_i * raw(ParamId::Sigma(OutputTag::I)));
        g.push(p.sigma_j * raw(ParamId::Sigma(OutputTag::J)));
        g.push(raw(ParamId::Xi0));
        if self.free_unique_scales {
            g.push(raw(ParamId::UniqueScale(OutputTag::I)));
            g.push(raw(ParamId::UniqueScale(OutputTag::J)));
        }
        g
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn lengths() {
        assert_eq!(BivariateLayout::new(1).len(), 3 + 4 + 3);
        let mut l = BivariateLayout::new(2);
        l.tie_shared_kernels = true;
        l.free_unique_scales = true;
        assert_eq!(l.len(), 2 + 6 + 2 + 1 + 2);
    }

    #[test]
    fn renormalization_preserves_covariance() {
        let p = BivariateParams {
            shared_i: KernelSpec::new(2.0, vec![0.5]).unwrap(),
            shared_j: KernelSpec::new(0.3, vec![1.5]).unwrap(),
            unique_i: KernelSpec::new(1.0, vec![0.7]).unwrap(),
            unique_j: KernelSpec::new(0.4, vec![2.0]).unwrap(),
            xi0: 0.8,
            xi_i: 1.0,
            xi_j: 1.0,
            sigma_i: 0.1,
            sigma_j: 0.2,
        };
        let layout = BivariateLayout::new(1);
        let q = layout.from_vector(&layout.to_vector(&p).unwrap()).unwrap();
        assert!((q.shared_i.amplitude * q.shared_j.amplitude - 1.0).abs() < 1e-14);
        for d in [0.0, 0.4, 1.3] {
            for w in [OutputTag::I, OutputTag::J] {
                let a = p.marginal_cov(w, &[d]).unwrap();
                let b = q.marginal_cov(w, &[d]).unwrap();
                assert!((a - b).abs() < 1e-12 * a.abs().max(1.0));
            }
            let a = p.cross_cov(&[d]).unwrap();
            let b = q.cross_cov(&[d]).unwrap();
            assert!((a - b).abs() < 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn fixed_unique_scales_reject_other_values() {
        let layout = BivariateLayout::new(1);
        let mut p = layout.from_vector(&vec![0.1; layout.len()]).unwrap();
        p.xi_i = 2.0;
        assert!(layout.to_vector(&p).is_err());
    }

    proptest! {
        #[test]
        fn vector_round_trip(v in proptest::collection::vec(-2.0f64..2.0, 13), tie in any::<bool>(), free in any::<bool>()) {
            let layout = BivariateLayout { dim: 1, free_unique_scales: free, tie_shared_kernels: tie };
            let v = &v[..layout.len()];
            let p = layout.from_vector(v).unwrap();
            let back = layout.to_vector(&p).unwrap();
            for (a, b) in v.iter().zip(&back) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
