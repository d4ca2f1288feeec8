use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smoothing constant in `|ξ| ≈ √(ξ² + ε)`.
pub const SMOOTHING_EPS: f64 = 1e-8;

/// Conventional SCAD concavity parameter.
pub const DEFAULT_SCAD_GAMMA: f64 = 3.7;

pub const DEFAULT_BRIDGE_EXPONENT: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PenaltyKind {
    None,
    Ridge,
    L1,
    Bridge,
    Scad,
}

impl PenaltyKind {
    /// Penalties whose minimizers can sit exactly at zero.
    pub fn is_sparse(self) -> bool {
        matches!(self, PenaltyKind::L1 | PenaltyKind::Bridge | PenaltyKind::Scad)
    }
}

impl std::str::FromStr for PenaltyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(PenaltyKind::None),
            "ridge" => Ok(PenaltyKind::Ridge),
            "l1" | "lasso" => Ok(PenaltyKind::L1),
            "bridge" => Ok(PenaltyKind::Bridge),
            "scad" => Ok(PenaltyKind::Scad),
            other => Err(Error::Argument(format!("unknown penalty '{other}'"))),
        }
    }
}

impl std::fmt::Display for PenaltyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            PenaltyKind::None => "none",
            PenaltyKind::Ridge => "ridge",
            PenaltyKind::L1 => "l1",
            PenaltyKind::Bridge => "bridge",
            PenaltyKind::Scad => "scad",
        };
        f.write_str(s)
    }
}

/// Penalty on the shared-latent scale `ξ₀`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyConfig {
    pub kind: PenaltyKind,
    pub lambda: f64,
    pub gamma: f64,
    pub bridge_exponent: f64,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        PenaltyConfig {
            kind: PenaltyKind::None,
            lambda: 0.0,
            gamma: DEFAULT_SCAD_GAMMA,
            bridge_exponent: DEFAULT_BRIDGE_EXPONENT,
        }
    }
}

impl PenaltyConfig {
    pub fn new(kind: PenaltyKind, lambda: f64) -> Self {
        PenaltyConfig {
            kind,
            lambda,
            ..Default::default()
        }
    }

    pub fn none() -> Self {
        Self::default()
    }

    pub fn with_lambda(self, lambda: f64) -> Self {
        PenaltyConfig { lambda, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::Config(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if self.kind == PenaltyKind::Scad && !(self.gamma > 2.0) {
            return Err(Error::Config(format!("SCAD gamma must exceed 2, got {}", self.gamma)));
        }
        if self.kind == PenaltyKind::Bridge && !(self.bridge_exponent > 0.0 && self.bridge_exponent < 1.0) {
            return Err(Error::Config(format!(
                "bridge exponent must lie in (0, 1), got {}",
                self.bridge_exponent
            )));
        }
        Ok(())
    }

    /// Whether fitted `ξ₀` values are hard-thresholded to zero after optimization.
    pub fn thresholds(&self) -> bool {
        self.kind.is_sparse() && self.lambda > 0.0
    }

    /// `P_λ(t)` for a magnitude `t >= 0`.
    fn of_magnitude(&self, t: f64) -> f64 {
        let lam = self.lambda;
        match self.kind {
            PenaltyKind::None => 0.0,
            PenaltyKind::Ridge => lam * t * t,
            PenaltyKind::L1 => lam * t,
            PenaltyKind::Bridge => lam * t.powf(self.bridge_exponent),
            PenaltyKind::Scad => {
                let g = self.gamma;
                if t <= lam {
                    lam * t
                } else if t <= g * lam {
                    -(t * t - 2.0 * g * lam * t + lam * lam) / (2.0 * (g - 1.0))
                } else {
                    lam * lam * (g + 1.0) / 2.0
                }
            }
        }
    }

    /// `dP_λ/dt` for `t > 0`.
    fn magnitude_derivative(&self, t: f64) -> f64 {
        let lam = self.lambda;
        match self.kind {
            PenaltyKind::None => 0.0,
            PenaltyKind::Ridge => 2.0 * lam * t,
            PenaltyKind::L1 => lam,
            PenaltyKind::Bridge => lam * self.bridge_exponent * t.powf(self.bridge_exponent - 1.0),
            PenaltyKind::Scad => {
                let g = self.gamma;
                if t <= lam {
                    lam
                } else if t <= g * lam {
                    (g * lam - t) / (g - 1.0)
                } else {
                    0.0
                }
            }
        }
    }

    /// Smooth surrogate used by the optimizer, with its derivative in `ξ₀`.
    ///
    /// Ridge is already smooth and is returned exactly. The other kinds evaluate the
    /// penalty at `m = √(ξ² + ε)` and subtract its value at `ξ = 0`.
    pub fn smoothed(&self, xi0: f64) -> (f64, f64) {
        match self.kind {
            PenaltyKind::None => (0.0, 0.0),
            PenaltyKind::Ridge => (self.lambda * xi0 * xi0, 2.0 * self.lambda * xi0),
            _ => {
                let m = (xi0 * xi0 + SMOOTHING_EPS).sqrt();
                let base = self.of_magnitude(SMOOTHING_EPS.sqrt());
                let value = self.of_magnitude(m) - base;
                let grad = self.magnitude_derivative(m) * xi0 / m;
                (value, grad)
            }
        }
    }
}

/// Exact penalty `P_λ(|ξ₀|)`.
pub fn penalty(cfg: &PenaltyConfig, xi0: f64) -> f64 {
    cfg.of_magnitude(xi0.abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ridge_value() {
        assert_eq!(penalty(&PenaltyConfig::new(PenaltyKind::Ridge, 2.0), 3.0), 18.0);
    }

    #[test]
    fn scad_linear_and_flat_regions() {
        let cfg = PenaltyConfig::new(PenaltyKind::Scad, 1.0);
        assert_eq!(cfg.gamma, 3.7);
        assert_eq!(penalty(&cfg, 0.5), 0.5);
        assert!((penalty(&cfg, 10.0) - 2.35).abs() < 1e-12);
        assert!((penalty(&cfg, -10.0) - 2.35).abs() < 1e-12);
    }

    #[test]
    fn scad_is_continuous_at_the_knots() {
        let cfg = PenaltyConfig::new(PenaltyKind::Scad, 0.8);
        for knot in [cfg.lambda, cfg.gamma * cfg.lambda] {
            let below = penalty(&cfg, knot - 1e-9);
            let above = penalty(&cfg, knot + 1e-9);
            assert!((below - above).abs() < 1e-8, "{below} vs {above}");
        }
    }

    #[test]
    fn l1_smoothed_gradient() {
        let (_, g) = PenaltyConfig::new(PenaltyKind::L1, 1.0).smoothed(0.1);
        assert!((g - 1.0).abs() < 1e-5, "{g}");
    }

    #[test]
    fn smoothed_penalty_vanishes_at_zero() {
        for kind in [
            PenaltyKind::L1,
            PenaltyKind::Bridge,
            PenaltyKind::Scad,
            PenaltyKind::Ridge,
        ] {
            let (v, g) = PenaltyConfig::new(kind, 1.3).smoothed(0.0);
            assert_eq!(v, 0.0);
            assert_eq!(g, 0.0);
        }
    }

    #[test]
    fn zero_lambda_is_no_penalty() {
        for kind in [
            PenaltyKind::L1,
            PenaltyKind::Bridge,
            PenaltyKind::Scad,
            PenaltyKind::Ridge,
        ] {
            let cfg = PenaltyConfig::new(kind, 0.0);
            assert_eq!(cfg.smoothed(0.7), (0.0, 0.0));
            assert_eq!(penalty(&cfg, 0.7), 0.0);
        }
    }

    #[test]
    fn invalid_configs() {
        let mut c = PenaltyConfig::new(PenaltyKind::Scad, 1.0);
        c.gamma = 2.0;
        assert!(c.validate().is_err());
        let mut b = PenaltyConfig::new(PenaltyKind::Bridge, 1.0);
        b.bridge_exponent = 1.0;
        assert!(b.validate().is_err());
        assert!(PenaltyConfig::new(PenaltyKind::L1, -1.0).validate().is_err());
        assert!("elastic".parse::<PenaltyKind>().is_err());
    }

    proptest! {
        #[test]
        fn penalties_are_nonnegative_and_monotone(kind_idx in 0usize..5, lambda in 0.0f64..5.0, a in -10.0f64..10.0, b in -10.0f64..10.0) {
            let kind = [PenaltyKind::None, PenaltyKind::Ridge, PenaltyKind::L1, PenaltyKind::Bridge, PenaltyKind::Scad][kind_idx];
            let cfg = PenaltyConfig::new(kind, lambda);
            let (lo, hi) = if a.abs() <= b.abs() { (a, b) } else { (b, a) };
            prop_assert!(penalty(&cfg, lo) >= 0.0);
            prop_assert!(penalty(&cfg, lo) <= penalty(&cfg, hi) + 1e-12);
            prop_assert_eq!(penalty(&cfg, 0.0), 0.0);
            let (slo, _) = cfg.smoothed(lo);
            let (shi, _) = cfg.smoothed(hi);
            prop_assert!(slo >= 0.0 && slo <= shi + 1e-12);
        }

        #[test]
        fn smoothed_derivative_matches_finite_difference(kind_idx in 0usize..4, lambda in 0.05f64..3.0, xi in -4.0f64..4.0) {
            let kind = [PenaltyKind::Ridge, PenaltyKind::L1, PenaltyKind::Bridge, PenaltyKind::Scad][kind_idx];
            let cfg = PenaltyConfig::new(kind, lambda);
            let h = 1e-6;
            // keep away from the SCAD knots where the derivative jumps in slope
            prop_assume!(kind != PenaltyKind::Scad || ((xi.abs() - lambda).abs() > 1e-3 && (xi.abs() - cfg.gamma * lambda).abs() > 1e-3));
            let fd = (cfg.smoothed(xi + h).0 - cfg.smoothed(xi - h).0) / (2.0 * h);
            let (_, g) = cfg.smoothed(xi);
            prop_assert!((fd - g).abs() <= 1e-5 * g.abs().max(1.0), "fd {} analytic {}", fd, g);
        }
    }
}
