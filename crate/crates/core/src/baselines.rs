//! Reference models: independent univariate GPs, the full joint model, and a
//! separable bivariate model with a penalized between-output correlation.

use crate::covariance::{FullMgcpParams, KernelSpec, PairLatent, SeparableParams, UnivariateParams};
use crate::data::OutputData;
use crate::error::{Error, Result};
use crate::likelihood::{FullProblem, PenaltyConfig, SeparableProblem, UnivariateProblem};
use crate::optimizer::{initial_lengthscales, minimize, output_scale, FitResult, OptimizerConfig, XI0_THRESHOLD};

/// Largest total number of observations accepted by [`fit_full_mgcp`].
pub const FULL_MGCP_MAX_POINTS: usize = 500;

/// Maximum-likelihood fit of an independent squared-exponential GP to one output.
pub fn fit_gcp(data: &OutputData, cfg: &OptimizerConfig) -> Result<FitResult<UnivariateParams>> {
    if data.len() < 2 {
        return Err(Error::Argument(format!(
            "output '{}' needs at least two observations",
            data.id
        )));
    }
    let s = output_scale(data)?;
    let init = UnivariateParams {
        kernel: KernelSpec {
            amplitude: s,
            lengthscale_diag: initial_lengthscales(&[data]),
        },
        scale: 1.0,
        sigma: 0.1 * s,
    };
    let problem = UnivariateProblem::new(data)?;
    let m = minimize(|v| problem.value_and_grad(v), &problem.to_vector(&init)?, cfg)?;
    Ok(FitResult {
        params: problem.from_vector(&m.x)?,
        objective: m.value,
        converged: m.converged,
        trace: m.trace,
        lambda_used: 0.0,
        xi0_zeroed: false,
    })
}

/// Rejects joint fits beyond [`FULL_MGCP_MAX_POINTS`] observations.
pub fn check_full_size(outputs: &[OutputData]) -> Result<()> {
    let total: usize = outputs.iter().map(|o| o.len()).sum();
    if total > FULL_MGCP_MAX_POINTS {
        return Err(Error::Size(format!(
            "full model over {total} observations exceeds the limit of {FULL_MGCP_MAX_POINTS}"
        )));
    }
    Ok(())
}

/// Starting point for the joint fit: every output's variance is split evenly over
/// the `N - 1` latents touching it.
pub fn initialize_full(outputs: &[OutputData]) -> Result<FullMgcpParams> {
    let n = outputs.len();
    if n < 2 {
        return Err(Error::Config("full model needs at least two outputs".into()));
    }
    let scales = outputs.iter().map(output_scale).collect::<Result<Vec<_>>>()?;
    let refs: Vec<&OutputData> = outputs.iter().collect();
    let lam = initial_lengthscales(&refs);
    let share = ((n - 1) as f64).sqrt();
    let kernel = |a: usize| KernelSpec {
        amplitude: scales[a] / share,
        lengthscale_diag: lam.clone(),
    };
    let mut latents = Vec::with_capacity(n * (n - 1) / 2);
    for a in 0..n {
        for b in a + 1..n {
            latents.push(PairLatent {
                first: a,
                second: b,
                kernel_first: kernel(a),
                kernel_second: kernel(b),
                scale: 1.0,
            });
        }
    }
    Ok(FullMgcpParams {
        latents,
        noise: scales.iter().map(|s| 0.1 * s).collect(),
    })
}

/// Joint maximum-likelihood fit of the full model over all outputs.
pub fn fit_full_mgcp(outputs: &[OutputData], cfg: &OptimizerConfig) -> Result<FitResult<FullMgcpParams>> {
    check_full_size(outputs)?;
    if let Some(o) = outputs.iter().find(|o| o.len() < 2) {
        return Err(Error::Argument(format!(
            "output '{}' needs at least two observations",
            o.id
        )));
    }
    let problem = FullProblem::new(outputs)?;
    let init = initialize_full(outputs)?;
    let x0 = problem.to_vector(&init)?;
    debug_assert_eq!(x0.len(), FullMgcpParams::param_count(outputs.len(), outputs[0].dim()));
    let m = minimize(|v| problem.value_and_grad(v), &x0, cfg)?;
    Ok(FitResult {
        params: problem.from_vector(&m.x)?,
        objective: m.value,
        converged: m.converged,
        trace: m.trace,
        lambda_used: 0.0,
        xi0_zeroed: false,
    })
}

/// Initial between-output correlation of the separable fit.
const SEPARABLE_INIT_T: f64 = 0.5;

/// Penalized fit of the separable model. `xi0_zeroed` reports a thresholded correlation.
pub fn fit_separable(
    data_i: &OutputData,
    data_j: &OutputData,
    penalty: &PenaltyConfig,
    cfg: &OptimizerConfig,
) -> Result<FitResult<SeparableParams>> {
    if data_i.len() < 2 || data_j.len() < 2 {
        return Err(Error::Argument(
            "each output of a pair needs at least two observations".into(),
        ));
    }
    let (si, sj) = (output_scale(data_i)?, output_scale(data_j)?);
    let init = SeparableParams {
        t: SEPARABLE_INIT_T,
        base_kernel: KernelSpec {
            amplitude: (si * sj).sqrt(),
            lengthscale_diag: initial_lengthscales(&[data_i, data_j]),
        },
        noise: [0.1 * si, 0.1 * sj],
    };
    let problem = SeparableProblem::new(data_i, data_j, *penalty)?;
    let m = minimize(|v| problem.value_and_grad(v), &problem.to_vector(&init)?, cfg)?;
    let mut params = problem.from_vector(&m.x)?;
    let mut zeroed = false;
    if penalty.thresholds() && params.t.abs() < XI0_THRESHOLD {
        params.t = 0.0;
        zeroed = true;
    }
    let objective = if zeroed {
        problem.value(&problem.to_vector(&params)?)?
    } else {
        m.value
    };
    Ok(FitResult {
        params,
        objective,
        converged: m.converged,
        trace: m.trace,
        lambda_used: penalty.lambda,
        xi0_zeroed: zeroed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::BivariateParams;
    use crate::likelihood::{full_nll, nll, PenaltyKind};
    use crate::simulate::gen_setting1;

    #[test]
    fn gcp_interpolates_noise_free_quadratic() {
        let xs: Vec<f64> = (0..15).map(|k| k as f64 / 14.0 * 3.0).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 1.0 + x * x).collect();
        let d = OutputData::from_1d("q", &xs, &ys).unwrap();
        let cfg = OptimizerConfig {
            restarts: 2,
            ..Default::default()
        };
        let fit = fit_gcp(&d, &cfg).unwrap();
        let pred = crate::predict::UnivariatePredictor::new(&fit.params, &d).unwrap();
        let err: f64 = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| (pred.predict(&[*x]).unwrap().mean - y).abs())
            .sum::<f64>()
            / 15.0;
        assert!(err < 1e-2, "{err}");
        assert_eq!(fit_gcp(&d, &cfg).unwrap(), fit);
    }

    #[test]
    fn gcp_rejects_constant_output() {
        let d = OutputData::from_1d("c", &[0.0, 1.0, 2.0], &[3.0; 3]).unwrap();
        assert!(matches!(
            fit_gcp(&d, &OptimizerConfig::default()),
            Err(Error::DegenerateData(_))
        ));
    }

    #[test]
    fn full_fit_parameter_vector_length() {
        let s = gen_setting1(5, 10, 0.1, 1).unwrap();
        let problem = FullProblem::new(&s.dataset.outputs).unwrap();
        assert_eq!(problem.len(), 45);
        assert_eq!(FullMgcpParams::param_count(30, 1), 1770);
    }

    #[test]
    fn parameter_count_scan() {
        for n in 2..=10 {
            for d in 1..=3 {
                let latents = n * (n - 1) / 2;
                assert_eq!(FullMgcpParams::param_count(n, d), latents * 2 * (1 + d) + n);
            }
        }
    }

    #[test]
    fn size_guard() {
        let s = gen_setting1(6, 90, 0.1, 1).unwrap();
        assert!(matches!(
            fit_full_mgcp(&s.dataset.outputs, &OptimizerConfig::default()),
            Err(Error::Size(_))
        ));
    }

    #[test]
    fn two_output_full_nll_matches_bivariate() {
        let s = gen_setting1(2, 8, 0.1, 3).unwrap();
        let full = initialize_full(&s.dataset.outputs).unwrap();
        let l = &full.latents[0];
        let biv = BivariateParams {
            shared_i: l.kernel_first.clone(),
            shared_j: l.kernel_second.clone(),
            unique_i: KernelSpec::new(1.0, vec![1.0]).unwrap(),
            unique_j: KernelSpec::new(1.0, vec![1.0]).unwrap(),
            xi0: 1.0,
            xi_i: 0.0,
            xi_j: 0.0,
            sigma_i: full.noise[0],
            sigma_j: full.noise[1],
        };
        let a = full_nll(&full, &s.dataset.outputs).unwrap();
        let b = nll(&biv, &s.dataset.outputs[0], &s.dataset.outputs[1]).unwrap();
        assert!((a - b).abs() < 1e-10, "{a} vs {b}");
    }

    #[test]
    fn full_fit_improves_on_init() {
        let s = gen_setting1(3, 6, 0.1, 2).unwrap();
        let cfg = OptimizerConfig {
            restarts: 1,
            max_iters: 50,
            ..Default::default()
        };
        let fit = fit_full_mgcp(&s.dataset.outputs, &cfg).unwrap();
        let init = full_nll(&initialize_full(&s.dataset.outputs).unwrap(), &s.dataset.outputs).unwrap();
        assert!(fit.objective <= init);
    }

    #[test]
    fn separable_fit_runs_and_thresholds() {
        let s = gen_setting1(2, 10, 0.1, 5).unwrap();
        let (a, b) = (&s.dataset.outputs[0], &s.dataset.outputs[1]);
        let cfg = OptimizerConfig {
            restarts: 1,
            ..Default::default()
        };
        let free = fit_separable(a, b, &PenaltyConfig::none(), &cfg).unwrap();
        // identical signals: strongly positive correlation
        assert!(free.params.t > 0.5, "{}", free.params.t);
        let heavy = fit_separable(a, b, &PenaltyConfig::new(PenaltyKind::L1, 100.0), &cfg).unwrap();
        assert!(heavy.xi0_zeroed, "t = {}", heavy.params.t);
    }
}
