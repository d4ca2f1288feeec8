//! Polak–Ribière+ nonlinear conjugate gradient with a weak Wolfe line search and seeded
//! random restarts, plus the pairwise fitting entry point built on it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::covariance::{BivariateParams, KernelSpec};
use crate::data::{mean_std, OutputData};
use crate::error::{Error, Result};
use crate::likelihood::{penalized_nll, BivariateLayout, BivariateProblem, PenaltyConfig};

/// `|ξ̂₀|` below this is set to exactly zero after a sparse-penalty fit.
pub const XI0_THRESHOLD: f64 = 1e-4;

/// Standard deviation of the additive perturbation applied to the initial point of
/// every restart after the first.
pub const RESTART_JITTER: f64 = 0.3;

/// Largest change of any single coordinate tried by the first step of a line search.
const MAX_COORD_STEP: f64 = 2.0;
const MAX_BACKTRACKS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineSearch {
    pub initial_step: f64,
    pub shrink: f64,
    /// Armijo sufficient-decrease constant.
    pub c1: f64,
    /// Curvature constant: a step is extended while `g(x + αd)·d < c2 g(x)·d`.
    pub c2: f64,
}

impl Default for LineSearch {
    fn default() -> Self {
        LineSearch {
            initial_step: 1.0,
            shrink: 0.5,
            c1: 1e-4,
            c2: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub max_iters: usize,
    pub grad_tol: f64,
    pub restarts: usize,
    pub seed: u64,
    pub line_search: LineSearch,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            max_iters: 200,
            grad_tol: 1e-6,
            restarts: 5,
            seed: 0,
            line_search: LineSearch::default(),
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters < 1 {
            return Err(Error::Config("max_iters must be at least 1".into()));
        }
        if !(self.grad_tol > 0.0) {
            return Err(Error::Config("grad_tol must be positive".into()));
        }
        if self.restarts < 1 {
            return Err(Error::Config("restarts must be at least 1".into()));
        }
        let ls = &self.line_search;
        if !(ls.initial_step > 0.0 && ls.shrink > 0.0 && ls.shrink < 1.0 && ls.c1 > 0.0 && ls.c1 < ls.c2 && ls.c2 < 1.0)
        {
            return Err(Error::Config("invalid line-search parameters".into()));
        }
        Ok(())
    }

    pub fn with_seed(self, seed: u64) -> Self {
        OptimizerConfig { seed, ..self }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub restart: usize,
    pub iteration: usize,
    pub objective: f64,
    pub grad_norm: f64,
}

/// Outcome of [`minimize`]: the best point over all restarts.
#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub converged: bool,
    pub best_restart: usize,
    pub trace: Vec<TraceEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult<P = BivariateParams> {
    pub params: P,
    pub objective: f64,
    pub converged: bool,
    pub trace: Vec<TraceEntry>,
    pub lambda_used: f64,
    pub xi0_zeroed: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn finite_eval<F>(f: &F, x: &[f64]) -> Option<(f64, Vec<f64>)>
where
    F: Fn(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    match f(x) {
        Ok((v, g)) if v.is_finite() && g.iter().all(|x| x.is_finite()) && g.len() == x.len() => Some((v, g)),
        _ => None,
    }
}

type Trial = (Vec<f64>, f64, Vec<f64>, f64);

/// Bracketing search for a step satisfying the weak Wolfe conditions. Falls back to
/// the longest step found that satisfies sufficient decrease.
fn wolfe_search<F>(f: &F, x: &[f64], fx: f64, d: &[f64], slope: f64, alpha0: f64, ls: &LineSearch) -> Option<Trial>
where
    F: Fn(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
    let mut alpha = alpha0;
    let mut best: Option<Trial> = None;
    for _ in 0..MAX_BACKTRACKS {
        let trial: Vec<f64> = x.iter().zip(d).map(|(a, b)| a + alpha * b).collect();
        match finite_eval(f, &trial) {
            Some((ft, gt)) if ft <= fx + ls.c1 * alpha * slope => {
                let curvature_ok = dot(&gt, d) >= ls.c2 * slope;
                if curvature_ok {
                    return Some((trial, ft, gt, alpha));
                }
                lo = alpha;
                if best.as_ref().is_none_or(|b| ft <= b.1) {
                    best = Some((trial, ft, gt, alpha));
                }
            }
            _ => hi = alpha,
        }
        if hi.is_finite() {
            if lo == 0.0 {
                alpha *= ls.shrink;
            } else {
                alpha = 0.5 * (lo + hi);
            }
        } else {
            alpha *= 2.0;
        }
        if best.is_some() && (hi - lo) <= 1e-12 * lo {
            break;
        }
    }
    best
}

struct RunOutcome {
    x: Vec<f64>,
    value: f64,
    converged: bool,
}

fn run_cg<F>(
    f: &F,
    x0: Vec<f64>,
    start: (f64, Vec<f64>),
    cfg: &OptimizerConfig,
    restart: usize,
    trace: &mut Vec<TraceEntry>,
) -> RunOutcome
where
    F: Fn(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let ls = cfg.line_search;
    let mut x = x0;
    let (mut fx, mut g) = start;
    let mut d: Vec<f64> = g.iter().map(|v| -v).collect();
    let mut prev_slope: Option<f64> = None;
    let mut prev_step = ls.initial_step;
    trace.push(TraceEntry {
        restart,
        iteration: 0,
        objective: fx,
        grad_norm: norm(&g),
    });
    for iter in 1..=cfg.max_iters {
        let gnorm = norm(&g);
        if gnorm < cfg.grad_tol {
            return RunOutcome {
                x,
                value: fx,
                converged: true,
            };
        }
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            d = g.iter().map(|v| -v).collect();
            slope = -gnorm * gnorm;
        }
        let mut accepted = None;
        for steepest_retry in [false, true] {
            if steepest_retry {
                if accepted.is_some() {
                    break;
                }
                let is_steepest = d.iter().zip(&g).all(|(a, b)| *a == -*b);
                if is_steepest {
                    break;
                }
                d = g.iter().map(|v| -v).collect();
                slope = -gnorm * gnorm;
            }
            let dmax = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let mut alpha = match prev_slope {
                Some(ps) if !steepest_retry => (prev_step * ps / slope).min(1.0 / dmax.max(1e-300) * 1e3),
                _ => ls.initial_step / gnorm.max(1.0),
            };
            alpha = alpha.min(MAX_COORD_STEP / dmax.max(1e-300));
            accepted = wolfe_search(f, &x, fx, &d, slope, alpha, &ls);
        }
        let Some((xn, fnew, gn, alpha)) = accepted else {
            // no descent possible along the steepest direction at machine precision
            return RunOutcome {
                x,
                value: fx,
                converged: false,
            };
        };
        let gg = dot(&g, &g);
        let beta = (gn.iter().zip(&g).map(|(a, b)| a * (a - b)).sum::<f64>() / gg).max(0.0);
        let restart_cycle = iter % (x.len() + 1) == 0;
        prev_slope = Some(slope);
        prev_step = alpha;
        x = xn;
        fx = fnew;
        d = if restart_cycle {
            gn.iter().map(|v| -v).collect()
        } else {
            gn.iter().zip(&d).map(|(gv, dv)| -gv + beta * dv).collect()
        };
        g = gn;
        trace.push(TraceEntry {
            restart,
            iteration: iter,
            objective: fx,
            grad_norm: norm(&g),
        });
    }
    let converged = norm(&g) < cfg.grad_tol;
    RunOutcome {
        x,
        value: fx,
        converged,
    }
}

/// Minimizes `f` from `init` and from `restarts - 1` seeded perturbations of it.
///
/// Returns the lowest objective over all restarts, ties going to the earliest restart.
pub fn minimize<F>(f: F, init: &[f64], cfg: &OptimizerConfig) -> Result<Minimum>
where
    F: Fn(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let normal = Normal::new(0.0, RESTART_JITTER).expect("valid normal");
    let mut trace = Vec::new();
    let mut best: Option<(RunOutcome, usize)> = None;
    let mut last_error = None;
    for r in 0..cfg.restarts {
        let x0: Vec<f64> = if r == 0 {
            init.to_vec()
        } else {
            init.iter().map(|v| v + normal.sample(&mut rng)).collect()
        };
        let start = match f(&x0) {
            Ok((v, g)) if v.is_finite() && g.iter().all(|x| x.is_finite()) => (v, g),
            Ok(_) => {
                last_error = Some(Error::Numerical(format!(
                    "non-finite objective at the start of restart {r}"
                )));
                continue;
            }
            Err(e) => {
                last_error = Some(e);
                continue;
            }
        };
        if start.1.len() != x0.len() {
            return Err(Error::Argument("gradient length differs from parameter length".into()));
        }
        let out = run_cg(&f, x0, start, cfg, r, &mut trace);
        if best.as_ref().is_none_or(|(b, _)| out.value < b.value) {
            best = Some((out, r));
        }
    }
    match best {
        Some((out, r)) => Ok(Minimum {
            x: out.x,
            value: out.value,
            converged: out.converged,
            best_restart: r,
            trace,
        }),
        None => Err(Error::Optimization(format!(
            "every restart failed at its initial point; last error: {}",
            last_error.map_or_else(|| "none".to_string(), |e| e.to_string())
        ))),
    }
}

/// Median of `|a - b|` over all pairs of distinct values.
fn median_pairwise_distance(values: &mut Vec<f64>) -> Option<f64> {
    values.sort_by(|a, b| a.total_cmp(b));
    values.dedup();
    if values.len() < 2 {
        return None;
    }
    let mut dists = Vec::with_capacity(values.len() * (values.len() - 1) / 2);
    for (k, a) in values.iter().enumerate() {
        for b in &values[k + 1..] {
            dists.push(b - a);
        }
    }
    dists.sort_by(|a, b| a.total_cmp(b));
    let n = dists.len();
    Some(if n % 2 == 1 {
        dists[n / 2]
    } else {
        0.5 * (dists[n / 2 - 1] + dists[n / 2])
    })
}

/// Per-dimension `1 / median²` of pairwise distances between the distinct input
/// coordinates of all `outputs`; 1 when a dimension has a single distinct value.
pub fn initial_lengthscales(outputs: &[&OutputData]) -> Vec<f64> {
    let dim = outputs[0].dim();
    (0..dim)
        .map(|c| {
            let mut v: Vec<f64> = outputs
                .iter()
                .flat_map(|o| o.x.column(c).iter().copied().collect::<Vec<_>>())
                .collect();
            match median_pairwise_distance(&mut v) {
                Some(m) if m > 0.0 => 1.0 / (m * m),
                _ => 1.0,
            }
        })
        .collect()
}

/// Sample standard deviation of `y`, rejecting constant outputs.
pub fn output_scale(data: &OutputData) -> Result<f64> {
    let (_, s) = mean_std(data.y.as_slice());
    if !(s > 0.0) || data.len() < 2 {
        return Err(Error::DegenerateData(format!(
            "output '{}' has zero sample variance",
            data.id
        )));
    }
    Ok(s)
}

/// Deterministic starting point for a pairwise fit.
///
/// Shared and unique kernels start at the median-distance length-scale. The shared
/// latent starts at `ξ₀ = ½ √(s_i s_j)` with amplitudes giving each output a quarter of
/// its sample variance; the unique amplitudes supply the rest; `σ = 0.1 s`.
pub fn initialize_params(data_i: &OutputData, data_j: &OutputData) -> Result<BivariateParams> {
    if data_i.is_empty() || data_j.is_empty() {
        return Err(Error::Argument("both outputs need observations".into()));
    }
    if data_i.dim() != data_j.dim() {
        return Err(Error::Argument("outputs disagree on input dimension".into()));
    }
    let (si, sj) = (output_scale(data_i)?, output_scale(data_j)?);
    let lam = initial_lengthscales(&[data_i, data_j]);
    let kernel = |amplitude: f64| KernelSpec {
        amplitude,
        lengthscale_diag: lam.clone(),
    };
    let ratio = (si / sj).sqrt();
    Ok(BivariateParams {
        shared_i: kernel(ratio),
        shared_j: kernel(1.0 / ratio),
        unique_i: kernel(0.75f64.sqrt() * si),
        unique_j: kernel(0.75f64.sqrt() * sj),
        xi0: 0.5 * (si * sj).sqrt(),
        xi_i: 1.0,
        xi_j: 1.0,
        sigma_i: 0.1 * si,
        sigma_j: 0.1 * sj,
    })
}

/// Penalized maximum-likelihood fit of one pairwise submodel.
pub fn fit_bivariate(
    data_i: &OutputData,
    data_j: &OutputData,
    penalty: &PenaltyConfig,
    cfg: &OptimizerConfig,
) -> Result<FitResult> {
    fit_bivariate_with_layout(data_i, data_j, penalty, cfg, BivariateLayout::new(data_i.dim()))
}

pub fn fit_bivariate_with_layout(
    data_i: &OutputData,
    data_j: &OutputData,
    penalty: &PenaltyConfig,
    cfg: &OptimizerConfig,
    layout: BivariateLayout,
) -> Result<FitResult> {
    if data_i.len() < 2 || data_j.len() < 2 {
        return Err(Error::Argument(
            "each output of a pair needs at least two observations".into(),
        ));
    }
    penalty.validate()?;
    cfg.validate()?;
    let mut init = initialize_params(data_i, data_j)?;
    if layout.tie_shared_kernels {
        init.shared_i.amplitude = 1.0;
        init.shared_j.amplitude = 1.0;
    }
    let problem = BivariateProblem::new(data_i, data_j, layout, *penalty)?;
    let x0 = layout.to_vector(&init)?;
    let m = minimize(|v| problem.value_and_grad(v), &x0, cfg)?;
    let mut params = layout.from_vector(&m.x)?;
    let mut objective = m.value;
    let mut xi0_zeroed = false;
    if penalty.thresholds() && params.xi0.abs() < XI0_THRESHOLD {
        params.xi0 = 0.0;
        xi0_zeroed = true;
        objective = penalized_nll(&params, data_i, data_j, penalty)?;
    }
    Ok(FitResult {
        params,
        objective,
        converged: m.converged,
        trace: m.trace,
        lambda_used: penalty.lambda,
        xi0_zeroed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::likelihood::{nll, PenaltyKind};

    fn quadratic(c: &[f64]) -> impl Fn(&[f64]) -> Result<(f64, Vec<f64>)> + '_ {
        move |x: &[f64]| {
            let g: Vec<f64> = x.iter().zip(c).map(|(a, b)| 2.0 * (a - b)).collect();
            Ok((x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum(), g))
        }
    }

    fn rosenbrock(x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (a, b) = (x[0], x[1]);
        let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
        let g = vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)];
        Ok((f, g))
    }

    #[test]
    fn quadratic_bowl_reaches_centre() {
        let c = [1.5, -2.0, 0.25];
        let m = minimize(
            quadratic(&c),
            &[10.0, 4.0, -7.0],
            &OptimizerConfig {
                restarts: 1,
                ..Default::default()
            },
        )
        .unwrap();
        for (a, b) in m.x.iter().zip(&c) {
            assert!((a - b).abs() < 1e-6);
        }
        assert!(m.converged);
    }

    #[test]
    fn rosenbrock_from_standard_start() {
        let cfg = OptimizerConfig {
            max_iters: 2000,
            grad_tol: 1e-8,
            restarts: 1,
            ..Default::default()
        };
        let m = minimize(rosenbrock, &[-1.2, 1.0], &cfg).unwrap();
        assert!(
            (m.x[0] - 1.0).abs() < 1e-3 && (m.x[1] - 1.0).abs() < 1e-3,
            "{:?} after {} steps",
            m.x,
            m.trace.len()
        );
    }

    #[test]
    fn trace_is_monotone_within_each_restart() {
        let cfg = OptimizerConfig {
            restarts: 3,
            seed: 4,
            ..Default::default()
        };
        let m = minimize(rosenbrock, &[-1.2, 1.0], &cfg).unwrap();
        for w in m.trace.windows(2) {
            if w[0].restart == w[1].restart {
                assert!(w[1].objective <= w[0].objective);
            }
        }
    }

    #[test]
    fn restarts_are_deterministic() {
        let cfg = OptimizerConfig {
            restarts: 3,
            seed: 17,
            max_iters: 50,
            ..Default::default()
        };
        let a = minimize(rosenbrock, &[-1.2, 1.0], &cfg).unwrap();
        let b = minimize(rosenbrock, &[-1.2, 1.0], &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn result_never_worse_than_init() {
        let cfg = OptimizerConfig {
            restarts: 2,
            max_iters: 3,
            ..Default::default()
        };
        let m = minimize(rosenbrock, &[-1.2, 1.0], &cfg).unwrap();
        assert!(m.value <= rosenbrock(&[-1.2, 1.0]).unwrap().0);
    }

    #[test]
    fn all_failing_starts_is_an_optimization_error() {
        let f = |_: &[f64]| -> Result<(f64, Vec<f64>)> { Ok((f64::NAN, vec![0.0])) };
        assert!(matches!(
            minimize(f, &[0.0], &OptimizerConfig::default()),
            Err(Error::Optimization(_))
        ));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        for cfg in [
            OptimizerConfig {
                max_iters: 0,
                ..Default::default()
            },
            OptimizerConfig {
                restarts: 0,
                ..Default::default()
            },
            OptimizerConfig {
                grad_tol: 0.0,
                ..Default::default()
            },
        ] {
            assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        }
    }

    #[test]
    fn median_of_evenly_spaced_grid() {
        let xs: Vec<f64> = (0..10).map(|k| 10.0 * k as f64 / 9.0).collect();
        let d = OutputData::from_1d("a", &xs, &xs).unwrap();
        let lam = initial_lengthscales(&[&d, &d]);
        // distances are multiples of 10/9 with multiplicities 9,8,..,1; the 23rd of 45 is 3·10/9
        assert!((lam[0] - 0.09).abs() < 1e-12, "{}", lam[0]);
    }

    #[test]
    fn constant_output_is_degenerate() {
        let a = OutputData::from_1d("a", &[0.0, 1.0, 2.0], &[1.0, 1.0, 1.0]).unwrap();
        let b = OutputData::from_1d("b", &[0.0, 1.0, 2.0], &[1.0, 2.0, 0.0]).unwrap();
        assert!(matches!(initialize_params(&a, &b), Err(Error::DegenerateData(_))));
    }

    #[test]
    fn initial_prior_variance_matches_sample_variance() {
        let a = OutputData::from_1d("a", &[0.0, 1.0, 2.0, 3.0], &[1.0, 3.0, 0.0, 2.0]).unwrap();
        let b = OutputData::from_1d("b", &[0.5, 1.5, 2.5], &[10.0, 14.0, 9.0]).unwrap();
        let p = initialize_params(&a, &b).unwrap();
        for (w, d) in [
            (crate::covariance::OutputTag::I, &a),
            (crate::covariance::OutputTag::J, &b),
        ] {
            let s = output_scale(d).unwrap();
            let v = p.marginal_cov(w, &[0.0]).unwrap();
            assert!((v - s * s).abs() < 1e-12 * s * s);
        }
        assert_eq!(initialize_params(&a, &b).unwrap(), p);
    }

    fn sine_pair(seed: u64) -> (OutputData, OutputData) {
        use rand_distr::{Distribution, Normal};
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = Normal::new(0.0, 0.1).unwrap();
        let xs: Vec<f64> = (0..12).map(|k| 10.0 * k as f64 / 11.0).collect();
        let yi: Vec<f64> = xs.iter().map(|x| x.sin() + n.sample(&mut rng)).collect();
        let yj: Vec<f64> = xs.iter().map(|x| (0.5 * x).cos() + n.sample(&mut rng)).collect();
        (
            OutputData::from_1d("i", &xs, &yi).unwrap(),
            OutputData::from_1d("j", &xs, &yj).unwrap(),
        )
    }

    #[test]
    fn unpenalized_objective_is_nll_at_optimum() {
        let (a, b) = sine_pair(1);
        let cfg = OptimizerConfig {
            restarts: 2,
            ..Default::default()
        };
        let fit = fit_bivariate(&a, &b, &PenaltyConfig::new(PenaltyKind::L1, 0.0), &cfg).unwrap();
        assert!(!fit.xi0_zeroed);
        let v = nll(&fit.params, &a, &b).unwrap();
        assert!((fit.objective - v).abs() < 1e-9 * v.abs().max(1.0));
        assert!(fit.objective <= fit.trace[0].objective);
    }

    #[test]
    fn fit_is_deterministic() {
        let (a, b) = sine_pair(2);
        let cfg = OptimizerConfig {
            restarts: 2,
            max_iters: 60,
            seed: 9,
            ..Default::default()
        };
        let p = PenaltyConfig::new(PenaltyKind::Scad, 0.2);
        assert_eq!(
            fit_bivariate(&a, &b, &p, &cfg).unwrap(),
            fit_bivariate(&a, &b, &p, &cfg).unwrap()
        );
    }

    #[test]
    fn strong_l1_zeroes_the_shared_scale() {
        let (a, b) = sine_pair(3);
        let cfg = OptimizerConfig {
            restarts: 2,
            ..Default::default()
        };
        let fit = fit_bivariate(&a, &b, &PenaltyConfig::new(PenaltyKind::L1, 5.0), &cfg).unwrap();
        assert!(fit.xi0_zeroed, "xi0 = {}", fit.params.xi0);
        assert_eq!(fit.params.xi0, 0.0);
        assert_eq!(fit.lambda_used, 5.0);
    }

    #[test]
    fn short_outputs_are_rejected() {
        let a = OutputData::from_1d("a", &[0.0], &[1.0]).unwrap();
        let (_, b) = sine_pair(1);
        assert!(matches!(
            fit_bivariate(&a, &b, &PenaltyConfig::none(), &OptimizerConfig::default()),
            Err(Error::Argument(_))
        ));
    }
}
