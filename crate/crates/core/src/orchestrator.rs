//! Pairwise decomposition: plan the submodels, tune and fit them in parallel, and
//! fuse their predictions with a weighted product of experts.
//!
//! Outputs are addressed by their 0-based position in the dataset.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::OutputTag;
use crate::data::{Dataset, OutputData};
use crate::error::{Error, Result};
use crate::likelihood::{PenaltyConfig, PenaltyKind};
use crate::optimizer::{fit_bivariate, FitResult, OptimizerConfig};
use crate::predict::{BivariatePredictor, GaussianPrediction};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairPlan {
    /// `None` plans every pair.
    pub target: Option<usize>,
    pub pairs: Vec<(usize, usize)>,
}

/// Lexicographically ordered pairs `(i, j)`, `i < j`; with a target, only pairs containing it.
pub fn enumerate_pairs(n: usize, target: Option<usize>) -> Result<PairPlan> {
    if n < 2 {
        return Err(Error::Argument(format!("need at least two outputs, got {n}")));
    }
    if let Some(t) = target {
        if t >= n {
            return Err(Error::Argument(format!("target {t} out of range for {n} outputs")));
        }
    }
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if target.is_none_or(|t| t == i || t == j) {
                pairs.push((i, j));
            }
        }
    }
    Ok(PairPlan { target, pairs })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Mae,
    Mse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub folds: usize,
    /// Ascending, nonnegative.
    pub lambda_grid: Vec<f64>,
    pub seed: u64,
    pub criterion: Criterion,
    /// Restarts used by each fold fit; the final fit uses the optimizer's own count.
    pub restarts: usize,
}

/// `0` followed by 10 log-spaced points on `[1e-3, 10]`.
pub fn default_lambda_grid() -> Vec<f64> {
    let mut g = vec![0.0];
    g.extend((0..10).map(|k| 10f64.powf(-3.0 + 4.0 * k as f64 / 9.0)));
    g
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            folds: 3,
            lambda_grid: default_lambda_grid(),
            seed: 0,
            criterion: Criterion::Mae,
            restarts: 1,
        }
    }
}

impl CvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(Error::Config("cross-validation needs at least two folds".into()));
        }
        if self.lambda_grid.is_empty() {
            return Err(Error::Config("lambda grid is empty".into()));
        }
        if self.lambda_grid.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return Err(Error::Config("lambda grid values must be finite and >= 0".into()));
        }
        if self.lambda_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("lambda grid must be strictly increasing".into()));
        }
        if self.restarts < 1 {
            return Err(Error::Config("cross-validation restarts must be at least 1".into()));
        }
        Ok(())
    }
}

/// Seed for the `k`-th independent stream derived from `seed`.
pub fn derive_seed(seed: u64, k: u64) -> u64 {
    // splitmix64 finalizer over a golden-ratio stride
    let mut z = seed.wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(k.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Fold index of every observation: a seeded shuffle dealt round-robin.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold = vec![0; n];
    for (k, &r) in order.iter().enumerate() {
        fold[r] = k % folds;
    }
    fold
}

fn split(data: &OutputData, fold: &[usize], f: usize) -> (OutputData, Vec<usize>) {
    let train: Vec<usize> = (0..data.len()).filter(|&r| fold[r] != f).collect();
    let test: Vec<usize> = (0..data.len()).filter(|&r| fold[r] == f).collect();
    (data.select(&train), test)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvOutcome {
    pub lambda: f64,
    /// Mean held-out criterion per grid value; `None` where a fold fit failed.
    pub scores: Vec<Option<f64>>,
}

/// Chooses λ for one pair by `folds`-fold cross-validation over both outputs.
pub fn cross_validate_lambda(
    data_i: &OutputData,
    data_j: &OutputData,
    cv: &CvConfig,
    kind: PenaltyKind,
    opt: &OptimizerConfig,
) -> Result<CvOutcome> {
    cv.validate()?;
    if cv.lambda_grid.len() == 1 {
        return Ok(CvOutcome {
            lambda: cv.lambda_grid[0],
            scores: vec![None],
        });
    }
    for d in [data_i, data_j] {
        if d.len() < cv.folds.max(2) {
            return Err(Error::Argument(format!(
                "output '{}' has {} observations, fewer than the {} folds",
                d.id,
                d.len(),
                cv.folds
            )));
        }
    }
    let fold_i = fold_assignment(data_i.len(), cv.folds, derive_seed(cv.seed, 0));
    let fold_j = fold_assignment(data_j.len(), cv.folds, derive_seed(cv.seed, 1));
    let fold_opt = OptimizerConfig {
        restarts: cv.restarts,
        ..*opt
    };
    let mut scores = Vec::with_capacity(cv.lambda_grid.len());
    for &lambda in &cv.lambda_grid {
        let penalty = PenaltyConfig::new(kind, lambda);
        let mut total = 0.0;
        let mut failed = false;
        for f in 0..cv.folds {
            let (train_i, test_i) = split(data_i, &fold_i, f);
            let (train_j, test_j) = split(data_j, &fold_j, f);
            let fold_score = (|| -> Result<f64> {
                let fit = fit_bivariate(
                    &train_i,
                    &train_j,
                    &penalty,
                    &fold_opt.with_seed(derive_seed(opt.seed, f as u64)),
                )?;
                let pred = BivariatePredictor::new(&fit.params, &train_i, &train_j)?;
                let mut sum = 0.0;
                let mut count = 0usize;
                for (tag, data, test) in [(OutputTag::I, data_i, &test_i), (OutputTag::J, data_j, &test_j)] {
                    for &r in test {
                        let e = pred.predict(&data.row(r), tag)?.mean - data.y[r];
                        sum += match cv.criterion {
                            Criterion::Mae => e.abs(),
                            Criterion::Mse => e * e,
                        };
                        count += 1;
                    }
                }
                Ok(sum / count.max(1) as f64)
            })();
            match fold_score {
                Ok(s) => total += s,
                Err(_) => {
                    failed = true;
                    break;
                }
            }
        }
        scores.push(if failed { None } else { Some(total / cv.folds as f64) });
    }
    let mut best: Option<(f64, f64)> = None;
    for (&lambda, s) in cv.lambda_grid.iter().zip(&scores) {
        if let Some(s) = *s {
            if best.is_none_or(|(_, b)| s < b) {
                best = Some((lambda, s));
            }
        }
    }
    let (lambda, _) = best.ok_or_else(|| Error::Optimization("every cross-validation fit failed".into()))?;
    Ok(CvOutcome { lambda, scores })
}

/// Fitted (or failed) submodel of one pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairFit {
    pub pair: (usize, usize),
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cv: Option<CvOutcome>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// How λ is set for each pair.
#[derive(Debug, Clone, PartialEq)]
pub enum LambdaChoice {
    Fixed(f64),
    CrossValidated(CvConfig),
}

fn fit_pair(
    dataset: &Dataset,
    idx: usize,
    (i, j): (usize, usize),
    kind: PenaltyKind,
    lambda: &LambdaChoice,
    opt: &OptimizerConfig,
    base: &PenaltyConfig,
) -> Result<(Option<CvOutcome>, FitResult)> {
    let (di, dj) = (&dataset.outputs[i], &dataset.outputs[j]);
    let pair_opt = opt.with_seed(derive_seed(opt.seed, idx as u64));
    let (cv, lam) = match lambda {
        LambdaChoice::Fixed(l) => (None, *l),
        LambdaChoice::CrossValidated(cv) => {
            let pair_cv = CvConfig {
                seed: derive_seed(cv.seed, idx as u64),
                ..cv.clone()
            };
            let out = cross_validate_lambda(di, dj, &pair_cv, kind, &pair_opt)?;
            let l = out.lambda;
            (Some(out), l)
        }
    };
    let penalty = PenaltyConfig {
        kind,
        lambda: lam,
        ..*base
    };
    Ok((cv, fit_bivariate(di, dj, &penalty, &pair_opt)?))
}

/// Fits every pair of `plan` on up to `parallelism` threads.
///
/// Each pair is seeded from its position in the plan, so results do not depend on
/// scheduling. A failing pair is recorded in its [`PairFit`]; if every pair fails the
/// first error is returned.
pub fn fit_all(
    dataset: &Dataset,
    plan: &PairPlan,
    penalty: &PenaltyConfig,
    lambda: &LambdaChoice,
    opt: &OptimizerConfig,
    parallelism: usize,
) -> Result<Vec<PairFit>> {
    dataset.validate()?;
    penalty.validate()?;
    opt.validate()?;
    if let LambdaChoice::CrossValidated(cv) = lambda {
        cv.validate()?;
    }
    if parallelism < 1 {
        return Err(Error::Config("parallelism must be at least 1".into()));
    }
    let n = dataset.n_outputs();
    if let Some(&(i, j)) = plan.pairs.iter().find(|(i, j)| *i >= n || *j >= n || i == j) {
        return Err(Error::Argument(format!("pair ({i}, {j}) is invalid for {n} outputs")));
    }
    if plan.pairs.is_empty() {
        return Err(Error::Argument("plan has no pairs".into()));
    }
    let run = |(idx, &pair): (usize, &(usize, usize))| fit_pair(dataset, idx, pair, penalty.kind, lambda, opt, penalty);
    let results: Vec<Result<(Option<CvOutcome>, FitResult)>> = if parallelism == 1 {
        plan.pairs.iter().enumerate().map(run).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(parallelism)
            .build()
            .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
        pool.install(|| plan.pairs.par_iter().enumerate().map(run).collect())
    };
    if results.iter().all(|r| r.is_err()) {
        return Err(results.into_iter().find_map(|r| r.err()).expect("plan is nonempty"));
    }
    Ok(plan
        .pairs
        .iter()
        .zip(results)
        .map(|(&pair, r)| match r {
            Ok((cv, fit)) => PairFit {
                pair,
                cv,
                fit: Some(fit),
                error: None,
            },
            Err(e) => PairFit {
                pair,
                cv: None,
                fit: None,
                error: Some(e.to_string()),
            },
        })
        .collect())
}

/// Plans the `N - 1` pairs containing `target`, tunes λ per pair and fits them.
pub fn fit_target(
    dataset: &Dataset,
    target: usize,
    penalty: &PenaltyConfig,
    lambda: &LambdaChoice,
    opt: &OptimizerConfig,
    parallelism: usize,
) -> Result<Vec<PairFit>> {
    let plan = enumerate_pairs(dataset.n_outputs(), Some(target))?;
    fit_all(dataset, &plan, penalty, lambda, opt, parallelism)
}

/// Weighted product of Gaussian experts: `V⁻¹ = Σ β_c / V_c`, `M = V Σ β_c M_c / V_c`.
pub fn combine_poe(experts: &[GaussianPrediction], weights: &[f64]) -> Result<GaussianPrediction> {
    if experts.is_empty() {
        return Err(Error::Argument("no experts to combine".into()));
    }
    if experts.len() != weights.len() {
        return Err(Error::Argument("one weight per expert is required".into()));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::Argument("weights must be nonnegative".into()));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Argument(format!("weights must sum to 1, got {total}")));
    }
    if experts.iter().any(|e| !(e.variance > 0.0)) {
        return Err(Error::Argument("expert variances must be positive".into()));
    }
    let precision: f64 = experts.iter().zip(weights).map(|(e, w)| w / e.variance).sum();
    let weighted: f64 = experts.iter().zip(weights).map(|(e, w)| w * e.mean / e.variance).sum();
    let variance = 1.0 / precision;
    Ok(GaussianPrediction {
        mean: variance * weighted,
        variance,
    })
}

/// Combined prediction of output `target` at every row of `x_test` from the
/// surviving experts in `fits`, equally weighted.
pub fn predict_target(
    fits: &[PairFit],
    dataset: &Dataset,
    target: usize,
    x_test: &[Vec<f64>],
) -> Result<Vec<GaussianPrediction>> {
    let experts: Vec<(BivariatePredictor, OutputTag)> = fits
        .iter()
        .filter(|f| f.pair.0 == target || f.pair.1 == target)
        .filter_map(|f| f.fit.as_ref().map(|fit| (f.pair, fit)))
        .map(|((i, j), fit)| {
            let tag = if i == target { OutputTag::I } else { OutputTag::J };
            BivariatePredictor::new(&fit.params, &dataset.outputs[i], &dataset.outputs[j]).map(|p| (p, tag))
        })
        .collect::<Result<_>>()?;
    if experts.is_empty() {
        return Err(Error::Numerical(format!("no fitted submodel covers output {target}")));
    }
    let weights = vec![1.0 / experts.len() as f64; experts.len()];
    x_test
        .iter()
        .map(|x| {
            let preds = experts
                .iter()
                .map(|(p, tag)| p.predict(x, *tag))
                .collect::<Result<Vec<_>>>()?;
            combine_poe(&preds, &weights)
        })
        .collect()
}
