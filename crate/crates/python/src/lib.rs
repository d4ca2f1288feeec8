//! Python bindings. Inputs are plain lists: one inner list per observation row.

use mgcp_rd::baselines::{fit_full_mgcp, fit_gcp};
use mgcp_rd::cli::{fit_model, simulate_setting, FitOptions, Model, SettingOverrides};
use mgcp_rd::covariance::{BivariateParams, Inputs, KernelSpec};
use mgcp_rd::data::{Dataset as CoreDataset, OutputData};
use mgcp_rd::likelihood::{self, PenaltyConfig, PenaltyKind};
use mgcp_rd::optimizer::{self, FitResult, OptimizerConfig};
use mgcp_rd::orchestrator::combine_poe;
use mgcp_rd::predict::{FullPredictor, GaussianPrediction, UnivariatePredictor};
use mgcp_rd::{metrics, simulate, Error};
use nalgebra::DVector;
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io(io) => PyIOError::new_err(io.to_string()),
        Error::Numerical(_) | Error::Optimization(_) => PyRuntimeError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn rows_to_inputs(rows: &[Vec<f64>]) -> Result<Inputs, Error> {
    let dim = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != dim) {
        return Err(Error::Argument("input rows differ in length".into()));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(Inputs::from_row_slice(rows.len(), dim, &flat))
}

fn pair(p: GaussianPrediction) -> (f64, f64) {
    (p.mean, p.variance)
}

fn parse_penalty(name: &str) -> PyResult<PenaltyKind> {
    name.parse::<PenaltyKind>().map_err(to_py)
}

/// Observations of several outputs sharing one input dimension.
#[pyclass(module = "mgcp_rd_py", from_py_object)]
#[derive(Clone)]
pub struct Dataset {
    inner: CoreDataset,
}

#[pymethods]
impl Dataset {
    /// `outputs` is a list of `(id, rows, y)` triples.
    #[new]
    fn new(outputs: Vec<(String, Vec<Vec<f64>>, Vec<f64>)>) -> PyResult<Self> {
        let outs = outputs
            .into_iter()
            .map(|(id, rows, y)| OutputData::new(id, rows_to_inputs(&rows)?, DVector::from_vec(y)))
            .collect::<Result<Vec<_>, _>>()
            .map_err(to_py)?;
        Ok(Dataset {
            inner: CoreDataset::new(outs).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn from_csv(path: &str) -> PyResult<Self> {
        Ok(Dataset {
            inner: mgcp_rd::cli::read_dataset(path.as_ref()).map_err(to_py)?,
        })
    }

    fn to_csv(&self, path: &str) -> PyResult<usize> {
        let f = std::fs::File::create(path).map_err(|e| to_py(e.into()))?;
        mgcp_rd::cli::write_dataset(&self.inner, f).map_err(to_py)
    }

    #[getter]
    fn ids(&self) -> Vec<String> {
        self.inner.outputs.iter().map(|o| o.id.clone()).collect()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn __len__(&self) -> usize {
        self.inner.n_outputs()
    }

    /// `(rows, y)` of output `index`.
    fn output(&self, index: usize) -> PyResult<(Vec<Vec<f64>>, Vec<f64>)> {
        let o = self
            .inner
            .outputs
            .get(index)
            .ok_or_else(|| PyValueError::new_err(format!("no output at index {index}")))?;
        Ok(((0..o.len()).map(|r| o.row(r)).collect(), o.y.iter().copied().collect()))
    }

    /// Copy with every output rescaled to zero mean and unit standard deviation.
    fn standardized(&self) -> PyResult<Dataset> {
        Ok(Dataset {
            inner: simulate::standardize(&self.inner).map_err(to_py)?,
        })
    }

    fn __repr__(&self) -> String {
        format!("Dataset(outputs={}, dim={})", self.inner.n_outputs(), self.inner.dim())
    }
}

/// Simulated dataset for setting 1, 2 or 3 with optional overrides of its defaults.
#[pyfunction]
#[pyo3(signature = (setting, seed=0, outputs=None, points=None, target_points=None, sigma=None))]
fn simulate_dataset(
    setting: u8,
    seed: u64,
    outputs: Option<usize>,
    points: Option<usize>,
    target_points: Option<usize>,
    sigma: Option<f64>,
) -> PyResult<Dataset> {
    let o = SettingOverrides {
        outputs,
        points,
        target_points,
        sigma,
    };
    Ok(Dataset {
        inner: simulate_setting(setting, &o, seed).map_err(to_py)?.dataset,
    })
}

/// Fitted parameters of one pairwise submodel.
#[pyclass(module = "mgcp_rd_py", from_py_object)]
#[derive(Clone)]
pub struct PairModel {
    fit: FitResult<BivariateParams>,
}

#[pymethods]
impl PairModel {
    #[getter]
    fn xi0(&self) -> f64 {
        self.fit.params.xi0
    }

    #[getter]
    fn xi0_zeroed(&self) -> bool {
        self.fit.xi0_zeroed
    }

    #[getter]
    fn objective(&self) -> f64 {
        self.fit.objective
    }

    #[getter]
    fn converged(&self) -> bool {
        self.fit.converged
    }

    #[getter]
    fn lambda_used(&self) -> f64 {
        self.fit.lambda_used
    }

    #[getter]
    fn sigma(&self) -> (f64, f64) {
        (self.fit.params.sigma_i, self.fit.params.sigma_j)
    }

    /// Parameters as named JSON fields.
    fn params_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.fit.params).map_err(|e| to_py(e.into()))
    }
}

/// Penalized fit of the pair `(i, j)` of `dataset` at a fixed λ.
#[pyfunction]
#[pyo3(signature = (dataset, i, j, penalty="l1", lam=0.0, restarts=5, seed=0))]
fn fit_pair(
    dataset: &Dataset,
    i: usize,
    j: usize,
    penalty: &str,
    lam: f64,
    restarts: usize,
    seed: u64,
) -> PyResult<PairModel> {
    let n = dataset.inner.n_outputs();
    if i >= n || j >= n || i == j {
        return Err(PyValueError::new_err(format!(
            "invalid pair ({i}, {j}) for {n} outputs"
        )));
    }
    let cfg = OptimizerConfig {
        restarts,
        seed,
        ..Default::default()
    };
    let penalty = PenaltyConfig::new(parse_penalty(penalty)?, lam);
    let fit = optimizer::fit_bivariate(&dataset.inner.outputs[i], &dataset.inner.outputs[j], &penalty, &cfg)
        .map_err(to_py)?;
    Ok(PairModel { fit })
}

/// Negative log-likelihood of a pair under parameters given as the JSON of
/// [`PairModel::params_json`].
#[pyfunction]
fn pair_nll(dataset: &Dataset, i: usize, j: usize, params_json: &str) -> PyResult<f64> {
    let p: BivariateParams = serde_json::from_str(params_json).map_err(|e| to_py(e.into()))?;
    let outs = &dataset.inner.outputs;
    if i >= outs.len() || j >= outs.len() {
        return Err(PyValueError::new_err("output index out of range"));
    }
    likelihood::nll(&p, &outs[i], &outs[j]).map_err(to_py)
}

/// Pairwise model of one target output: `N - 1` fitted submodels and their data.
#[pyclass(module = "mgcp_rd_py", from_py_object)]
#[derive(Clone)]
pub struct TargetModel {
    inner: Model,
}

#[pymethods]
impl TargetModel {
    /// Cross-validates λ per pair over `lambda_grid` (default grid when `None`;
    /// a single value fixes λ) and fits every pair containing `target`.
    #[staticmethod]
    #[pyo3(signature = (dataset, target, penalty="l1", lambda_grid=None, folds=3, seed=0, parallelism=1, restarts=5, standardize=true))]
    #[allow(clippy::too_many_arguments)]
    fn fit(
        py: Python<'_>,
        dataset: &Dataset,
        target: &str,
        penalty: &str,
        lambda_grid: Option<Vec<f64>>,
        folds: usize,
        seed: u64,
        parallelism: usize,
        restarts: usize,
        standardize: bool,
    ) -> PyResult<Self> {
        let options = FitOptions {
            penalty: parse_penalty(penalty)?,
            lambda_grid,
            folds,
            seed,
            parallelism,
            restarts,
            max_iters: OptimizerConfig::default().max_iters,
        };
        let data = dataset.inner.clone();
        let target = target.to_string();
        let inner = py
            .detach(move || fit_model(&data, &target, &options, standardize))
            .map_err(to_py)?;
        Ok(TargetModel { inner })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(TargetModel {
            inner: Model::from_json(text).map_err(to_py)?,
        })
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(to_py)
    }

    #[getter]
    fn target(&self) -> String {
        self.inner.target.clone()
    }

    #[getter]
    fn warnings(&self) -> Vec<String> {
        self.inner.warnings.clone()
    }

    /// `((i, j), fitted submodel or None)` for every planned pair.
    fn pairs(&self) -> Vec<((usize, usize), Option<PairModel>)> {
        self.inner
            .pairs
            .iter()
            .map(|p| (p.pair, p.fit.clone().map(|fit| PairModel { fit })))
            .collect()
    }

    /// `(mean, variance)` per row of `x`, in the original response units.
    fn predict(&self, x: Vec<Vec<f64>>) -> PyResult<Vec<(f64, f64)>> {
        Ok(self.inner.predict(&x).map_err(to_py)?.into_iter().map(pair).collect())
    }
}

/// Independent GP on output `index`, predicted at the rows of `x`.
#[pyfunction]
#[pyo3(signature = (dataset, index, x, restarts=5, seed=0))]
fn gcp_predict(
    dataset: &Dataset,
    index: usize,
    x: Vec<Vec<f64>>,
    restarts: usize,
    seed: u64,
) -> PyResult<Vec<(f64, f64)>> {
    let o = dataset
        .inner
        .outputs
        .get(index)
        .ok_or_else(|| PyValueError::new_err("output index out of range"))?;
    let cfg = OptimizerConfig {
        restarts,
        seed,
        ..Default::default()
    };
    let fit = fit_gcp(o, &cfg).map_err(to_py)?;
    let p = UnivariatePredictor::new(&fit.params, o).map_err(to_py)?;
    x.iter().map(|r| p.predict(r).map(pair).map_err(to_py)).collect()
}

/// Full joint model over all outputs, predicting output `target` at the rows of `x`.
#[pyfunction]
#[pyo3(signature = (dataset, target, x, restarts=5, seed=0))]
fn full_predict(
    dataset: &Dataset,
    target: usize,
    x: Vec<Vec<f64>>,
    restarts: usize,
    seed: u64,
) -> PyResult<Vec<(f64, f64)>> {
    let cfg = OptimizerConfig {
        restarts,
        seed,
        ..Default::default()
    };
    let outs = &dataset.inner.outputs;
    let fit = fit_full_mgcp(outs, &cfg).map_err(to_py)?;
    let p = FullPredictor::new(&fit.params, outs).map_err(to_py)?;
    x.iter()
        .map(|r| p.predict(r, target).map(pair).map_err(to_py))
        .collect()
}

/// Weighted product of Gaussian experts given as `(mean, variance)` pairs.
#[pyfunction]
fn poe(experts: Vec<(f64, f64)>, weights: Vec<f64>) -> PyResult<(f64, f64)> {
    let e: Vec<GaussianPrediction> = experts
        .into_iter()
        .map(|(mean, variance)| GaussianPrediction { mean, variance })
        .collect();
    combine_poe(&e, &weights).map(pair).map_err(to_py)
}

#[pyfunction]
fn mae(pred: Vec<f64>, truth: Vec<f64>) -> PyResult<f64> {
    metrics::mae(&pred, &truth).map_err(to_py)
}

#[pyfunction]
fn smse(pred: Vec<f64>, truth: Vec<f64>, truth_variance: f64) -> PyResult<f64> {
    metrics::smse(&pred, &truth, truth_variance).map_err(to_py)
}

/// Squared-exponential kernel check: closed-form cross-covariance term.
#[pyfunction]
fn cross_covariance(a: (f64, Vec<f64>), b: (f64, Vec<f64>), scale: f64, d: Vec<f64>) -> PyResult<f64> {
    let ka = KernelSpec::new(a.0, a.1).map_err(to_py)?;
    let kb = KernelSpec::new(b.0, b.1).map_err(to_py)?;
    mgcp_rd::covariance::cross_cov_term(&ka, &kb, scale, &d).map_err(to_py)
}

#[pymodule]
fn mgcp_rd_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Dataset>()?;
    m.add_class::<PairModel>()?;
    m.add_class::<TargetModel>()?;
    m.add_function(wrap_pyfunction!(simulate_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(fit_pair, m)?)?;
    m.add_function(wrap_pyfunction!(pair_nll, m)?)?;
    m.add_function(wrap_pyfunction!(gcp_predict, m)?)?;
    m.add_function(wrap_pyfunction!(full_predict, m)?)?;
    m.add_function(wrap_pyfunction!(poe, m)?)?;
    m.add_function(wrap_pyfunction!(mae, m)?)?;
    m.add_function(wrap_pyfunction!(smse, m)?)?;
    m.add_function(wrap_pyfunction!(cross_covariance, m)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_become_row_major_inputs() {
        let x = rows_to_inputs(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        assert_eq!((x.nrows(), x.ncols()), (3, 2));
        assert_eq!(x[(1, 0)], 3.0);
        assert_eq!(x[(2, 1)], 6.0);
        assert!(rows_to_inputs(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }
}
