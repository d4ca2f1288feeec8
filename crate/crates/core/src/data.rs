use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::covariance::Inputs;
use crate::error::{Error, Result};

/// Observations of one output: inputs (one row per point) and responses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputData {
    pub id: String,
    pub x: Inputs,
    pub y: DVector<f64>,
}

impl OutputData {
    pub fn new(id: impl Into<String>, x: Inputs, y: DVector<f64>) -> Result<Self> {
        let id = id.into();
        if x.nrows() != y.len() {
            return Err(Error::Argument(format!(
                "output {id}: {} input rows but {} responses",
                x.nrows(),
                y.len()
            )));
        }
        Ok(OutputData { id, x, y })
    }

    /// One-dimensional inputs.
    pub fn from_1d(id: impl Into<String>, xs: &[f64], ys: &[f64]) -> Result<Self> {
        Self::new(
            id,
            Inputs::from_column_slice(xs.len(), 1, xs),
            DVector::from_column_slice(ys),
        )
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    /// Subset of the observations at the given row indices.
    pub fn select(&self, rows: &[usize]) -> OutputData {
        OutputData {
            id: self.id.clone(),
            x: self.x.select_rows(rows),
            y: self.y.select_rows(rows),
        }
    }

    pub fn row(&self, r: usize) -> Vec<f64> {
        self.x.row(r).iter().copied().collect()
    }
}

/// Per-output affine transform applied by standardization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: f64,
    pub std: f64,
}

impl Standardization {
    pub fn apply(&self, y: f64) -> f64 {
        (y - self.mean) / self.std
    }

    pub fn invert(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }

    pub fn invert_variance(&self, v: f64) -> f64 {
        v * self.std * self.std
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub outputs: Vec<OutputData>,
    /// Present when the responses were standardized; one entry per output.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<Vec<Standardization>>,
}

impl Dataset {
    pub fn new(outputs: Vec<OutputData>) -> Result<Self> {
        let ds = Dataset { outputs, meta: None };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        let dim = self.dim();
        for (k, o) in self.outputs.iter().enumerate() {
            if o.dim() != dim {
                return Err(Error::Argument(format!(
                    "output {} has input dimension {} but output {} has {dim}",
                    o.id,
                    o.dim(),
                    self.outputs[0].id
                )));
            }
            if o.x.nrows() != o.y.len() {
                return Err(Error::Argument(format!("output {}: row count mismatch", o.id)));
            }
            if self.outputs[..k].iter().any(|p| p.id == o.id) {
                return Err(Error::Argument(format!("duplicate output id {}", o.id)));
            }
        }
        if let Some(meta) = &self.meta {
            if meta.len() != self.outputs.len() {
                return Err(Error::Argument("standardization record length mismatch".into()));
            }
        }
        Ok(())
    }

    pub fn n_outputs(&self) -> usize {
        self.outputs.len()
    }

    pub fn dim(&self) -> usize {
        self.outputs.first().map_or(0, |o| o.dim())
    }

    pub fn total_points(&self) -> usize {
        self.outputs.iter().map(|o| o.len()).sum()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.outputs.iter().position(|o| o.id == id)
    }
}

/// Sample mean and standard deviation (n − 1 denominator).
pub fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
