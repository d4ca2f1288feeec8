use crate::error::{Error, Result};

fn check_lengths(pred: &[f64], truth: &[f64]) -> Result<()> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(Error::Argument(format!(
            "metric needs equal nonempty lengths, got {} and {}",
            pred.len(),
            truth.len()
        )));
    }
    Ok(())
}

/// Mean absolute error.
pub fn mae(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_lengths(pred, truth)?;
    Ok(pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum::<f64>() / pred.len() as f64)
}

/// Mean squared error divided by `truth_variance`.
pub fn smse(pred: &[f64], truth: &[f64], truth_variance: f64) -> Result<f64> {
    check_lengths(pred, truth)?;
    if !(truth_variance > 0.0 && truth_variance.is_finite()) {
        return Err(Error::Argument(format!(
            "truth variance must be positive, got {truth_variance}"
        )));
    }
    let mse = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / pred.len() as f64;
    Ok(mse / truth_variance)
}

/// [`smse`] normalized by the sample variance (n − 1 denominator) of `truth`.
pub fn smse_sample(pred: &[f64], truth: &[f64]) -> Result<f64> {
    let (_, sd) = crate::data::mean_std(truth);
    smse(pred, truth, sd * sd)
}
