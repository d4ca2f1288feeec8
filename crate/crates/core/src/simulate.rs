//! Seeded generators for the benchmark simulation settings, and per-output
//! standardization.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{mean_std, Dataset, OutputData, Standardization};
use crate::error::{Error, Result};

/// Noise-free signal of one simulated output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Truth {
    /// `1 + sin x`
    Sine,
    /// `1 + e x²`
    Quadratic { e: f64 },
    /// Queue-inspired families: 1 → `x²`, 2 → `x²/(2(1-x))`, 3 → `x²/(1-x)`.
    Queue { family: u8 },
}

impl Truth {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Truth::Sine => 1.0 + x.sin(),
            Truth::Quadratic { e } => 1.0 + e * x * x,
            Truth::Queue { family: 1 } => x * x,
            Truth::Queue { family: 2 } => x * x / (2.0 * (1.0 - x)),
            Truth::Queue { .. } => x * x / (1.0 - x),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulated {
    pub dataset: Dataset,
    /// One entry per output, aligned with `dataset.outputs`.
    pub truths: Vec<Truth>,
    /// Input range on which predictions for the target output are scored.
    pub test_domain: (f64, f64),
}

impl Simulated {
    /// The output predicted in benchmarks: always the last one.
    pub fn target(&self) -> usize {
        self.dataset.n_outputs() - 1
    }
}

/// `n` evenly spaced points from `lo` to `hi` with both endpoints exact.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n)
            .map(|k| {
                if k + 1 == n {
                    hi
                } else {
                    lo + (hi - lo) * k as f64 / (n - 1) as f64
                }
            })
            .collect(),
    }
}

fn noisy_output(id: String, xs: &[f64], truth: &Truth, sigma: f64, rng: &mut ChaCha8Rng) -> Result<OutputData> {
    let noise = Normal::new(0.0, sigma).map_err(|e| Error::Argument(format!("invalid noise level: {e}")))?;
    let ys: Vec<f64> = xs
        .iter()
        .map(|&x| {
            let f = truth.eval(x);
            if sigma == 0.0 {
                f
            } else {
                f + noise.sample(rng)
            }
        })
        .collect();
    OutputData::from_1d(id, xs, &ys)
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::Argument(format!("noise level must be >= 0, got {sigma}")));
    }
    Ok(())
}

/// `N` outputs sharing `1 + sin x` on `p` evenly spaced points of `[0, 10]`.
pub fn gen_setting1(n: usize, p: usize, sigma: f64, seed: u64) -> Result<Simulated> {
    if n < 2 || p < 2 {
        return Err(Error::Argument("setting 1 needs N >= 2 and p >= 2".into()));
    }
    check_sigma(sigma)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xs = linspace(0.0, 10.0, p);
    let outputs = (0..n)
        .map(|k| noisy_output((k + 1).to_string(), &xs, &Truth::Sine, sigma, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    Ok(Simulated {
        dataset: Dataset::new(outputs)?,
        truths: vec![Truth::Sine; n],
        test_domain: (0.0, 10.0),
    })
}

/// Quadratics `1 + e x²` with `e ~ U(0.8, 1.2)` drawn per output. Training outputs
/// cover `[0, 10]`; the target (last) output is observed only on `[0, 7]`.
pub fn gen_setting2(n: usize, p_train: usize, p_target: usize, sigma: f64, seed: u64) -> Result<Simulated> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coefficients: Vec<f64> = (0..n).map(|_| rng.random_range(0.8..1.2)).collect();
    setting2_from(&coefficients, p_train, p_target, sigma, &mut rng)
}

/// [`gen_setting2`] with the per-output coefficients given.
pub fn gen_setting2_with_coefficients(
    coefficients: &[f64],
    p_train: usize,
    p_target: usize,
    sigma: f64,
    seed: u64,
) -> Result<Simulated> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    setting2_from(coefficients, p_train, p_target, sigma, &mut rng)
}

fn setting2_from(
    coefficients: &[f64],
    p_train: usize,
    p_target: usize,
    sigma: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Simulated> {
    let n = coefficients.len();
    if n < 2 || p_train < 2 || p_target < 2 {
        return Err(Error::Argument(
            "setting 2 needs N >= 2 and at least two points per output".into(),
        ));
    }
    check_sigma(sigma)?;
    let truths: Vec<Truth> = coefficients.iter().map(|&e| Truth::Quadratic { e }).collect();
    let mut outputs = Vec::with_capacity(n);
    for (k, t) in truths.iter().enumerate() {
        let xs = if k + 1 == n {
            linspace(0.0, 7.0, p_target)
        } else {
            linspace(0.0, 10.0, p_train)
        };
        outputs.push(noisy_output((k + 1).to_string(), &xs, t, sigma, rng)?);
    }
    Ok(Simulated {
        dataset: Dataset::new(outputs)?,
        truths,
        test_domain: (0.0, 10.0),
    })
}

/// Family of each of the eight outputs of setting 3.
pub const SETTING3_FAMILIES: [u8; 8] = [1, 1, 1, 1, 2, 2, 3, 3];

/// Eight queue-inspired outputs on 7 evenly spaced points of `[0, 0.8]`.
pub fn gen_setting3(sigma: f64, seed: u64) -> Result<Simulated> {
    check_sigma(sigma)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xs = linspace(0.0, 0.8, 7);
    let truths: Vec<Truth> = SETTING3_FAMILIES
        .iter()
        .map(|&family| Truth::Queue { family })
        .collect();
    let outputs = truths
        .iter()
        .enumerate()
        .map(|(k, t)| noisy_output((k + 1).to_string(), &xs, t, sigma, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    Ok(Simulated {
        dataset: Dataset::new(outputs)?,
        truths,
        test_domain: (0.0, 0.8),
    })
}

/// Rescales every output to zero sample mean and unit sample standard deviation.
pub fn standardize(dataset: &Dataset) -> Result<Dataset> {
    if dataset.meta.is_some() {
        return Err(Error::Argument("dataset is already standardized".into()));
    }
    let mut outputs = Vec::with_capacity(dataset.n_outputs());
    let mut meta = Vec::with_capacity(dataset.n_outputs());
    for o in &dataset.outputs {
        let (mean, std) = mean_std(o.y.as_slice());
        if !(std > 0.0 && std.is_finite()) {
            return Err(Error::DegenerateData(format!(
                "output '{}' has zero sample variance",
                o.id
            )));
        }
        let s = Standardization { mean, std };
        let mut out = o.clone();
        out.y.apply(|v| *v = s.apply(*v));
        outputs.push(out);
        meta.push(s);
    }
    Ok(Dataset {
        outputs,
        meta: Some(meta),
    })
}

/// Inverse of [`standardize`].
pub fn destandardize(dataset: &Dataset) -> Dataset {
    let Some(meta) = &dataset.meta else {
        return dataset.clone();
    };
    let outputs = dataset
        .outputs
        .iter()
        .zip(meta)
        .map(|(o, s)| {
            let mut out = o.clone();
            out.y.apply(|v| *v = s.invert(*v));
            out
        })
        .collect();
    Dataset { outputs, meta: None }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn setting1_shape_and_truth() {
        let s = gen_setting1(5, 10, 0.1, 1).unwrap();
        assert_eq!(s.dataset.n_outputs(), 5);
        assert_eq!(s.dataset.total_points(), 50);
        assert_eq!(Truth::Sine.eval(0.0), 1.0);
        let x = &s.dataset.outputs[0].x;
        assert_eq!(x[(0, 0)], 0.0);
        assert_eq!(x[(9, 0)], 10.0);
    }

    #[test]
    fn noiseless_setting1_lies_on_curve() {
        let s = gen_setting1(3, 6, 0.0, 4).unwrap();
        for o in &s.dataset.outputs {
            for r in 0..o.len() {
                assert_eq!(o.y[r], 1.0 + o.x[(r, 0)].sin());
            }
        }
    }

    #[test]
    fn setting2_target_is_truncated() {
        let s = gen_setting2(5, 20, 10, 1.0, 3).unwrap();
        let target = &s.dataset.outputs[4];
        assert_eq!(target.len(), 10);
        assert_eq!(target.x.max(), 7.0);
        assert_eq!(s.dataset.outputs[0].len(), 20);
        for t in &s.truths {
            let Truth::Quadratic { e } = t else { panic!() };
            assert!((0.8..1.2).contains(e));
        }
        let forced = gen_setting2_with_coefficients(&[1.0, 1.0], 20, 10, 1.0, 3).unwrap();
        assert_eq!(forced.truths[0].eval(3.0), 10.0);
    }

    #[test]
    fn setting3_families() {
        let s = gen_setting3(0.005, 2).unwrap();
        assert_eq!(s.dataset.total_points(), 56);
        assert!((Truth::Queue { family: 2 }.eval(0.5) - 0.25).abs() < 1e-15);
        assert!((Truth::Queue { family: 3 }.eval(0.5) - 0.5).abs() < 1e-15);
        let clean = gen_setting3(0.0, 2).unwrap();
        let o = &clean.dataset.outputs[0];
        for r in 0..o.len() {
            assert_eq!(o.y[r], o.x[(r, 0)] * o.x[(r, 0)]);
        }
    }

    #[test]
    fn same_seed_same_bits() {
        let a = gen_setting1(5, 10, 0.1, 77).unwrap();
        let b = gen_setting1(5, 10, 0.1, 77).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, gen_setting1(5, 10, 0.1, 78).unwrap());
    }

    #[test]
    fn injected_noise_has_requested_spread() {
        let s = gen_setting1(2, 5000, 0.3, 9).unwrap();
        let resid: Vec<f64> = s
            .dataset
            .outputs
            .iter()
            .flat_map(|o| (0..o.len()).map(move |r| o.y[r] - 1.0 - o.x[(r, 0)].sin()))
            .collect();
        let (_, sd) = mean_std(&resid);
        assert!((sd - 0.3).abs() / 0.3 < 0.03, "{sd}");
    }

    #[test]
    fn standardize_simple_vector() {
        let ds = Dataset::new(vec![
            OutputData::from_1d("a", &[0.0, 1.0, 2.0], &[1.0, 2.0, 3.0]).unwrap()
        ])
        .unwrap();
        let z = standardize(&ds).unwrap();
        assert_eq!(z.outputs[0].y.as_slice(), &[-1.0, 0.0, 1.0]);
        let back = destandardize(&z);
        assert_eq!(back, ds);
    }

    #[test]
    fn standardize_gives_unit_moments_and_round_trips() {
        let s = gen_setting2(4, 20, 10, 1.0, 5).unwrap();
        let z = standardize(&s.dataset).unwrap();
        for o in &z.outputs {
            let (m, sd) = mean_std(o.y.as_slice());
            assert!(m.abs() < 1e-12 && (sd - 1.0).abs() < 1e-12);
        }
        let back = destandardize(&z);
        for (a, b) in back.outputs.iter().zip(&s.dataset.outputs) {
            for (u, v) in a.y.iter().zip(b.y.iter()) {
                assert!((u - v).abs() < 1e-12 * v.abs().max(1.0));
            }
        }
    }

    #[test]
    fn constant_output_cannot_be_standardized() {
        let ds = Dataset::new(vec![OutputData::from_1d("a", &[0.0, 1.0], &[2.0, 2.0]).unwrap()]).unwrap();
        assert!(matches!(standardize(&ds), Err(Error::DegenerateData(_))));
    }
}
