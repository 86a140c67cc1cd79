use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{LabeledDataset, Task};
use crate::error::{ensure_input, Result};

/// Regression data together with the coefficients that generated it.
#[derive(Debug, Clone)]
pub struct LinregData {
    pub dataset: LabeledDataset,
    pub x_star: Vec<f64>,
}

/// `y = R x* + noise · ε` with standard-normal `R`, `x*` and `ε`.
pub fn synth_linreg(n: usize, d: usize, noise: f64, seed: u64) -> Result<LinregData> {
    ensure_input!(n >= 1 && d >= 1, "need n ≥ 1 and d ≥ 1");
    ensure_input!(noise >= 0.0 && noise.is_finite(), "noise must be non-negative");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x_star: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let mut features = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let row: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let eps: f64 = rng.sample(StandardNormal);
        labels.push(row.iter().zip(&x_star).map(|(a, b)| a * b).sum::<f64>() + noise * eps);
        features.extend(row);
    }
    Ok(LinregData {
        dataset: LabeledDataset::new(features, d, labels, Task::Regression)?,
        x_star,
    })
}

/// Two Gaussian blobs separated along a random unit direction `u`.
///
/// Each sample is standard normal in the directions orthogonal to `u`; along
/// `u` it sits at `y · (margin/2 + |e|)` with `e` standard normal, so the
/// classes are linearly separable with the given margin.
pub fn synth_logreg(n: usize, d: usize, margin: f64, seed: u64) -> Result<LabeledDataset> {
    ensure_input!(n >= 1 && d >= 1, "need n ≥ 1 and d ≥ 1");
    ensure_input!(margin >= 0.0 && margin.is_finite(), "margin must be non-negative");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    u.iter_mut().for_each(|x| *x /= norm);

    let mut features = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let y = if rng.gen::<bool>() { 1.0 } else { -1.0 };
        let mut z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let along: f64 = z.iter().zip(&u).map(|(a, b)| a * b).sum();
        let e: f64 = rng.sample(StandardNormal);
        let target = y * (margin / 2.0 + e.abs());
        for (zi, ui) in z.iter_mut().zip(&u) {
            *zi += (target - along) * ui;
        }
        features.extend(z);
        labels.push(y);
    }
    LabeledDataset::new(features, d, labels, Task::Binary)
}
