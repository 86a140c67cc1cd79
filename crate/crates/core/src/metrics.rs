//! Correlation measurement.
//!
//! Two energy ratios drive every adaptive decision:
//!
//! * the *conserved energy ratio* (CER) of an observation matrix, the share
//!   of squared singular-value mass held by the top `r` singular values;
//! * the *approximate energy ratio* (AER) of a sample set, which adds the
//!   squared norm of the sample mean to both the numerator and denominator of
//!   the PCA explained-variance ratio.
//!
//! `measure_*` evaluates a ratio at a rank budget `ceil(β·k)`; `narrow_*`
//! returns the smallest basis whose ratio reaches a threshold `α`. Both
//! ratios are defined as 0 when all energy is zero, and threshold checks use
//! `ratio ≥ α` (with [`ENERGY_TOL`] slack for rounding).

use serde::{Deserialize, Serialize};

use crate::error::{ensure_input, ensure_shape, Error, Result};
use crate::numerics::{thin_svd, sym_eig_desc, Matrix, Vector};

/// Absolute slack applied when comparing an energy ratio against a threshold.
pub const ENERGY_TOL: f64 = 1e-12;

/// Slack applied before rounding `β·k` up, so `0.2 · 20` maps to 4 rather
/// than 5 when the product picks up a rounding error.
const CEIL_SLACK: f64 = 1e-9;

pub fn meets_threshold(ratio: f64, alpha: f64) -> bool {
    ratio + ENERGY_TOL >= alpha
}

/// `ceil(fraction · k)`, clamped to `[0, k]`.
pub fn ceil_rank(fraction: f64, k: usize) -> usize {
    let x = (fraction * k as f64 - CEIL_SLACK).ceil();
    if x <= 0.0 {
        0
    } else {
        (x as usize).min(k)
    }
}

fn check_unit(name: &str, x: f64) -> Result<()> {
    ensure_input!((0.0..=1.0).contains(&x), "{name} must lie in [0, 1], got {x}");
    Ok(())
}

/// Cosine similarity with the zero-vector convention: 0 when either input
/// is zero.
pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64> {
    ensure_shape!(u.len() == v.len(), "vectors have lengths {} and {}", u.len(), v.len());
    let (mut dot, mut nu, mut nv) = (0.0, 0.0, 0.0);
    for (a, b) in u.iter().zip(v) {
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    if nu == 0.0 || nv == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / (nu * nv).sqrt()).clamp(-1.0, 1.0))
}

fn prefix_ratio(energies: &[f64], base: f64, r: usize) -> f64 {
    let mut acc = base;
    let mut head = base;
    for (i, e) in energies.iter().enumerate() {
        acc += e;
        if i + 1 == r {
            head = acc;
        }
    }
    if r == 0 {
        head = base;
    }
    if acc == 0.0 {
        0.0
    } else {
        head / acc
    }
}

/// `Σ_{i≤r} σ_i² / Σ_i σ_i²`.
pub fn conserved_energy_ratio(sigma: &[f64], r: usize) -> Result<f64> {
    ensure_input!(r <= sigma.len(), "rank {r} exceeds spectrum length {}", sigma.len());
    let energies: Vec<f64> = sigma.iter().map(|s| s * s).collect();
    Ok(prefix_ratio(&energies, 0.0, r))
}

/// `(‖μ‖² + Σ_{i≤r} λ_i) / (‖μ‖² + Σ_i λ_i)`.
pub fn approx_energy_ratio(mu: &Vector, lambda: &[f64], r: usize) -> Result<f64> {
    ensure_input!(r <= lambda.len(), "rank {r} exceeds spectrum length {}", lambda.len());
    Ok(prefix_ratio(lambda, mu.norm_squared(), r))
}

#[derive(Debug, Clone)]
pub struct TruncatedSvd {
    pub u_r: Matrix,
    pub sigma_r: Vec<f64>,
    pub v_r: Matrix,
    pub r: usize,
}

/// A measured energy ratio together with the rank it was evaluated at.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    pub alpha: f64,
    pub rank: usize,
    pub sample_count: usize,
}

/// Conserved energy ratio of `phi` at rank `ceil(β · min(p, q))`.
pub fn measure_corr_svd(phi: &Matrix, beta: f64) -> Result<f64> {
    measure_svd(phi, beta).map(|m| m.alpha)
}

pub fn measure_svd(phi: &Matrix, beta: f64) -> Result<Measurement> {
    check_unit("beta", beta)?;
    let svd = thin_svd(phi)?;
    let r = ceil_rank(beta, svd.sigma.len());
    Ok(Measurement {
        alpha: conserved_energy_ratio(&svd.sigma, r)?,
        rank: r,
        sample_count: phi.ncols(),
    })
}

/// Smallest `r` whose conserved energy ratio reaches `alpha`.
///
/// An all-zero `phi` yields `r = 0`.
pub fn narrow_svd(phi: &Matrix, alpha: f64) -> Result<TruncatedSvd> {
    check_unit("alpha", alpha)?;
    let svd = thin_svd(phi)?;
    let k = svd.sigma.len();
    let total: f64 = svd.sigma.iter().map(|s| s * s).sum();
    let r = if total == 0.0 {
        0
    } else {
        (0..=k)
            .find(|&r| meets_threshold(conserved_energy_ratio(&svd.sigma, r).unwrap_or(0.0), alpha))
            .unwrap_or(k)
    };
    Ok(TruncatedSvd {
        u_r: svd.u.columns(0, r).into_owned(),
        sigma_r: svd.sigma[..r].to_vec(),
        v_r: svd.v.columns(0, r).into_owned(),
        r,
    })
}

/// How `measure_corr_pca` picks its rank budget.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankBudget {
    /// `ceil(β · min(p, sample_count))`.
    #[default]
    SampleLimited,
    /// `ceil(β · p)`, which saturates whenever `sample_count ≤ β·p`.
    StrictPaper,
}

/// Sample mean and covariance spectrum of a set of vectors.
#[derive(Debug, Clone)]
pub struct PcaFit {
    pub mu: Vector,
    /// Non-negative, non-increasing; length `min(p, sample_count)`. The
    /// remaining covariance eigenvalues are zero.
    pub lambda: Vec<f64>,
    /// `p × lambda.len()` orthonormal principal directions.
    pub q: Matrix,
    pub sample_count: usize,
}

impl PcaFit {
    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn energy_ratio(&self, r: usize) -> f64 {
        prefix_ratio(&self.lambda, self.mu.norm_squared(), r.min(self.lambda.len()))
    }

    pub fn measure(&self, beta: f64, budget: RankBudget) -> Result<Measurement> {
        check_unit("beta", beta)?;
        let p = self.dim();
        let r = match budget {
            RankBudget::SampleLimited => ceil_rank(beta, p.min(self.sample_count)),
            RankBudget::StrictPaper => ceil_rank(beta, p),
        };
        Ok(Measurement {
            alpha: self.energy_ratio(r),
            rank: r,
            sample_count: self.sample_count,
        })
    }

    /// Smallest-rank basis whose approximate energy ratio reaches `alpha`.
    pub fn narrow(&self, alpha: f64) -> Result<PcaBasis> {
        check_unit("alpha", alpha)?;
        let k = self.lambda.len();
        let r = if self.energy_ratio(k) == 0.0 {
            0
        } else {
            (0..=k)
                .find(|&r| meets_threshold(self.energy_ratio(r), alpha))
                .unwrap_or(k)
        };
        Ok(PcaBasis {
            q_r: self.q.columns(0, r).into_owned(),
            mu: self.mu.clone(),
            r,
        })
    }
}

/// Mean and principal directions of `samples` (covariance divisor `n − 1`).
///
/// Uses an eigendecomposition of the `p × p` covariance when `p ≤ n` and a
/// thin SVD of the centered `p × n` sample matrix otherwise.
pub fn pca_fit(samples: &[&[f64]]) -> Result<PcaFit> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: n });
    }
    let p = samples[0].len();
    ensure_input!(p >= 1, "samples must be non-empty vectors");
    for s in samples {
        ensure_shape!(s.len() == p, "samples have lengths {p} and {}", s.len());
    }

    let mut mu = Vector::zeros(p);
    for s in samples {
        for (acc, x) in mu.iter_mut().zip(s.iter()) {
            *acc += x;
        }
    }
    mu /= n as f64;

    let mut centered = Matrix::zeros(p, n);
    for (j, s) in samples.iter().enumerate() {
        for (i, (dst, x)) in centered.column_mut(j).iter_mut().zip(s.iter()).enumerate() {
            *dst = x - mu[i];
        }
    }
    let denom = (n - 1) as f64;

    let (lambda, q) = if p <= n {
        let cov = (&centered * centered.transpose()) / denom;
        let eig = sym_eig_desc(&cov)?;
        (eig.lambda, eig.q)
    } else {
        let svd = thin_svd(&centered)?;
        (svd.sigma.iter().map(|s| s * s / denom).collect(), svd.u)
    };
    let lambda = lambda.into_iter().map(|l| l.max(0.0)).collect();
    Ok(PcaFit {
        mu,
        lambda,
        q,
        sample_count: n,
    })
}

/// Approximate energy ratio at rank `ceil(β · min(p, sample_count))`.
pub fn measure_corr_pca(samples: &[&[f64]], beta: f64) -> Result<f64> {
    measure_pca(samples, beta, RankBudget::SampleLimited).map(|m| m.alpha)
}

pub fn measure_pca(samples: &[&[f64]], beta: f64, budget: RankBudget) -> Result<Measurement> {
    check_unit("beta", beta)?;
    pca_fit(samples)?.measure(beta, budget)
}

/// PCA basis with the smallest rank whose approximate energy ratio reaches
/// `alpha`; `r = 0` (mean only) is allowed.
pub fn narrow_pca(samples: &[&[f64]], alpha: f64) -> Result<PcaBasis> {
    pca_fit(samples)?.narrow(alpha)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaBasis {
    pub q_r: Matrix,
    pub mu: Vector,
    pub r: usize,
}

impl PcaBasis {
    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    /// Elements needed to transmit the basis and mean: `p · (r + 1)`.
    pub fn element_count(&self) -> u64 {
        (self.dim() * (self.r + 1)) as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationKind {
    Structural,
    Temporal,
    Spatial,
}

/// One correlation measurement, serialized as a JSONL record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReading {
    pub round: usize,
    pub kind: CorrelationKind,
    pub alpha: f64,
    pub r_used: usize,
    pub sample_count: usize,
}
