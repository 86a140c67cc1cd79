//! Closed-form cost helpers for subspace reuse.

use serde::Serialize;

use crate::error::{ensure_input, Result};

/// Smallest number of rounds `j` for which sending an `m × r` basis once
/// plus `r` coefficients per round is strictly cheaper than `j` raw
/// `m`-vectors: `m·r + r·j < j·m`.
pub fn breakeven(m: u64, r: u64) -> Result<u64> {
    ensure_input!(r >= 1 && r < m, "break-even needs 0 < r < m, got m={m}, r={r}");
    Ok(m * r / (m - r) + 1)
}

/// Largest reuse count over which per-round drift of angle `θ = acos(c)`
/// is tolerated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Horizon {
    /// `⌊2π/θ⌋`; `None` when `θ = 0`.
    pub full_turn: Option<u64>,
    /// `⌊π/(2θ)⌋`, which keeps the accumulated angle within a quarter turn.
    pub quarter_turn: Option<u64>,
    pub theta: f64,
}

pub fn horizon(c: f64) -> Result<Horizon> {
    ensure_input!(c > 0.0 && c <= 1.0, "cosine bound must lie in (0, 1], got {c}");
    let theta = c.acos();
    let count = |span: f64| (theta > 0.0).then(|| (span / theta + 1e-9).floor() as u64);
    Ok(Horizon {
        full_turn: count(2.0 * std::f64::consts::PI),
        quarter_turn: count(std::f64::consts::FRAC_PI_2),
        theta,
    })
}
