//! Adaptive compression controllers.
//!
//! Each controller owns the state for a single layer and turns one round of
//! raw client updates into the server-side reconstructions, together with
//! the element counts the communication ledger needs.

mod ada;
mod pcafed;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_input, Result};
use crate::metrics::{CorrelationReading, RankBudget};
use crate::numerics::Vector;

pub use ada::{AdaPolicy, AdaState, AdaSvdFed, AdaTag};
pub use pcafed::{
    pcafed_update_states, ClientState, PcaFed, PcaTag, SharingCase, StateSelection,
};

/// What a client did in one round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClientMode {
    /// Raw update sent on a scheduled update round.
    Update,
    Spatial,
    Pred,
    Pca,
    /// LocalPCA client that found enough structure and fitted its own basis.
    LocalPca,
    /// LocalPCA client that fell back to a raw update.
    Raw,
}

/// One controller step for one layer.
#[derive(Debug, Clone)]
pub struct LayerRound {
    pub reconstructions: Vec<Vector>,
    /// Real-valued uplink elements per client.
    pub uplink: Vec<u64>,
    /// Sparse-index overhead per client, not included in `uplink`.
    pub index_overhead: Vec<u64>,
    /// Elements broadcast once to every client (shared bases).
    pub broadcast_downlink: u64,
    /// Elements sent to individual clients (per-client bases).
    pub client_downlink: Vec<u64>,
    pub modes: Vec<ClientMode>,
    pub sharing_case: Option<SharingCase>,
    /// Ranks of every basis fitted this round.
    pub ranks: Vec<usize>,
    pub readings: Vec<CorrelationReading>,
}

impl LayerRound {
    fn new(k: usize) -> Self {
        Self {
            reconstructions: Vec::with_capacity(k),
            uplink: vec![0; k],
            index_overhead: vec![0; k],
            broadcast_downlink: 0,
            client_downlink: vec![0; k],
            modes: Vec::with_capacity(k),
            sharing_case: None,
            ranks: Vec::new(),
            readings: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaConfig {
    pub t_u: usize,
    pub alpha: f64,
    pub beta: f64,
    pub h: usize,
    pub residual_fraction: f64,
}

impl Default for AdaConfig {
    fn default() -> Self {
        Self {
            t_u: 3,
            alpha: 0.8,
            beta: 0.2,
            h: 5,
            residual_fraction: 0.05,
        }
    }
}

impl AdaConfig {
    pub fn validate(&self) -> Result<()> {
        validate_common(self.t_u, self.alpha, self.beta, self.h)?;
        ensure_input!(
            self.residual_fraction > 0.0 && self.residual_fraction <= 1.0,
            "residual_fraction must lie in (0, 1], got {}",
            self.residual_fraction
        );
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PcaFedConfig {
    pub t_u: usize,
    pub alpha: f64,
    pub beta: f64,
    pub h: usize,
    pub rank_budget: RankBudget,
}

impl Default for PcaFedConfig {
    fn default() -> Self {
        Self {
            t_u: 3,
            alpha: 0.8,
            beta: 0.2,
            h: 5,
            rank_budget: RankBudget::SampleLimited,
        }
    }
}

impl PcaFedConfig {
    pub fn validate(&self) -> Result<()> {
        validate_common(self.t_u, self.alpha, self.beta, self.h)
    }
}

fn validate_common(t_u: usize, alpha: f64, beta: f64, h: usize) -> Result<()> {
    ensure_input!(t_u >= 2, "t_u must be at least 2, got {t_u}");
    ensure_input!((0.0..=1.0).contains(&alpha), "alpha must lie in [0, 1], got {alpha}");
    ensure_input!((0.0..=1.0).contains(&beta), "beta must lie in [0, 1], got {beta}");
    ensure_input!(h >= 1, "h must be at least 1");
    Ok(())
}

/// Rounds are 1-based; every `t_u`-th round starting at 1 is an update round.
pub fn is_update_round(t: usize, t_u: usize) -> bool {
    t % t_u == 1 % t_u
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn update_schedule() {
        let hits: Vec<usize> = (1..=10).filter(|&t| is_update_round(t, 3)).collect();
        assert_eq!(hits, vec![1, 4, 7, 10]);
    }

    #[test]
    fn config_validation() {
        assert!(AdaConfig::default().validate().is_ok());
        assert!(PcaFedConfig::default().validate().is_ok());
        assert!(AdaConfig { t_u: 1, ..Default::default() }.validate().is_err());
        assert!(AdaConfig { residual_fraction: 0.0, ..Default::default() }.validate().is_err());
        assert!(PcaFedConfig { alpha: 1.5, ..Default::default() }.validate().is_err());
        assert!(PcaFedConfig { h: 0, ..Default::default() }.validate().is_err());
    }
}
