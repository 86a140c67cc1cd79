//! Deterministic FedAvg simulator with pluggable per-layer compression.

mod ledger;
mod model;
mod partition;
mod probe;
mod sim;

use serde::{Deserialize, Serialize};

use crate::adaptive::{AdaConfig, PcaFedConfig};
use crate::error::{ensure_input, Result};

pub use ledger::{CommLedger, LedgerDelta, LedgerTotals};
pub use model::{LayerSpec, Model, ModelKind};
pub use partition::{partition, Partition};
pub use probe::{ProbeConfig, Prober};
pub use sim::{
    aggregate, local_update, run_experiment, summarize, Experiment, LayerStateRecord, RoundRecord,
    RunOptions, SummaryRow,
};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    #[default]
    None,
    /// Periodic SVD subspace refresh, always spatial.
    Svdfed,
    Adasvdfed,
    Pcafed,
    /// Periodic raw refresh followed by predictive coding.
    Predictive,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::None => "none",
            Scheme::Svdfed => "svdfed",
            Scheme::Adasvdfed => "adasvdfed",
            Scheme::Pcafed => "pcafed",
            Scheme::Predictive => "predictive",
        }
    }
}

fn default_validation_fraction() -> f64 {
    0.2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FedConfig {
    pub clients: usize,
    pub tau: usize,
    pub gamma: f64,
    pub rounds: usize,
    #[serde(default)]
    pub momentum: f64,
    #[serde(default)]
    pub weight_decay: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub partition: Partition,
    /// Share of samples held out for validation accuracy.
    #[serde(default = "default_validation_fraction")]
    pub validation_fraction: f64,
    #[serde(default)]
    pub scheme: Scheme,
    /// Used by `svdfed`, `adasvdfed` and `predictive`.
    #[serde(default)]
    pub ada: AdaConfig,
    #[serde(default)]
    pub pcafed: PcaFedConfig,
}

impl FedConfig {
    pub fn validate(&self) -> Result<()> {
        ensure_input!(self.clients >= 1, "clients must be at least 1");
        ensure_input!(self.tau >= 1, "tau must be at least 1");
        ensure_input!(self.gamma > 0.0 && self.gamma.is_finite(), "gamma must be a finite positive number");
        ensure_input!(self.rounds >= 1, "rounds must be at least 1");
        ensure_input!((0.0..1.0).contains(&self.momentum), "momentum must lie in [0, 1)");
        ensure_input!(self.weight_decay >= 0.0, "weight_decay must be non-negative");
        ensure_input!(
            (0.0..1.0).contains(&self.validation_fraction),
            "validation_fraction must lie in [0, 1)"
        );
        if let Partition::LabelLimited { labels_per_client } = self.partition {
            ensure_input!(labels_per_client >= 1, "labels_per_client must be at least 1");
        }
        match self.scheme {
            Scheme::None => Ok(()),
            Scheme::Pcafed => self.pcafed.validate(),
            _ => self.ada.validate(),
        }
    }
}
