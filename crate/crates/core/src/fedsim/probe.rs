//! Correlation probes on uncompressed training runs.
//!
//! Each round the probe measures, for every layer:
//!
//! * structural correlation over the slices of each client's update,
//!   averaged over clients;
//! * temporal correlation over each client's last `h` updates (available
//!   from round `h` on), averaged over clients;
//! * spatial correlation over the current updates of all clients.
//!
//! Layer values are combined with weights proportional to parameter count;
//! `r_used` and `sample_count` report the largest value among contributing
//! measurements.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::model::Model;
use crate::error::{ensure_input, Result};
use crate::metrics::{measure_pca, CorrelationKind, CorrelationReading, Measurement, RankBudget};
use crate::numerics::Vector;
use crate::updates::reshape_to_matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub beta: f64,
    pub h: usize,
    pub rank_budget: RankBudget,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            beta: 0.2,
            h: 5,
            rank_budget: RankBudget::SampleLimited,
        }
    }
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<()> {
        ensure_input!((0.0..=1.0).contains(&self.beta), "probe beta must lie in [0, 1]");
        ensure_input!(self.h >= 2, "probe window must hold at least 2 rounds");
        Ok(())
    }
}

#[derive(Default)]
struct Accum {
    weighted: f64,
    weight: f64,
    r_used: usize,
    samples: usize,
}

impl Accum {
    fn add(&mut self, alpha: f64, weight: f64, m: &Measurement) {
        self.weighted += alpha * weight;
        self.weight += weight;
        self.r_used = self.r_used.max(m.rank);
        self.samples = self.samples.max(m.sample_count);
    }

    fn reading(&self, round: usize, kind: CorrelationKind) -> Option<CorrelationReading> {
        (self.weight > 0.0).then(|| CorrelationReading {
            round,
            kind,
            alpha: self.weighted / self.weight,
            r_used: self.r_used,
            sample_count: self.samples,
        })
    }
}

/// Stateful probe keeping each client's recent raw updates.
#[derive(Debug, Clone)]
pub struct Prober {
    cfg: ProbeConfig,
    windows: Vec<VecDeque<Vector>>,
}

impl Prober {
    pub fn new(cfg: ProbeConfig, clients: usize) -> Self {
        Self {
            windows: vec![VecDeque::with_capacity(cfg.h); clients],
            cfg,
        }
    }

    /// Records round `t`'s raw updates and returns that round's readings.
    pub fn observe(&mut self, t: usize, model: &Model, updates: &[Vector]) -> Result<Vec<CorrelationReading>> {
        ensure_input!(updates.len() == self.windows.len(), "expected one update per client");
        for (w, g) in self.windows.iter_mut().zip(updates) {
            if w.len() == self.cfg.h {
                w.pop_back();
            }
            w.push_front(g.clone());
        }
        let (beta, budget) = (self.cfg.beta, self.cfg.rank_budget);
        let (mut structural, mut temporal, mut spatial) = (Accum::default(), Accum::default(), Accum::default());

        for layer in &model.layers {
            let weight = layer.len() as f64;
            let part = |g: &Vector| -> Vec<f64> { g.as_slice()[layer.range()].to_vec() };

            if layer.reshape.n >= 2 {
                let mut sum = 0.0;
                let mut last = None;
                for g in updates {
                    let gm = reshape_to_matrix(&Vector::from_vec(part(g)), &layer.reshape)?;
                    let slices: Vec<&[f64]> = gm.slices().collect();
                    let m = measure_pca(&slices, beta, budget)?;
                    sum += m.alpha;
                    last = Some(m);
                }
                if let Some(m) = last {
                    structural.add(sum / updates.len() as f64, weight, &m);
                }
            }

            if self.windows.iter().all(|w| w.len() == self.cfg.h) {
                let mut sum = 0.0;
                let mut last = None;
                for w in &self.windows {
                    let parts: Vec<Vec<f64>> = w.iter().map(part).collect();
                    let refs: Vec<&[f64]> = parts.iter().map(Vec::as_slice).collect();
                    let m = measure_pca(&refs, beta, budget)?;
                    sum += m.alpha;
                    last = Some(m);
                }
                if let Some(m) = last {
                    temporal.add(sum / self.windows.len() as f64, weight, &m);
                }
            }

            if updates.len() >= 2 {
                let parts: Vec<Vec<f64>> = updates.iter().map(part).collect();
                let refs: Vec<&[f64]> = parts.iter().map(Vec::as_slice).collect();
                let m = measure_pca(&refs, beta, budget)?;
                spatial.add(m.alpha, weight, &m);
            }
        }

        Ok([
            structural.reading(t, CorrelationKind::Structural),
            temporal.reading(t, CorrelationKind::Temporal),
            spatial.reading(t, CorrelationKind::Spatial),
        ]
        .into_iter()
        .flatten()
        .collect())
    }
}
