use serde::{Deserialize, Serialize};

use super::{is_update_round, AdaConfig, ClientMode, LayerRound};
use crate::compressors::{
    self, predictive_encode, predictor_roundtrip, subspace_project, subspace_reconstruct,
    CompressedUpdate, PredictorMemory,
};
use crate::error::{ensure_input, ensure_shape, Error, Result};
use crate::metrics::{meets_threshold, measure_svd, narrow_svd, CorrelationKind, CorrelationReading, TruncatedSvd};
use crate::numerics::{columns_to_matrix, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdaTag {
    Update,
    Spatial,
    Pred,
}

/// Which branch an update round takes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdaPolicy {
    /// Spatial mode iff the measured conserved energy ratio reaches α.
    #[default]
    Adaptive,
    /// Periodic-refresh SVD projection regardless of the measurement.
    AlwaysSpatial,
    /// Predictive coding regardless of the measurement.
    AlwaysPredictive,
}

#[derive(Debug, Clone)]
pub struct AdaState {
    pub tag: AdaTag,
    /// Present iff `tag == Spatial`.
    pub basis: Option<TruncatedSvd>,
}

/// AdaSVDFed controller for one layer of dimension `d` across `k` clients.
#[derive(Debug, Clone)]
pub struct AdaSvdFed {
    cfg: AdaConfig,
    policy: AdaPolicy,
    d: usize,
    state: AdaState,
    client_mem: Vec<PredictorMemory>,
    server_mem: Vec<PredictorMemory>,
}

impl AdaSvdFed {
    pub fn new(k: usize, d: usize, cfg: AdaConfig, policy: AdaPolicy) -> Result<Self> {
        cfg.validate()?;
        ensure_input!(k >= 1, "need at least one client");
        ensure_input!(d >= 1, "layer dimension must be positive");
        let mem = PredictorMemory::new(d, cfg.h);
        Ok(Self {
            policy,
            d,
            state: AdaState {
                tag: AdaTag::Update,
                basis: None,
            },
            client_mem: vec![mem.clone(); k],
            server_mem: vec![mem; k],
            cfg,
        })
    }

    pub fn state(&self) -> &AdaState {
        &self.state
    }

    pub fn client_memory(&self, k: usize) -> &PredictorMemory {
        &self.client_mem[k]
    }

    pub fn server_memory(&self, k: usize) -> &PredictorMemory {
        &self.server_mem[k]
    }

    /// Processes round `t` (1-based) given every client's raw layer update.
    pub fn round(&mut self, t: usize, updates: &[&[f64]]) -> Result<LayerRound> {
        let k = self.client_mem.len();
        ensure_shape!(updates.len() == k, "expected {k} client updates, got {}", updates.len());
        for g in updates {
            ensure_shape!(g.len() == self.d, "update has length {}, layer has {}", g.len(), self.d);
        }
        if is_update_round(t, self.cfg.t_u) {
            self.state = AdaState {
                tag: AdaTag::Update,
                basis: None,
            };
        }
        let mut out = LayerRound::new(k);
        match self.state.tag {
            AdaTag::Update => self.update_round(t, updates, &mut out)?,
            AdaTag::Spatial => self.spatial_round(updates, &mut out)?,
            AdaTag::Pred => self.pred_round(updates, &mut out)?,
        }
        Ok(out)
    }

    fn update_round(&mut self, t: usize, updates: &[&[f64]], out: &mut LayerRound) -> Result<()> {
        let g = columns_to_matrix(self.d, updates.iter().copied());
        let m = measure_svd(&g, self.cfg.beta)?;
        out.readings.push(CorrelationReading {
            round: t,
            kind: CorrelationKind::Spatial,
            alpha: m.alpha,
            r_used: m.rank,
            sample_count: m.sample_count,
        });
        let spatial = match self.policy {
            AdaPolicy::Adaptive => meets_threshold(m.alpha, self.cfg.alpha),
            AdaPolicy::AlwaysSpatial => true,
            AdaPolicy::AlwaysPredictive => false,
        };
        if spatial {
            let basis = narrow_svd(&g, self.cfg.alpha)?;
            out.broadcast_downlink = (self.d * basis.r) as u64;
            out.ranks.push(basis.r);
            self.state = AdaState {
                tag: AdaTag::Spatial,
                basis: Some(basis),
            };
        } else {
            for (j, g) in updates.iter().enumerate() {
                self.client_mem[j].push(g)?;
                self.server_mem[j].push(g)?;
            }
            self.state = AdaState {
                tag: AdaTag::Pred,
                basis: None,
            };
        }
        for (j, g) in updates.iter().enumerate() {
            out.reconstructions.push(Vector::from_column_slice(g));
            out.uplink[j] = self.d as u64;
            out.modes.push(ClientMode::Update);
        }
        Ok(())
    }

    fn spatial_round(&mut self, updates: &[&[f64]], out: &mut LayerRound) -> Result<()> {
        let u_r = &self
            .state
            .basis
            .as_ref()
            .ok_or_else(|| Error::ProtocolViolation("spatial state without a basis".into()))?
            .u_r;
        for (j, g) in updates.iter().enumerate() {
            let payload = CompressedUpdate::SubspaceCoeffs(subspace_project(g, u_r)?.as_slice().to_vec());
            out.uplink[j] = payload.uplink_element_count();
            let CompressedUpdate::SubspaceCoeffs(c) = compressors::decode(&compressors::encode(&payload))? else {
                return Err(Error::ProtocolViolation("subspace payload changed variant in transit".into()));
            };
            out.reconstructions.push(subspace_reconstruct(&c, u_r)?);
            out.modes.push(ClientMode::Spatial);
        }
        Ok(())
    }

    fn pred_round(&mut self, updates: &[&[f64]], out: &mut LayerRound) -> Result<()> {
        for (j, g) in updates.iter().enumerate() {
            let (coeffs, residual) = predictive_encode(&self.client_mem[j], g, self.cfg.residual_fraction)?;
            let client_hat = predictor_roundtrip(&self.client_mem[j], coeffs.as_slice(), &residual)?;
            let payload = CompressedUpdate::Predictive {
                coeffs: coeffs.as_slice().to_vec(),
                residual,
            };
            out.uplink[j] = payload.uplink_element_count();
            out.index_overhead[j] = payload.index_overhead();

            let CompressedUpdate::Predictive { coeffs, residual } =
                compressors::decode(&compressors::encode(&payload))?
            else {
                return Err(Error::ProtocolViolation("predictive payload changed variant in transit".into()));
            };
            let server_hat = predictor_roundtrip(&self.server_mem[j], &coeffs, &residual)?;
            if server_hat != client_hat {
                return Err(Error::ProtocolViolation(format!(
                    "client {j} and server reconstructions diverged"
                )));
            }
            self.client_mem[j].push(client_hat.as_slice())?;
            self.server_mem[j].push(server_hat.as_slice())?;
            out.reconstructions.push(server_hat);
            out.modes.push(ClientMode::Pred);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(alpha: f64, beta: f64) -> AdaConfig {
        AdaConfig {
            t_u: 3,
            alpha,
            beta,
            h: 2,
            residual_fraction: 0.25,
        }
    }

    #[test]
    fn identical_updates_select_spatial() {
        let mut ada = AdaSvdFed::new(2, 4, cfg(0.8, 0.5), AdaPolicy::Adaptive).unwrap();
        let g = [1.0, 0.0, 0.0, 0.0];
        let out = ada.round(1, &[&g, &g]).unwrap();
        assert_eq!(ada.state().tag, AdaTag::Spatial);
        assert_eq!(ada.state().basis.as_ref().unwrap().r, 1);
        assert_eq!(out.broadcast_downlink, 4);
        assert_eq!(out.uplink, vec![4, 4]);
        assert_eq!(out.readings[0].alpha, 1.0);

        let in_span = [-3.0, 0.0, 0.0, 0.0];
        let out = ada.round(2, &[&in_span, &g]).unwrap();
        assert_eq!(out.uplink, vec![1, 1]);
        assert_eq!(out.reconstructions[0].as_slice(), &in_span);
        assert_eq!(out.broadcast_downlink, 0);
    }

    #[test]
    fn orthogonal_updates_select_pred() {
        let mut ada = AdaSvdFed::new(2, 3, cfg(0.8, 0.5), AdaPolicy::Adaptive).unwrap();
        let out = ada.round(1, &[&[1., 0., 0.], &[0., 1., 0.]]).unwrap();
        assert!((out.readings[0].alpha - 0.5).abs() < 1e-12);
        assert_eq!(ada.state().tag, AdaTag::Pred);
        assert_eq!(out.broadcast_downlink, 0);
        assert_eq!(ada.client_memory(0).filled(), 1);
        assert_eq!(ada.server_memory(1).columns().column(0).as_slice(), &[0., 1., 0.]);

        let out = ada.round(2, &[&[2., 0., 1.], &[0., 1., 0.]]).unwrap();
        assert_eq!(out.modes, vec![ClientMode::Pred; 2]);
        // coefficients h = 2 plus k = ceil(0.25 · 3) = 1 residual value
        assert_eq!(out.uplink, vec![3, 3]);
        assert_eq!(out.index_overhead, vec![1, 1]);
        assert_eq!(out.reconstructions[0].as_slice(), &[2., 0., 1.]);
        assert_eq!(ada.client_memory(0), ada.server_memory(0));

        ada.round(3, &[&[1., 1., 1.], &[1., 1., 1.]]).unwrap();
        let out = ada.round(4, &[&[1., 1., 1.], &[1., 1., 1.]]).unwrap();
        assert_eq!(out.modes, vec![ClientMode::Update; 2]);
        assert_eq!(ada.state().tag, AdaTag::Spatial);
    }

    #[test]
    fn forced_policies() {
        let g1 = [1., 0., 0.];
        let g2 = [0., 1., 0.];
        let mut sp = AdaSvdFed::new(2, 3, cfg(0.8, 0.5), AdaPolicy::AlwaysSpatial).unwrap();
        let out = sp.round(1, &[&g1, &g2]).unwrap();
        assert_eq!(sp.state().tag, AdaTag::Spatial);
        assert_eq!(out.broadcast_downlink, 6);

        let mut pr = AdaSvdFed::new(2, 3, cfg(0.0, 0.5), AdaPolicy::AlwaysPredictive).unwrap();
        pr.round(1, &[&g1, &g1]).unwrap();
        assert_eq!(pr.state().tag, AdaTag::Pred);
    }

    #[test]
    fn rejects_inconsistent_shapes() {
        let mut ada = AdaSvdFed::new(2, 3, cfg(0.8, 0.5), AdaPolicy::Adaptive).unwrap();
        assert!(matches!(ada.round(1, &[&[1., 0., 0.]]), Err(Error::ShapeMismatch(_))));
        assert!(matches!(ada.round(1, &[&[1., 0., 0.], &[1., 0.]]), Err(Error::ShapeMismatch(_))));
    }
}
