use std::collections::VecDeque;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{is_update_round, ClientMode, LayerRound, PcaFedConfig};
use crate::compressors::{self, pca_compress, pca_decompress, CompressedUpdate};
use crate::error::{ensure_input, ensure_shape, Error, Result};
use crate::metrics::{meets_threshold, pca_fit, CorrelationKind, CorrelationReading, PcaBasis, PcaFit};
use crate::numerics::Vector;
use crate::updates::{flatten_from_matrix, reshape_to_matrix, ReshapeSpec, UpdateMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PcaTag {
    Update,
    Pca,
    LocalPca,
}

/// Which samples a PCA basis was fitted on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SharingCase {
    /// Temporal only: one basis per (client, slice).
    PerSlicePerClient,
    /// Spatial and temporal: one basis per slice shared by all clients.
    PerSliceShared,
    /// Structural and temporal: one basis per client for all its slices.
    PerClientShared,
    /// All three: a single basis for every slice of every client.
    FullyShared,
}

#[derive(Debug, Clone)]
pub struct ClientState {
    pub tag: PcaTag,
    /// One basis per slice; present iff `tag == Pca`. Shared bases are
    /// reference-counted rather than copied.
    pub bases: Option<Vec<Arc<PcaBasis>>>,
    pub sharing_case: Option<SharingCase>,
}

impl ClientState {
    fn update() -> Self {
        Self {
            tag: PcaTag::Update,
            bases: None,
            sharing_case: None,
        }
    }

    fn local() -> Self {
        Self {
            tag: PcaTag::LocalPca,
            bases: None,
            sharing_case: None,
        }
    }
}

/// Outcome of the state-selection flowchart.
#[derive(Debug, Clone)]
pub struct StateSelection {
    pub states: Vec<ClientState>,
    pub sharing_case: Option<SharingCase>,
    /// Tests in the order they were evaluated; `round` is left at 0.
    pub readings: Vec<CorrelationReading>,
    pub broadcast_downlink: u64,
    pub client_downlink: Vec<u64>,
    pub ranks: Vec<usize>,
}

struct Test {
    passed: bool,
    fit: Option<PcaFit>,
}

fn correlation_test(
    samples: &[&[f64]],
    kind: CorrelationKind,
    cfg: &PcaFedConfig,
    readings: &mut Vec<CorrelationReading>,
) -> Result<Test> {
    if samples.len() < 2 {
        return Ok(Test { passed: false, fit: None });
    }
    let fit = pca_fit(samples)?;
    let m = fit.measure(cfg.beta, cfg.rank_budget)?;
    readings.push(CorrelationReading {
        round: 0,
        kind,
        alpha: m.alpha,
        r_used: m.rank,
        sample_count: m.sample_count,
    });
    Ok(Test {
        passed: meets_threshold(m.alpha, cfg.alpha),
        fit: Some(fit),
    })
}

fn shared(basis: PcaBasis, n: usize) -> Vec<Arc<PcaBasis>> {
    vec![Arc::new(basis); n]
}

/// Runs the state-selection flowchart.
///
/// `history[k]` holds client `k`'s most recent reconstructed updates, newest
/// first, with the current round at index 0. All matrices must share one
/// `m × n` shape.
pub fn pcafed_update_states(history: &[Vec<&UpdateMatrix>], cfg: &PcaFedConfig) -> Result<StateSelection> {
    cfg.validate()?;
    let k = history.len();
    ensure_input!(k >= 1, "need at least one client");
    ensure_input!(
        history.iter().all(|h| !h.is_empty()),
        "every client needs the current round in its history"
    );
    let (m, n) = (history[0][0].m(), history[0][0].n());
    for h in history {
        for gm in h {
            ensure_shape!(
                gm.m() == m && gm.n() == n,
                "history mixes {}x{} and {m}x{n} update matrices",
                gm.m(),
                gm.n()
            );
        }
    }
    let window = |h: &Vec<&UpdateMatrix>| h.len().min(cfg.h);

    let mut sel = StateSelection {
        states: vec![ClientState::local(); k],
        sharing_case: None,
        readings: Vec::new(),
        broadcast_downlink: 0,
        client_downlink: vec![0; k],
        ranks: Vec::new(),
    };

    let current: Vec<&[f64]> = history.iter().map(|h| h[0].g_mat.as_slice()).collect();
    let spatial = correlation_test(&current, CorrelationKind::Spatial, cfg, &mut sel.readings)?;

    if spatial.passed {
        let pooled: Vec<&[f64]> = history
            .iter()
            .flat_map(|h| h[..window(h)].iter().map(|gm| gm.g_mat.as_slice()))
            .collect();
        if !correlation_test(&pooled, CorrelationKind::Temporal, cfg, &mut sel.readings)?.passed {
            return Ok(sel);
        }
        let slices: Vec<&[f64]> = history
            .iter()
            .flat_map(|h| h[..window(h)].iter().flat_map(|gm| gm.slices()))
            .collect();
        let structural = correlation_test(&slices, CorrelationKind::Structural, cfg, &mut sel.readings)?;
        let (case, bases) = if structural.passed {
            let basis = structural.fit.expect("passed tests carry a fit").narrow(cfg.alpha)?;
            sel.broadcast_downlink = basis.element_count();
            sel.ranks.push(basis.r);
            (SharingCase::FullyShared, shared(basis, n))
        } else {
            let mut bases = Vec::with_capacity(n);
            for i in 0..n {
                let samples: Vec<&[f64]> = history
                    .iter()
                    .flat_map(|h| h[..window(h)].iter().map(move |gm| gm.slice(i)))
                    .collect();
                let basis = pca_fit(&samples)?.narrow(cfg.alpha)?;
                sel.broadcast_downlink += basis.element_count();
                sel.ranks.push(basis.r);
                bases.push(Arc::new(basis));
            }
            (SharingCase::PerSliceShared, bases)
        };
        sel.sharing_case = Some(case);
        for st in &mut sel.states {
            *st = ClientState {
                tag: PcaTag::Pca,
                bases: Some(bases.clone()),
                sharing_case: Some(case),
            };
        }
        return Ok(sel);
    }

    for (c, h) in history.iter().enumerate() {
        let w = &h[..window(h)];
        let own: Vec<&[f64]> = w.iter().map(|gm| gm.g_mat.as_slice()).collect();
        if !correlation_test(&own, CorrelationKind::Temporal, cfg, &mut sel.readings)?.passed {
            continue;
        }
        let slices: Vec<&[f64]> = w.iter().flat_map(|gm| gm.slices()).collect();
        let structural = correlation_test(&slices, CorrelationKind::Structural, cfg, &mut sel.readings)?;
        let (case, bases) = if structural.passed {
            let basis = structural.fit.expect("passed tests carry a fit").narrow(cfg.alpha)?;
            sel.client_downlink[c] = basis.element_count();
            sel.ranks.push(basis.r);
            (SharingCase::PerClientShared, shared(basis, n))
        } else {
            let mut bases = Vec::with_capacity(n);
            for i in 0..n {
                let samples: Vec<&[f64]> = w.iter().map(|gm| gm.slice(i)).collect();
                let basis = pca_fit(&samples)?.narrow(cfg.alpha)?;
                sel.client_downlink[c] += basis.element_count();
                sel.ranks.push(basis.r);
                bases.push(Arc::new(basis));
            }
            (SharingCase::PerSlicePerClient, bases)
        };
        sel.states[c] = ClientState {
            tag: PcaTag::Pca,
            bases: Some(bases),
            sharing_case: Some(case),
        };
    }
    let cases: Vec<SharingCase> = sel.states.iter().filter_map(|s| s.sharing_case).collect();
    if let Some(&first) = cases.first() {
        if cases.iter().all(|&c| c == first) {
            sel.sharing_case = Some(first);
        }
    }
    Ok(sel)
}

/// PCAFed controller for one layer, sliced according to `spec`.
#[derive(Debug, Clone)]
pub struct PcaFed {
    cfg: PcaFedConfig,
    spec: ReshapeSpec,
    states: Vec<ClientState>,
    history: Vec<VecDeque<UpdateMatrix>>,
}

impl PcaFed {
    pub fn new(k: usize, spec: ReshapeSpec, cfg: PcaFedConfig) -> Result<Self> {
        cfg.validate()?;
        ensure_input!(k >= 1, "need at least one client");
        Ok(Self {
            states: vec![ClientState::update(); k],
            history: vec![VecDeque::with_capacity(cfg.h); k],
            spec,
            cfg,
        })
    }

    pub fn states(&self) -> &[ClientState] {
        &self.states
    }

    /// Replaces client states, e.g. to script a particular configuration.
    pub fn set_states(&mut self, states: Vec<ClientState>) -> Result<()> {
        ensure_shape!(
            states.len() == self.states.len(),
            "expected {} client states, got {}",
            self.states.len(),
            states.len()
        );
        self.states = states;
        Ok(())
    }

    fn remember(&mut self, c: usize, gm: UpdateMatrix) {
        let h = &mut self.history[c];
        if h.len() == self.cfg.h {
            h.pop_back();
        }
        h.push_front(gm);
    }

    /// Processes round `t` (1-based) given every client's raw layer update.
    pub fn round(&mut self, t: usize, updates: &[&[f64]]) -> Result<LayerRound> {
        let k = self.states.len();
        ensure_shape!(updates.len() == k, "expected {k} client updates, got {}", updates.len());
        let d = self.spec.len();
        for g in updates {
            ensure_shape!(g.len() == d, "update has length {}, layer has {d}", g.len());
        }
        let mut out = LayerRound::new(k);

        if is_update_round(t, self.cfg.t_u) {
            for (c, g) in updates.iter().enumerate() {
                let gm = reshape_to_matrix(&Vector::from_column_slice(g), &self.spec)?;
                self.remember(c, gm);
                out.reconstructions.push(Vector::from_column_slice(g));
                out.uplink[c] = d as u64;
                out.modes.push(ClientMode::Update);
            }
            let history: Vec<Vec<&UpdateMatrix>> = self.history.iter().map(|h| h.iter().collect()).collect();
            let sel = pcafed_update_states(&history, &self.cfg)?;
            out.broadcast_downlink = sel.broadcast_downlink;
            out.client_downlink = sel.client_downlink;
            out.sharing_case = sel.sharing_case;
            out.ranks = sel.ranks;
            out.readings = sel
                .readings
                .into_iter()
                .map(|r| CorrelationReading { round: t, ..r })
                .collect();
            self.states = sel.states;
            return Ok(out);
        }

        for (c, g) in updates.iter().enumerate() {
            let gm = reshape_to_matrix(&Vector::from_column_slice(g), &self.spec)?;
            let (hat, mode) = match self.states[c].tag {
                PcaTag::Pca => {
                    let bases = self.states[c].bases.as_ref().ok_or_else(|| {
                        Error::ProtocolViolation(format!("client {c} is in PCA state without bases"))
                    })?;
                    ensure_shape!(
                        bases.len() == gm.n(),
                        "client {c} has {} bases for {} slices",
                        bases.len(),
                        gm.n()
                    );
                    let coeffs = gm
                        .slices()
                        .zip(bases)
                        .map(|(s, b)| pca_compress(s, b).map(|v| v.as_slice().to_vec()))
                        .collect::<Result<Vec<_>>>()?;
                    let payload = CompressedUpdate::PcaSlices(coeffs);
                    out.uplink[c] = payload.uplink_element_count();
                    (decode_slices(&payload, bases, &gm)?, ClientMode::Pca)
                }
                PcaTag::LocalPca => {
                    let slices: Vec<&[f64]> = gm.slices().collect();
                    let mut local = None;
                    if slices.len() >= 2 {
                        let fit = pca_fit(&slices)?;
                        let m = fit.measure(self.cfg.beta, self.cfg.rank_budget)?;
                        out.readings.push(CorrelationReading {
                            round: t,
                            kind: CorrelationKind::Structural,
                            alpha: m.alpha,
                            r_used: m.rank,
                            sample_count: m.sample_count,
                        });
                        if meets_threshold(m.alpha, self.cfg.alpha) {
                            local = Some(fit.narrow(self.cfg.alpha)?);
                        }
                    }
                    match local {
                        Some(basis) => {
                            let coeffs = slices
                                .iter()
                                .map(|s| pca_compress(s, &basis).map(|v| v.as_slice().to_vec()))
                                .collect::<Result<Vec<_>>>()?;
                            let payload = CompressedUpdate::PcaSlices(coeffs);
                            // The client also uploads its basis and mean.
                            out.uplink[c] = payload.uplink_element_count() + basis.element_count();
                            out.ranks.push(basis.r);
                            let bases = shared(basis, gm.n());
                            (decode_slices(&payload, &bases, &gm)?, ClientMode::LocalPca)
                        }
                        None => {
                            out.uplink[c] = d as u64;
                            (Vector::from_column_slice(g), ClientMode::Raw)
                        }
                    }
                }
                PcaTag::Update => {
                    return Err(Error::ProtocolViolation(format!(
                        "client {c} is in UPDATE state outside an update round"
                    )))
                }
            };
            let hat_mat = reshape_to_matrix(&hat, &self.spec)?;
            self.remember(c, hat_mat);
            out.reconstructions.push(hat);
            out.modes.push(mode);
        }
        Ok(out)
    }
}

/// Server side of a PCA round: decode the wire payload and decompress each
/// slice with its basis.
fn decode_slices(payload: &CompressedUpdate, bases: &[Arc<PcaBasis>], like: &UpdateMatrix) -> Result<Vector> {
    let CompressedUpdate::PcaSlices(coeffs) = compressors::decode(&compressors::encode(payload))? else {
        return Err(Error::ProtocolViolation("PCA payload changed variant in transit".into()));
    };
    ensure_shape!(coeffs.len() == bases.len(), "{} slices for {} bases", coeffs.len(), bases.len());
    let mut rec = like.clone();
    for (i, (c, b)) in coeffs.iter().zip(bases).enumerate() {
        rec.g_mat.column_mut(i).copy_from(&pca_decompress(c, b)?);
    }
    Ok(flatten_from_matrix(&rec))
}
