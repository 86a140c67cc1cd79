use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ledger::{CommLedger, LedgerDelta};
use super::model::Model;
use super::partition::partition;
use super::probe::{ProbeConfig, Prober};
use super::{FedConfig, Scheme};
use crate::adaptive::{AdaPolicy, AdaSvdFed, ClientMode, LayerRound, PcaFed, SharingCase};
use crate::error::{ensure_input, ensure_shape, Result};
use crate::ingest::LabeledDataset;
use crate::metrics::{cosine_similarity, CorrelationReading};
use crate::numerics::Vector;

/// τ steps of mini-batch SGD with heavy-ball momentum and weight decay,
/// starting from `x`; returns the parameter delta.
///
/// The batch size is `max(1, |shard| / τ)` and batches walk a fresh
/// shuffle of the shard. The momentum buffer starts at zero on every call.
pub fn local_update<R: Rng>(
    model: &Model,
    x: &Vector,
    ds: &LabeledDataset,
    shard: &[usize],
    cfg: &FedConfig,
    rng: &mut R,
) -> Result<Vector> {
    ensure_input!(!shard.is_empty(), "client shard is empty");
    ensure_shape!(x.len() == model.dim(), "parameters have length {}, model has {}", x.len(), model.dim());
    let b = (shard.len() / cfg.tau).max(1);
    let mut order = shard.to_vec();
    order.shuffle(rng);

    let d = model.dim();
    let mut delta = Vector::zeros(d);
    let mut velocity = Vector::zeros(d);
    let mut params = x.clone();
    let mut grad = vec![0.0; d];
    let mut batch = Vec::with_capacity(b);
    for step in 0..cfg.tau {
        batch.clear();
        batch.extend((0..b).map(|j| order[(step * b + j) % order.len()]));
        model.loss_grad(params.as_slice(), ds, &batch, &mut grad);
        let mut g = Vector::from_column_slice(&grad);
        if cfg.weight_decay > 0.0 {
            g.axpy(cfg.weight_decay, &params, 1.0);
        }
        let step_dir = if cfg.momentum > 0.0 {
            velocity *= cfg.momentum;
            velocity += &g;
            &velocity
        } else {
            &g
        };
        delta.axpy(-cfg.gamma, step_dir, 1.0);
        params.copy_from(x);
        params += &delta;
    }
    Ok(delta)
}

/// `x + Σ_k w_k ĝ_k`, summed in client order.
pub fn aggregate(x: &Vector, reconstructions: &[Vector], weights: &[f64]) -> Result<Vector> {
    ensure_input!(
        reconstructions.len() == weights.len(),
        "{} updates but {} weights",
        reconstructions.len(),
        weights.len()
    );
    let sum: f64 = weights.iter().sum();
    ensure_input!((sum - 1.0).abs() <= 1e-12, "weights sum to {sum}, not 1");
    let mut out = x.clone();
    for (g, w) in reconstructions.iter().zip(weights) {
        ensure_shape!(g.len() == x.len(), "update has length {}, model has {}", g.len(), x.len());
        out.axpy(*w, g, 1.0);
    }
    Ok(out)
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub probe: Option<ProbeConfig>,
    /// Keep the global parameters after every round.
    pub keep_trajectory: bool,
}

/// Per-layer controller activity in one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerStateRecord {
    pub round: usize,
    pub layer: String,
    pub modes: Vec<ClientMode>,
    pub sharing_case: Option<SharingCase>,
    pub ranks: Vec<usize>,
    pub uplink: u64,
    pub downlink: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    /// Mean training loss of the aggregated model after this round.
    pub train_loss: f64,
    pub val_accuracy: Option<f64>,
    pub readings: Vec<CorrelationReading>,
    pub ledger: LedgerDelta,
    /// `‖ĝ_k − g_k‖² / d` per client.
    pub client_mse: Vec<f64>,
    /// Cosine between each client's raw update and its previous one.
    pub temporal_cosine: Vec<Option<f64>>,
    #[serde(skip)]
    pub states: Vec<LayerStateRecord>,
}

#[derive(Debug, Clone)]
pub struct Experiment {
    pub records: Vec<RoundRecord>,
    pub ledger: CommLedger,
    pub initial_params: Vector,
    pub final_params: Vector,
    /// Parameters after each round, if requested.
    pub trajectory: Vec<Vector>,
    pub weights: Vec<f64>,
}

enum Controller {
    Raw,
    Ada(Box<AdaSvdFed>),
    Pca(Box<PcaFed>),
}

fn controller(cfg: &FedConfig, model: &Model, layer: usize) -> Result<Controller> {
    let spec = &model.layers[layer];
    if !spec.compress {
        return Ok(Controller::Raw);
    }
    let k = cfg.clients;
    let ada = |policy| AdaSvdFed::new(k, spec.len(), cfg.ada.clone(), policy).map(|a| Controller::Ada(Box::new(a)));
    match cfg.scheme {
        Scheme::None => Ok(Controller::Raw),
        Scheme::Svdfed => ada(AdaPolicy::AlwaysSpatial),
        Scheme::Adasvdfed => ada(AdaPolicy::Adaptive),
        Scheme::Predictive => ada(AdaPolicy::AlwaysPredictive),
        Scheme::Pcafed => Ok(Controller::Pca(Box::new(PcaFed::new(
            k,
            spec.reshape.clone(),
            cfg.pcafed.clone(),
        )?))),
    }
}

/// Splits the dataset into (train, validation) by a seeded shuffle.
fn holdout<R: Rng>(ds: &LabeledDataset, fraction: f64, rng: &mut R) -> (LabeledDataset, Option<LabeledDataset>) {
    let n_val = (ds.len() as f64 * fraction).floor() as usize;
    if n_val == 0 || ds.num_classes().is_none() {
        return (ds.clone(), None);
    }
    let mut idx: Vec<usize> = (0..ds.len()).collect();
    idx.shuffle(rng);
    let (val, train) = idx.split_at(n_val);
    (ds.subset(train), Some(ds.subset(val)))
}

/// Runs FedAvg for `cfg.rounds` rounds.
///
/// Random draws come from one ChaCha8 generator seeded with `cfg.seed`, in
/// this order: validation split, client partition, model initialization,
/// then one seed per client per round for local shuffling.
pub fn run_experiment(cfg: &FedConfig, model: &Model, dataset: &LabeledDataset, opts: &RunOptions) -> Result<Experiment> {
    cfg.validate()?;
    model.check_dataset(dataset)?;
    let mut master = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (train, val) = holdout(dataset, cfg.validation_fraction, &mut master);
    let shards = partition(&train, cfg.clients, cfg.partition, &mut master)?;
    for (k, s) in shards.iter().enumerate() {
        ensure_input!(!s.is_empty(), "client {k} received no samples");
    }
    let total: usize = shards.iter().map(Vec::len).sum();
    let weights: Vec<f64> = shards.iter().map(|s| s.len() as f64 / total as f64).collect();
    let train_union: Vec<usize> = shards.iter().flatten().copied().collect();
    let train_eval = train.subset(&train_union);

    let mut x = model.init(&mut master);
    let initial_params = x.clone();
    let d = model.dim();
    let k = cfg.clients;
    let mut controllers = (0..model.layers.len())
        .map(|l| controller(cfg, model, l))
        .collect::<Result<Vec<_>>>()?;
    let mut prober = opts.probe.clone().map(|p| Prober::new(p, k));

    let mut records = Vec::with_capacity(cfg.rounds);
    let mut ledger = CommLedger::default();
    let mut trajectory = Vec::new();
    let mut previous: Vec<Option<Vector>> = vec![None; k];

    for t in 1..=cfg.rounds {
        let seeds: Vec<u64> = (0..k).map(|_| master.gen()).collect();
        let updates = shards
            .par_iter()
            .zip(seeds.par_iter())
            .map(|(shard, &seed)| {
                local_update(model, &x, &train, shard, cfg, &mut ChaCha8Rng::seed_from_u64(seed))
            })
            .collect::<Result<Vec<_>>>()?;

        let mut recon: Vec<Vector> = vec![Vector::zeros(d); k];
        let mut delta = LedgerDelta::new(k);
        delta.downlink_broadcast = d as u64;
        let mut readings = Vec::new();
        let mut states = Vec::new();

        for (layer, ctrl) in model.layers.iter().zip(controllers.iter_mut()) {
            let parts: Vec<&[f64]> = updates.iter().map(|g| &g.as_slice()[layer.range()]).collect();
            let out = match ctrl {
                Controller::Raw => {
                    for (c, p) in parts.iter().enumerate() {
                        recon[c].rows_mut(layer.offset, layer.len()).copy_from_slice(p);
                        delta.uplink_per_client[c] += layer.len() as u64;
                    }
                    continue;
                }
                Controller::Ada(a) => a.round(t, &parts)?,
                Controller::Pca(p) => p.round(t, &parts)?,
            };
            absorb(&out, layer.offset, &mut recon, &mut delta);
            readings.extend(out.readings.iter().cloned());
            states.push(LayerStateRecord {
                round: t,
                layer: layer.name.clone(),
                modes: out.modes.clone(),
                sharing_case: out.sharing_case,
                ranks: out.ranks.clone(),
                uplink: out.uplink.iter().sum(),
                downlink: out.broadcast_downlink + out.client_downlink.iter().sum::<u64>(),
            });
        }
        delta.finish();

        if let Some(p) = prober.as_mut() {
            readings.extend(p.observe(t, model, &updates)?);
        }

        let client_mse = updates
            .iter()
            .zip(&recon)
            .map(|(g, h)| (g - h).norm_squared() / d as f64)
            .collect();
        let temporal_cosine = updates
            .iter()
            .zip(&previous)
            .map(|(g, prev)| match prev {
                Some(p) => cosine_similarity(g.as_slice(), p.as_slice()).map(Some),
                None => Ok(None),
            })
            .collect::<Result<Vec<_>>>()?;

        x = aggregate(&x, &recon, &weights)?;
        let train_loss = model.loss(x.as_slice(), &train_eval);
        let val_accuracy = val.as_ref().and_then(|v| model.accuracy(x.as_slice(), v));
        log::debug!("round {t}: loss {train_loss:.6} acc {val_accuracy:?} uplink {}", delta.uplink);

        ledger.record(delta.clone());
        records.push(RoundRecord {
            round: t,
            train_loss,
            val_accuracy,
            readings,
            ledger: delta,
            client_mse,
            temporal_cosine,
            states,
        });
        if opts.keep_trajectory {
            trajectory.push(x.clone());
        }
        previous = updates.into_iter().map(Some).collect();
    }

    Ok(Experiment {
        records,
        ledger,
        initial_params,
        final_params: x,
        trajectory,
        weights,
    })
}

fn absorb(out: &LayerRound, offset: usize, recon: &mut [Vector], delta: &mut LedgerDelta) {
    for (c, r) in out.reconstructions.iter().enumerate() {
        recon[c].rows_mut(offset, r.len()).copy_from(r);
        delta.uplink_per_client[c] += out.uplink[c];
        delta.downlink_per_client[c] += out.client_downlink[c];
        delta.index_overhead += out.index_overhead[c];
    }
    delta.downlink_broadcast += out.broadcast_downlink;
}

/// One row of the run summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub scheme: String,
    pub rounds_to_target: Option<usize>,
    pub uplink: u64,
    pub downlink: u64,
    pub total: u64,
}

impl SummaryRow {
    pub const CSV_HEADER: &'static str = "scheme,rounds_to_target,uplink,downlink,total";

    pub fn to_csv(&self) -> String {
        let rounds = self.rounds_to_target.map(|r| r.to_string()).unwrap_or_default();
        format!("{},{},{},{},{}", self.scheme, rounds, self.uplink, self.downlink, self.total)
    }
}

/// Element totals through the first round whose validation accuracy reaches
/// `target`, or through the whole run if it never does (or no target is
/// given).
pub fn summarize(scheme: Scheme, exp: &Experiment, target: Option<f64>) -> SummaryRow {
    let reached = target.and_then(|a| {
        exp.records
            .iter()
            .find(|r| r.val_accuracy.is_some_and(|v| v >= a))
            .map(|r| r.round)
    });
    let totals = exp.ledger.totals_through(reached.unwrap_or(exp.records.len()));
    SummaryRow {
        scheme: scheme.name().to_string(),
        rounds_to_target: reached,
        uplink: totals.uplink,
        downlink: totals.downlink,
        total: totals.total(),
    }
}
