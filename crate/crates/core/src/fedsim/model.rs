//! Differentiable models over flat parameter vectors.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_input, ensure_shape, Result};
use crate::ingest::{LabeledDataset, Task};
use crate::numerics::{sym_eig_desc, Matrix, Vector};
use crate::updates::ReshapeSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// Least squares with a bias; loss `‖R x − y‖² / N` where `R` carries a
    /// trailing column of ones.
    Linreg,
    /// Logistic loss `log(1 + exp(−y ξᵀx))`, no bias.
    Logreg,
    /// One hidden ReLU layer and a softmax cross-entropy head.
    Mlp,
}

/// A contiguous block of the parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerSpec {
    pub name: String,
    pub offset: usize,
    pub reshape: ReshapeSpec,
    /// Whether the configured compressor handles this layer; other layers
    /// always travel raw.
    pub compress: bool,
}

impl LayerSpec {
    pub fn len(&self) -> usize {
        self.reshape.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reshape.is_empty()
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub kind: ModelKind,
    pub input_dim: usize,
    pub hidden: usize,
    pub classes: usize,
    pub layers: Vec<LayerSpec>,
}

fn flat_layer(name: &str, offset: usize, len: usize, rows: usize, compress: bool) -> Result<LayerSpec> {
    Ok(LayerSpec {
        name: name.to_string(),
        offset,
        reshape: ReshapeSpec::flat(len, rows.clamp(1, len))?,
        compress,
    })
}

/// Default slice length for single-layer models: `ceil(√d)`.
fn default_rows(d: usize) -> usize {
    (d as f64).sqrt().ceil() as usize
}

impl Model {
    /// Linear regression on `features` inputs; the single layer `weight`
    /// holds the `features + 1` coefficients (bias last).
    pub fn linreg(features: usize, slice_rows: Option<usize>) -> Result<Self> {
        ensure_input!(features >= 1, "need at least one feature");
        let d = features + 1;
        Ok(Self {
            kind: ModelKind::Linreg,
            input_dim: features,
            hidden: 0,
            classes: 0,
            layers: vec![flat_layer("weight", 0, d, slice_rows.unwrap_or_else(|| default_rows(d)), true)?],
        })
    }

    pub fn logreg(features: usize, slice_rows: Option<usize>) -> Result<Self> {
        ensure_input!(features >= 1, "need at least one feature");
        Ok(Self {
            kind: ModelKind::Logreg,
            input_dim: features,
            hidden: 0,
            classes: 2,
            layers: vec![flat_layer(
                "weight",
                0,
                features,
                slice_rows.unwrap_or_else(|| default_rows(features)),
                true,
            )?],
        })
    }

    /// `input → hidden (ReLU) → classes`. Weights are stored row-major as
    /// `(out, in)`, so each `in`-length slice of `fc1.weight` holds one hidden
    /// unit's incoming weights. Only layers named in `compress` are
    /// compressed.
    pub fn mlp(input: usize, hidden: usize, classes: usize, compress: &[String]) -> Result<Self> {
        ensure_input!(input >= 1 && hidden >= 1 && classes >= 2, "invalid MLP shape");
        let names = ["fc1.weight", "fc1.bias", "fc2.weight", "fc2.bias"];
        for c in compress {
            ensure_input!(names.contains(&c.as_str()), "unknown layer {c:?}");
        }
        let shapes = [(input, hidden), (hidden, 1), (hidden, classes), (classes, 1)];
        let mut layers = Vec::with_capacity(4);
        let mut offset = 0;
        for (name, (m, n)) in names.iter().zip(shapes) {
            let layer = LayerSpec {
                name: name.to_string(),
                offset,
                reshape: ReshapeSpec::flat_with(m * n, m, n)?,
                compress: compress.iter().any(|c| c == name),
            };
            offset += layer.len();
            layers.push(layer);
        }
        Ok(Self {
            kind: ModelKind::Mlp,
            input_dim: input,
            hidden,
            classes,
            layers,
        })
    }

    pub fn dim(&self) -> usize {
        self.layers.iter().map(LayerSpec::len).sum()
    }

    /// Checks that the model can consume `ds`.
    pub fn check_dataset(&self, ds: &LabeledDataset) -> Result<()> {
        ensure_shape!(
            ds.feature_dim == self.input_dim,
            "model expects {} features, dataset has {}",
            self.input_dim,
            ds.feature_dim
        );
        match (self.kind, ds.task) {
            (ModelKind::Linreg, _) => Ok(()),
            (ModelKind::Logreg, Task::Binary) => Ok(()),
            (ModelKind::Mlp, Task::Multiclass { classes }) if classes == self.classes => Ok(()),
            (ModelKind::Mlp, Task::Binary) if self.classes == 2 => Ok(()),
            (kind, task) => Err(crate::Error::InvalidInput(format!(
                "{kind:?} model cannot train on a {task:?} dataset"
            ))),
        }
    }

    /// Zeros for the linear models; for the MLP every weight and bias is
    /// drawn uniformly from `±1/√fan_in`.
    pub fn init<R: Rng>(&self, rng: &mut R) -> Vector {
        let mut x = Vector::zeros(self.dim());
        if self.kind == ModelKind::Mlp {
            for layer in &self.layers {
                let fan_in = if layer.name.starts_with("fc1") { self.input_dim } else { self.hidden };
                let bound = 1.0 / (fan_in as f64).sqrt();
                for v in x.rows_mut(layer.offset, layer.len()).iter_mut() {
                    *v = rng.gen_range(-bound..bound);
                }
            }
        }
        x
    }

    /// Mean loss over `batch` and its gradient, written into `grad`.
    pub fn loss_grad(&self, x: &[f64], ds: &LabeledDataset, batch: &[usize], grad: &mut [f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim());
        grad.iter_mut().for_each(|g| *g = 0.0);
        if batch.is_empty() {
            return 0.0;
        }
        let scale = 1.0 / batch.len() as f64;
        match self.kind {
            ModelKind::Linreg => {
                let (w, b) = x.split_at(self.input_dim);
                let mut loss = 0.0;
                for &i in batch {
                    let row = ds.row(i);
                    let res = dot(row, w) + b[0] - ds.labels[i];
                    loss += res * res;
                    let c = 2.0 * res * scale;
                    for (g, xi) in grad.iter_mut().zip(row) {
                        *g += c * xi;
                    }
                    grad[self.input_dim] += c;
                }
                loss * scale
            }
            ModelKind::Logreg => {
                let mut loss = 0.0;
                for &i in batch {
                    let row = ds.row(i);
                    let y = ds.labels[i];
                    let margin = y * dot(row, x);
                    loss += softplus(-margin);
                    let c = -y * sigmoid(-margin) * scale;
                    for (g, xi) in grad.iter_mut().zip(row) {
                        *g += c * xi;
                    }
                }
                loss * scale
            }
            ModelKind::Mlp => self.mlp_loss_grad(x, ds, batch, Some(grad)),
        }
    }

    /// Mean loss over the whole dataset.
    pub fn loss(&self, x: &[f64], ds: &LabeledDataset) -> f64 {
        let all: Vec<usize> = (0..ds.len()).collect();
        match self.kind {
            ModelKind::Mlp => self.mlp_loss_grad(x, ds, &all, None),
            _ => {
                let mut scratch = vec![0.0; self.dim()];
                self.loss_grad(x, ds, &all, &mut scratch)
            }
        }
    }

    /// Classification accuracy, or `None` for regression.
    pub fn accuracy(&self, x: &[f64], ds: &LabeledDataset) -> Option<f64> {
        if ds.is_empty() {
            return None;
        }
        let correct = match self.kind {
            ModelKind::Linreg => return None,
            ModelKind::Logreg => (0..ds.len())
                .filter(|&i| {
                    let pred = if dot(ds.row(i), x) >= 0.0 { 1.0 } else { -1.0 };
                    pred == ds.labels[i]
                })
                .count(),
            ModelKind::Mlp => {
                let all: Vec<usize> = (0..ds.len()).collect();
                let logits = self.mlp_forward(x, ds, &all).2;
                let ids = ds.class_ids()?;
                logits
                    .row_iter()
                    .zip(ids)
                    .filter(|(row, y)| row.transpose().argmax().0 == *y)
                    .count()
            }
        };
        Some(correct as f64 / ds.len() as f64)
    }

    /// Smoothness constant `L = 2 λ_max(RᵀR) / N` of the linear-regression
    /// loss over the whole dataset.
    pub fn linreg_smoothness(&self, ds: &LabeledDataset) -> Result<f64> {
        ensure_input!(self.kind == ModelKind::Linreg, "smoothness is only defined for linreg here");
        let d = self.dim();
        let mut rtr = Matrix::zeros(d, d);
        let mut aug = Vector::zeros(d);
        for i in 0..ds.len() {
            aug.rows_mut(0, self.input_dim).copy_from_slice(ds.row(i));
            aug[self.input_dim] = 1.0;
            rtr.ger(1.0, &aug, &aug, 1.0);
        }
        let top = sym_eig_desc(&rtr)?.lambda[0];
        Ok(2.0 * top / ds.len() as f64)
    }

    fn mlp_weights(&self, x: &[f64]) -> (Matrix, Vector, Matrix, Vector) {
        let l = &self.layers;
        let w1t = Matrix::from_column_slice(self.input_dim, self.hidden, &x[l[0].range()]);
        let b1 = Vector::from_column_slice(&x[l[1].range()]);
        let w2t = Matrix::from_column_slice(self.hidden, self.classes, &x[l[2].range()]);
        let b2 = Vector::from_column_slice(&x[l[3].range()]);
        (w1t, b1, w2t, b2)
    }

    /// Returns (inputs, pre-activations, logits).
    fn mlp_forward(&self, x: &[f64], ds: &LabeledDataset, batch: &[usize]) -> (Matrix, Matrix, Matrix) {
        let (w1t, b1, w2t, b2) = self.mlp_weights(x);
        let mut inputs = Matrix::zeros(batch.len(), self.input_dim);
        for (r, &i) in batch.iter().enumerate() {
            for (c, v) in ds.row(i).iter().enumerate() {
                inputs[(r, c)] = *v;
            }
        }
        let mut z1 = &inputs * &w1t;
        for mut row in z1.row_iter_mut() {
            row += b1.transpose();
        }
        let a1 = z1.map(|v| v.max(0.0));
        let mut logits = &a1 * &w2t;
        for mut row in logits.row_iter_mut() {
            row += b2.transpose();
        }
        (inputs, z1, logits)
    }

    fn mlp_loss_grad(&self, x: &[f64], ds: &LabeledDataset, batch: &[usize], grad: Option<&mut [f64]>) -> f64 {
        let ids = ds.class_ids().expect("MLP datasets are classification tasks");
        let (inputs, z1, logits) = self.mlp_forward(x, ds, batch);
        let scale = 1.0 / batch.len() as f64;

        let mut probs = logits;
        let mut loss = 0.0;
        for (r, &i) in batch.iter().enumerate() {
            let mut row = probs.row_mut(r);
            let max = row.max();
            row.iter_mut().for_each(|v| *v = (*v - max).exp());
            let sum = row.sum();
            row /= sum;
            loss -= row[ids[i]].max(f64::MIN_POSITIVE).ln();
        }
        let Some(grad) = grad else {
            return loss * scale;
        };

        // probs becomes dL/dlogits.
        for (r, &i) in batch.iter().enumerate() {
            probs[(r, ids[i])] -= 1.0;
        }
        probs *= scale;
        let a1 = z1.map(|v| v.max(0.0));
        let (_, _, w2t, _) = self.mlp_weights(x);

        let l = &self.layers;
        let dw2t = a1.tr_mul(&probs);
        grad[l[2].range()].copy_from_slice(dw2t.as_slice());
        for (c, g) in grad[l[3].range()].iter_mut().enumerate() {
            *g = probs.column(c).sum();
        }
        let mut dz1 = &probs * w2t.transpose();
        dz1.zip_apply(&z1, |d, z| {
            if z <= 0.0 {
                *d = 0.0
            }
        });
        let dw1t = inputs.tr_mul(&dz1);
        grad[l[0].range()].copy_from_slice(dw1t.as_slice());
        for (c, g) in grad[l[1].range()].iter_mut().enumerate() {
            *g = dz1.column(c).sum();
        }
        loss * scale
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}
