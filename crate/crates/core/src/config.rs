//! JSON experiment configuration.
//!
//! A config names a data source, a model, the federated run parameters and
//! where outputs go. Unknown keys are rejected at every level, and
//! [`ExperimentConfig::from_json`] validates the result before returning it.
//! Relative paths inside a config resolve against the directory of the
//! config file.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fedsim::{FedConfig, Model, ModelKind, ProbeConfig};
use crate::ingest::{mnist_dataset, parse_libsvm, read_idx_file, synth_linreg, synth_logreg, LabeledDataset};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    SynthLogreg {
        samples: usize,
        features: usize,
        #[serde(default)]
        margin: f64,
        #[serde(default)]
        seed: u64,
    },
    SynthLinreg {
        samples: usize,
        features: usize,
        #[serde(default)]
        noise: f64,
        #[serde(default)]
        seed: u64,
    },
    Libsvm {
        path: PathBuf,
        #[serde(default)]
        features: Option<usize>,
    },
    Mnist {
        images: PathBuf,
        labels: PathBuf,
        #[serde(default = "default_side")]
        side: usize,
    },
}

fn default_side() -> usize {
    16
}

fn default_hidden() -> usize {
    120
}

fn default_compress() -> Vec<String> {
    vec!["fc1.weight".to_string()]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    /// Hidden width of the MLP.
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    /// MLP layers handed to the compressor.
    #[serde(default = "default_compress")]
    pub compress: Vec<String>,
    /// Rows of the update matrix for linreg/logreg; defaults to `⌈√d⌉`.
    #[serde(default)]
    pub slice_rows: Option<usize>,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_out_dir")]
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: default_out_dir() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataSource,
    pub model: ModelConfig,
    pub fed: FedConfig,
    /// Validation accuracy that defines "rounds to target" in the summary.
    #[serde(default)]
    pub target_accuracy: Option<f64>,
    #[serde(default)]
    pub probe: ProbeConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl ExperimentConfig {
    /// Parses and validates a JSON document. Every failure is reported as
    /// [`Error::Config`].
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate().map_err(|e| match e {
            Error::InvalidInput(m) => Error::Config(m),
            other => other,
        })?;
        Ok(cfg)
    }

    /// Reads a config file and resolves its relative paths against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_json(&text)?;
        if let Some(base) = path.parent() {
            cfg.resolve_paths(base);
        }
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match &mut self.data {
            DataSource::Libsvm { path, .. } => fix(path),
            DataSource::Mnist { images, labels, .. } => {
                fix(images);
                fix(labels);
            }
            _ => {}
        }
        fix(&mut self.output.dir);
    }

    pub fn validate(&self) -> Result<()> {
        self.fed.validate()?;
        self.probe.validate()?;
        match &self.data {
            DataSource::SynthLogreg { samples, features, margin, .. } => {
                check(*samples >= 1 && *features >= 1, "synthetic data needs samples ≥ 1 and features ≥ 1")?;
                check(margin.is_finite() && *margin >= 0.0, "margin must be non-negative")?;
            }
            DataSource::SynthLinreg { samples, features, noise, .. } => {
                check(*samples >= 1 && *features >= 1, "synthetic data needs samples ≥ 1 and features ≥ 1")?;
                check(noise.is_finite() && *noise >= 0.0, "noise must be non-negative")?;
            }
            DataSource::Libsvm { features, .. } => check(*features != Some(0), "features must be positive")?,
            DataSource::Mnist { side, .. } => check((1..=28).contains(side), "side must lie in 1..=28")?,
        }
        check(self.model.hidden >= 1, "hidden must be at least 1")?;
        check(self.model.slice_rows != Some(0), "slice_rows must be positive")?;
        if let Some(a) = self.target_accuracy {
            check((0.0..=1.0).contains(&a), "target_accuracy must lie in [0, 1]")?;
        }
        Ok(())
    }

    pub fn load_dataset(&self) -> Result<LabeledDataset> {
        match &self.data {
            DataSource::SynthLogreg { samples, features, margin, seed } => synth_logreg(*samples, *features, *margin, *seed),
            DataSource::SynthLinreg { samples, features, noise, seed } => {
                Ok(synth_linreg(*samples, *features, *noise, *seed)?.dataset)
            }
            DataSource::Libsvm { path, features } => parse_libsvm(BufReader::new(File::open(path)?), *features),
            DataSource::Mnist { images, labels, side } => {
                mnist_dataset(&read_idx_file(images)?, &read_idx_file(labels)?, *side)
            }
        }
    }

    /// Builds the model matching the dataset's feature count and classes.
    pub fn build_model(&self, ds: &LabeledDataset) -> Result<Model> {
        let m = &self.model;
        let model = match m.kind {
            ModelKind::Linreg => Model::linreg(ds.feature_dim, m.slice_rows)?,
            ModelKind::Logreg => Model::logreg(ds.feature_dim, m.slice_rows)?,
            ModelKind::Mlp => {
                let classes = ds
                    .num_classes()
                    .ok_or_else(|| Error::Config("the MLP needs a classification dataset".into()))?;
                Model::mlp(ds.feature_dim, m.hidden, classes, &m.compress)?
            }
        };
        model.check_dataset(ds)?;
        Ok(model)
    }
}

fn check(cond: bool, message: &str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Config(message.to_string()))
    }
}
