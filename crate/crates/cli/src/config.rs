//! Experiment configuration: per-mode defaults, a TOML file layered on
//! top, then `key=value` overrides with dotted keys (`model.neurons=9000`).

use std::path::{Path, PathBuf};

use clap::ValueEnum;
use eon_core::costmodel::CostParams;
use eon_core::encoder::FilterBank;
use eon_core::learning::{LearnConfig, Supervision};
use eon_core::network::ModelConfig;
use eon_core::scan::WindowOrder;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    MnistTrain,
    MnistEval,
    FacesPretrain,
    FacesAdapt,
    CollageScan,
    Cost,
}

impl Mode {
    fn is_mnist(self) -> bool {
        matches!(self, Mode::MnistTrain | Mode::MnistEval | Mode::Cost)
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: PathBuf,
        source: Box<toml::de::Error>,
    },
    #[error("override {0:?} is not of the form key=value")]
    Override(String),
    #[error("override {key:?} collides with a non-table value")]
    Path { key: String },
    #[error("configuration rejected: {0}")]
    Schema(String),
    #[error("invalid parameter: {0}")]
    Invalid(String),
    #[error("{what} not found: {path}")]
    Missing { what: &'static str, path: PathBuf },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EncoderKind {
    /// Bright/dark bar pairs, `2 x orientations` filters.
    GaborBars,
    /// Sign-valued step edges, one per filter.
    Edges,
    /// Kernels read from a filter text file.
    File,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderConfig {
    pub kind: EncoderKind,
    pub orientations: u8,
    pub sigma: f64,
    pub wavelength: f64,
    /// Winning responses at or below this stay silent.
    pub threshold: i32,
    pub path: Option<PathBuf>,
}

impl EncoderConfig {
    pub fn build(&self, model: &ModelConfig) -> Result<FilterBank, ConfigError> {
        let invalid = |e: eon_core::Error| ConfigError::Invalid(e.to_string());
        let bank = match self.kind {
            EncoderKind::GaborBars => FilterBank::gabor_bars(
                self.orientations,
                model.kernel_side,
                self.sigma,
                self.wavelength,
                self.threshold,
            )
            .map_err(invalid)?,
            EncoderKind::Edges => {
                FilterBank::oriented(model.filters, model.kernel_side, self.threshold).map_err(invalid)?
            }
            EncoderKind::File => {
                let path = self
                    .path
                    .as_ref()
                    .ok_or_else(|| ConfigError::Invalid("encoder.kind = \"file\" needs encoder.path".into()))?;
                FilterBank::load(path, self.threshold).map_err(invalid)?
            }
        };
        if bank.filters() != model.filters || bank.kernel_side() != model.kernel_side {
            return Err(ConfigError::Invalid(format!(
                "encoder yields {} filters of side {}, model expects {} of side {}",
                bank.filters(),
                bank.kernel_side(),
                model.filters,
                model.kernel_side
            )));
        }
        Ok(bank)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MnistConfig {
    /// Directory holding the four IDX files.
    pub dir: PathBuf,
    pub train_limit: Option<usize>,
    pub test_limit: Option<usize>,
    pub checkpoint_every: usize,
    /// Test samples used at intermediate checkpoints; the final
    /// evaluation always uses the whole (limited) test set.
    pub checkpoint_test_limit: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FacesConfig {
    /// Directories of 8-bit PGM tiles. Both unset: procedural tiles.
    pub faces_dir: Option<PathBuf>,
    pub nonfaces_dir: Option<PathBuf>,
    pub pretrain: usize,
    pub test_per_class: usize,
    pub frame_faces: usize,
    /// Chance that a cell without a face receives a non-face tile.
    pub nonface_fill: f64,
    pub scan_stride: usize,
    pub adapt_stride: usize,
    pub order: WindowOrder,
    pub stop_when_full: bool,
    /// Learning events between test-set evaluations during adaptation.
    pub checkpoint_every: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameConfig {
    pub height: usize,
    pub width: usize,
    pub stride: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub seed: u64,
    /// Model file to start from (required by `mnist-eval`).
    pub model_in: Option<PathBuf>,
    pub model: ModelConfig,
    pub learn: LearnConfig,
    pub cost: CostParams,
    pub encoder: EncoderConfig,
    pub mnist: MnistConfig,
    pub faces: FacesConfig,
    pub frame: FrameConfig,
}

impl ExperimentConfig {
    pub fn defaults(mode: Mode) -> Self {
        let mnist = mode.is_mnist();
        Self {
            mode,
            seed: 1,
            model_in: None,
            model: if mnist {
                ModelConfig::mnist(2000)
            } else {
                ModelConfig::faces(400)
            },
            learn: LearnConfig {
                mode: match mode {
                    Mode::FacesAdapt | Mode::CollageScan => Supervision::SelfSupervisedOnFire,
                    _ => Supervision::LabeledCluster,
                },
                ..LearnConfig::default()
            },
            cost: CostParams {
                parallelism: if mnist { 1 } else { 400 },
                ..CostParams::default()
            },
            encoder: if mnist {
                EncoderConfig {
                    kind: EncoderKind::GaborBars,
                    orientations: 4,
                    sigma: 1.2,
                    wavelength: 5.0,
                    threshold: 0,
                    path: None,
                }
            } else {
                EncoderConfig {
                    kind: EncoderKind::Edges,
                    orientations: 4,
                    sigma: 1.2,
                    wavelength: 5.0,
                    threshold: 200,
                    path: None,
                }
            },
            mnist: MnistConfig {
                dir: PathBuf::from("data/mnist"),
                train_limit: None,
                test_limit: None,
                checkpoint_every: 500,
                checkpoint_test_limit: Some(1000),
            },
            faces: FacesConfig {
                faces_dir: None,
                nonfaces_dir: None,
                pretrain: 200,
                test_per_class: 5000,
                frame_faces: 100,
                nonface_fill: eon_core::data::DEFAULT_NONFACE_FILL,
                scan_stride: 1,
                adapt_stride: 1,
                order: WindowOrder::Raster,
                stop_when_full: true,
                checkpoint_every: 25,
            },
            frame: FrameConfig {
                height: 1080,
                width: 1920,
                stride: 1,
            },
        }
    }

    /// Defaults for `mode`, then `file`, then `seed`, then each override.
    pub fn resolve(
        mode: Mode,
        file: Option<&Path>,
        seed: Option<u64>,
        overrides: &[String],
    ) -> Result<Self, ConfigError> {
        let defaults = Self::defaults(mode);
        let mut table = toml::Table::try_from(&defaults).map_err(|e| ConfigError::Schema(e.to_string()))?;
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
                path: path.to_path_buf(),
                source,
            })?;
            let user: toml::Table = text.parse().map_err(|e| ConfigError::Parse {
                path: path.to_path_buf(),
                source: Box::new(e),
            })?;
            merge(&mut table, user);
        }
        // the command line decides the mode
        table.insert("mode".into(), toml::Value::try_from(mode).expect("mode serializes"));
        if let Some(seed) = seed {
            table.insert("seed".into(), toml::Value::Integer(seed as i64));
        }
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: Self = table.try_into().map_err(|e: toml::de::Error| ConfigError::Schema(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |e: eon_core::Error| ConfigError::Invalid(e.to_string());
        self.model.validate().map_err(invalid)?;
        self.learn.validate().map_err(invalid)?;
        self.cost.validate().map_err(invalid)?;
        if self.mnist.checkpoint_every == 0 || self.faces.checkpoint_every == 0 {
            return Err(ConfigError::Invalid("checkpoint_every must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.faces.nonface_fill) {
            return Err(ConfigError::Invalid("faces.nonface_fill outside [0, 1]".into()));
        }
        let exists = |what: &'static str, path: &Path| {
            if path.exists() {
                Ok(())
            } else {
                Err(ConfigError::Missing {
                    what,
                    path: path.to_path_buf(),
                })
            }
        };
        if matches!(self.mode, Mode::MnistTrain | Mode::MnistEval) {
            exists("MNIST directory", &self.mnist.dir)?;
        }
        if self.mode == Mode::MnistEval && self.model_in.is_none() {
            return Err(ConfigError::Invalid("mnist-eval needs model_in".into()));
        }
        if let Some(p) = &self.model_in {
            exists("model file", p)?;
        }
        if self.encoder.kind == EncoderKind::File {
            if let Some(p) = &self.encoder.path {
                exists("filter file", p)?;
            }
        }
        match (&self.faces.faces_dir, &self.faces.nonfaces_dir) {
            (None, None) => {}
            (Some(f), Some(n)) => {
                exists("face directory", f)?;
                exists("non-face directory", n)?;
            }
            _ => {
                return Err(ConfigError::Invalid(
                    "faces_dir and nonfaces_dir must be given together".into(),
                ))
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// `a.b.c=value`; the value is read as a TOML literal, falling back to a
/// bare string (`--set mnist.dir=/data/mnist`).
fn apply_override(table: &mut toml::Table, text: &str) -> Result<(), ConfigError> {
    let (key, raw) = text
        .split_once('=')
        .ok_or_else(|| ConfigError::Override(text.to_string()))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(ConfigError::Override(text.to_string()));
    }
    let value = format!("v = {}", raw.trim())
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
    let mut parts: Vec<&str> = key.split('.').collect();
    let leaf = parts.pop().expect("split yields one part");
    let mut node = table;
    for p in parts {
        let entry = node
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = match entry {
            toml::Value::Table(t) => t,
            _ => return Err(ConfigError::Path { key: key.to_string() }),
        };
    }
    node.insert(leaf.to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn per_mode_defaults() {
        let m = ExperimentConfig::defaults(Mode::Cost);
        assert_eq!(m.model, ModelConfig::mnist(2000));
        let f = ExperimentConfig::defaults(Mode::FacesAdapt);
        assert_eq!(f.model, ModelConfig::faces(400));
        assert_eq!(f.learn.mode, Supervision::SelfSupervisedOnFire);
        assert_eq!(f.cost.parallelism, 400);
    }

    #[test]
    fn overrides_take_literals_and_strings() {
        let cfg = ExperimentConfig::resolve(
            Mode::Cost,
            None,
            Some(7),
            &[
                "model.neurons=9000".into(),
                "learn.swap_rate=0.5".into(),
                "mnist.dir=/nowhere/mnist".into(),
                "encoder.kind=\"edges\"".into(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.model.neurons, 9000);
        assert_eq!(cfg.learn.swap_rate, 0.5);
        assert_eq!(cfg.mnist.dir, PathBuf::from("/nowhere/mnist"));
        assert_eq!(cfg.encoder.kind, EncoderKind::Edges);
        assert_eq!(cfg.seed, 7);
    }

    #[test]
    fn file_layer_and_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("exp.toml");
        std::fs::write(&path, "seed = 3\n[model]\nneurons = 50\n[learn]\nk = 2\n").unwrap();
        let cfg = ExperimentConfig::resolve(Mode::Cost, Some(&path), None, &["learn.k=3".into()]).unwrap();
        assert_eq!((cfg.seed, cfg.model.neurons, cfg.learn.k), (3, 50, 3));
        // the serialized form reloads to the same config
        std::fs::write(&path, cfg.to_toml()).unwrap();
        let again = ExperimentConfig::resolve(Mode::Cost, Some(&path), None, &[]).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn sanity_checks() {
        let bad = |o: &str| ExperimentConfig::resolve(Mode::Cost, None, None, &[o.to_string()]).is_err();
        assert!(bad("model.active=101"));
        assert!(bad("learn.k=0"));
        assert!(bad("model.filters=16"));
        assert!(bad("model.unknown_key=1"));
        assert!(bad("no_equals_sign"));
        assert!(bad("seed.inner=1"));
        assert!(ExperimentConfig::resolve(Mode::MnistTrain, None, None, &["mnist.dir=/definitely/not/here".into()]).is_err());
    }

    #[test]
    fn default_banks_match_models() {
        for mode in [Mode::MnistTrain, Mode::FacesAdapt] {
            let cfg = ExperimentConfig::defaults(mode);
            cfg.encoder.build(&cfg.model).unwrap();
        }
    }
}
