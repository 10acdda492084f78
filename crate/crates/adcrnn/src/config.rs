//! JSON forms of the core configuration types and the resolved run
//! configuration written to `run.json`.

use std::path::PathBuf;

use adcrnn_core::data::{DimStats, NormStats};
use adcrnn_core::model::{Modality, ModelConfig};
use adcrnn_core::train::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::{AppError, AppResult};

#[derive(Serialize, Deserialize)]
#[serde(remote = "Modality", rename_all = "lowercase")]
enum ModalityDef {
    Acoustic,
    Textual,
    Both,
}

#[derive(Serialize, Deserialize)]
#[serde(remote = "ModelConfig")]
struct ModelConfigDef {
    acoustic_dim: usize,
    textual_dim: usize,
    hc_dim: usize,
    #[serde(with = "ModalityDef")]
    modality: Modality,
    use_hc: bool,
    use_pos: bool,
    attention: bool,
    d_model: usize,
    kernel: usize,
    n_se_blocks: usize,
    channel_schedule: Vec<usize>,
    stride: usize,
    stride_every: usize,
    se_reduction: usize,
    lstm_layers: usize,
    lstm_hidden: usize,
    fc_reduction: usize,
    dropout: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(remote = "TrainConfig", deny_unknown_fields)]
struct TrainConfigDef {
    lr: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    batch_size: usize,
    epochs: usize,
    min_window: usize,
    seed: u64,
    folds: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(remote = "DimStats")]
struct DimStatsDef {
    mean: Vec<f64>,
    std: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(remote = "NormStats")]
pub struct NormStatsDef {
    #[serde(with = "DimStatsDef")]
    acoustic: DimStats,
    #[serde(with = "DimStatsDef")]
    textual: DimStats,
    #[serde(with = "DimStatsDef")]
    hc: DimStats,
}

/// Serde adapters for fields typed with core structs.
pub mod serde_model {
    use super::*;
    pub fn serialize<S: serde::Serializer>(v: &ModelConfig, s: S) -> Result<S::Ok, S::Error> {
        ModelConfigDef::serialize(v, s)
    }
    pub fn deserialize<'de, D: serde::Deserializer<'de>>(d: D) -> Result<ModelConfig, D::Error> {
        ModelConfigDef::deserialize(d)
    }
}

pub mod serde_norm {
    use super::*;
    pub fn serialize<S: serde::Serializer>(v: &NormStats, s: S) -> Result<S::Ok, S::Error> {
        NormStatsDef::serialize(v, s)
    }
    pub fn deserialize<'de, D: serde::Deserializer<'de>>(d: D) -> Result<NormStats, D::Error> {
        NormStatsDef::deserialize(d)
    }
}

pub mod serde_norm_opt {
    use super::*;
    #[derive(Serialize, Deserialize)]
    struct W(#[serde(with = "NormStatsDef")] NormStats);

    pub fn serialize<S: serde::Serializer>(v: &Option<NormStats>, s: S) -> Result<S::Ok, S::Error> {
        v.clone().map(W).serialize(s)
    }
    pub fn deserialize<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Option<NormStats>, D::Error> {
        Ok(Option::<W>::deserialize(d)?.map(|w| w.0))
    }
}

pub mod serde_train {
    use super::*;
    pub fn serialize<S: serde::Serializer>(v: &TrainConfig, s: S) -> Result<S::Ok, S::Error> {
        TrainConfigDef::serialize(v, s)
    }
    /// Keys missing from the input keep their default values.
    pub fn deserialize<'de, D: serde::Deserializer<'de>>(d: D) -> Result<TrainConfig, D::Error> {
        use serde::de::Error;
        let given = serde_json::Value::deserialize(d)?;
        let mut merged = serde_json::to_value(W(TrainConfig::default())).map_err(D::Error::custom)?;
        match (given, &mut merged) {
            (serde_json::Value::Object(g), serde_json::Value::Object(m)) => m.extend(g),
            _ => return Err(D::Error::custom("`train` must be an object")),
        }
        TrainConfigDef::deserialize(merged).map_err(D::Error::custom)
    }

    #[derive(Serialize)]
    struct W(#[serde(with = "TrainConfigDef")] TrainConfig);
}

/// Network size family; feature widths are filled in from the data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    #[default]
    Full,
    Toy,
}

/// Optional overrides on top of a preset.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelOverrides {
    #[serde(default)]
    pub preset: Preset,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub attention: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d_model: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kernel: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_se_blocks: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub channel_schedule: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stride: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stride_every: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub se_reduction: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lstm_layers: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lstm_hidden: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fc_reduction: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dropout: Option<f64>,
}

impl ModelOverrides {
    /// Model configuration for the given input widths.
    pub fn build(&self, acoustic: usize, textual: usize, hc: usize, modality: Modality, use_hc: bool, use_pos: bool) -> ModelConfig {
        let mut c = match self.preset {
            Preset::Full => ModelConfig::full(acoustic, textual, hc),
            Preset::Toy => ModelConfig::toy(acoustic, textual, hc),
        };
        c.modality = modality;
        c.use_hc = use_hc && hc > 0;
        c.use_pos = use_pos;
        macro_rules! apply {
            ($($f:ident),*) => { $(if let Some(v) = &self.$f { c.$f = v.clone(); })* };
        }
        apply!(attention, d_model, kernel, n_se_blocks, channel_schedule, stride, stride_every, se_reduction, lstm_layers, lstm_hidden, fc_reduction, dropout);
        c
    }
}

/// Everything `train` needs to replay a run. Written verbatim as `run.json`,
/// which is itself a valid `--config` file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default = "default_modality", with = "ModalityDef")]
    pub modality: Modality,
    #[serde(default)]
    pub use_pos: bool,
    #[serde(default)]
    pub use_hc: bool,
    /// ANOVA threshold for the hand-crafted columns.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Fit the ANOVA mask once on all labelled dialogues instead of per fold.
    #[serde(default)]
    pub select_once: bool,
    /// Ignore fold assignments in the manifest and split afresh.
    #[serde(default)]
    pub resplit: bool,
    /// Worker threads for fold-parallel training.
    #[serde(default = "default_threads")]
    pub threads: usize,
    #[serde(default)]
    pub model: ModelOverrides,
    #[serde(default, with = "serde_train")]
    pub train: TrainConfig,
}

fn default_folds() -> usize {
    5
}
fn default_modality() -> Modality {
    Modality::Both
}
fn default_alpha() -> f64 {
    0.05
}
fn default_threads() -> usize {
    1
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields default")
    }
}

impl RunConfig {
    pub fn from_json(text: &str, source: &str) -> AppResult<Self> {
        serde_json::from_str(text).map_err(|e| AppError::Usage(format!("{source}: {e}")))
    }

    pub fn validate(&self) -> AppResult<()> {
        if self.folds < 2 {
            return Err(AppError::Usage(format!("--folds must be at least 2, got {}", self.folds)));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(AppError::Usage(format!("alpha {} not in (0, 1)", self.alpha)));
        }
        if self.threads == 0 {
            return Err(AppError::Usage("threads must be at least 1".into()));
        }
        self.train
            .validate()
            .map_err(|e| AppError::Usage(e.to_string()))
    }
}

pub fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serialisable");
    s.push('\n');
    s
}
