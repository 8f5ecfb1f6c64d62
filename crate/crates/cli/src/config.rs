//! Optional TOML configuration file for training runs. Precedence is
//! flags > file > built-in defaults; the fully resolved configuration
//! is echoed into the run manifest.

use std::path::Path;

use popseq::model::ModelConfig;
use popseq::train::{LossMode, TrainConfig};
use popseq::{Error, Result};

#[derive(Debug, Default, serde::Deserialize)]
pub struct FileConfig {
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainSection,
}

#[derive(Debug, Default, serde::Deserialize)]
pub struct ModelSection {
    pub d: Option<usize>,
    pub heads: Option<usize>,
    pub layers: Option<usize>,
    pub max_len: Option<usize>,
    pub dropout: Option<f64>,
}

#[derive(Debug, Default, serde::Deserialize)]
pub struct TrainSection {
    pub lr: Option<f64>,
    pub max_epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub patience: Option<usize>,
    pub weight_decay: Option<f64>,
    pub negatives_per_positive: Option<usize>,
    pub loss: Option<String>,
}

pub fn load_file_config(path: &Path) -> Result<FileConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))
}

pub fn parse_loss_mode(s: &str) -> Result<LossMode> {
    match s {
        "default" => Ok(LossMode::Default),
        "paper-literal" => Ok(LossMode::PaperLiteral),
        other => Err(Error::config(format!(
            "unknown loss mode {other:?} (expected default or paper-literal)"
        ))),
    }
}

/// `defaults ← file ← flags`, in that order.
pub struct TrainOverrides {
    pub d: Option<usize>,
    pub heads: Option<usize>,
    pub layers: Option<usize>,
    pub max_len: Option<usize>,
    pub dropout: Option<f64>,
    pub lr: Option<f64>,
    pub max_epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub patience: Option<usize>,
    pub weight_decay: Option<f64>,
    pub negatives: Option<usize>,
    pub loss: Option<String>,
}

pub fn resolve(
    mut model: ModelConfig,
    mut train: TrainConfig,
    file: &FileConfig,
    flags: &TrainOverrides,
) -> Result<(ModelConfig, TrainConfig)> {
    let m = &file.model;
    model.d = flags.d.or(m.d).unwrap_or(model.d);
    model.heads = flags.heads.or(m.heads).unwrap_or(model.heads);
    model.layers = flags.layers.or(m.layers).unwrap_or(model.layers);
    model.max_len = flags.max_len.or(m.max_len).unwrap_or(model.max_len);
    model.dropout = flags.dropout.or(m.dropout).unwrap_or(model.dropout);

    let t = &file.train;
    train.lr = flags.lr.or(t.lr).unwrap_or(train.lr);
    train.max_epochs = flags.max_epochs.or(t.max_epochs).unwrap_or(train.max_epochs);
    train.batch_size = flags.batch_size.or(t.batch_size).unwrap_or(train.batch_size);
    train.patience = flags.patience.or(t.patience).unwrap_or(train.patience);
    train.weight_decay = flags
        .weight_decay
        .or(t.weight_decay)
        .unwrap_or(train.weight_decay);
    train.negatives_per_positive = flags
        .negatives
        .or(t.negatives_per_positive)
        .unwrap_or(train.negatives_per_positive);
    if let Some(loss) = flags.loss.as_deref().or(t.loss.as_deref()) {
        train.loss_mode = parse_loss_mode(loss)?;
    }
    model.validate()?;
    train.validate()?;
    Ok((model, train))
}
