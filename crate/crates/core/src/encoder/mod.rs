//! Transformer encoder pretrained with a masked-token objective and an
//! optional auxiliary pause objective: hierarchical bin classification
//! (`Hbc`) or normalised linear regression (`Nlr`).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numcore::{CheckpointError, NumError};

pub mod examples;
pub mod loss;
pub mod model;
pub mod pause;
pub mod train;
pub mod vocab;

pub use examples::{make_example, make_pretrain_examples, MaskingConfig, PauseTarget, PretrainExample};
pub use loss::{loss_bert, loss_hbc, loss_nlr, HeadPredictions, LossValue, PROB_FLOOR};
pub use model::{EncoderConfig, EncoderModel, LossBreakdown};
pub use pause::{bin_pause, normalize_pause, BinningScheme, FineBin, PauseBin};
pub use train::{pretrain, train_step, EpochLoss, PretrainConfig, PretrainReport};
pub use vocab::{Vocabulary, CLS, MASK, PAD, SPECIALS, UNK};

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("vocabulary: {0}")]
    Vocabulary(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error("invalid pause duration {0}")]
    Pause(f64),
    #[error("predictions: {0}")]
    Predictions(String),
    #[error("sequence of {len} tokens does not fit (1..={max})")]
    Length { len: usize, max: usize },
    #[error("checkpoint metadata: {0}")]
    Meta(String),
    #[error("pretraining corpus is empty")]
    EmptyCorpus,
    #[error("loss diverged at epoch {epoch}, step {step} (bert {bert}, aux {aux})")]
    Divergence { epoch: usize, step: usize, bert: f64, aux: f64 },
    #[error(transparent)]
    Num(#[from] NumError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

/// Pretraining objective.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Baseline,
    Hbc,
    Nlr,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Baseline, Mode::Hbc, Mode::Nlr];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Baseline => "baseline",
            Mode::Hbc => "hbc",
            Mode::Nlr => "nlr",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = EncoderError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "baseline" | "bert" => Ok(Mode::Baseline),
            "hbc" => Ok(Mode::Hbc),
            "nlr" => Ok(Mode::Nlr),
            other => Err(EncoderError::Config(format!("unknown mode {other:?}"))),
        }
    }
}
