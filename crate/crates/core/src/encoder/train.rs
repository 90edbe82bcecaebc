use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::examples::{make_pretrain_examples, MaskingConfig, PretrainExample};
use super::model::{EncoderConfig, EncoderModel, LossBreakdown};
use super::pause::BinningScheme;
use super::vocab::Vocabulary;
use super::{EncoderError, Mode};
use crate::corpus::Utterance;
use crate::numcore::{clip_global_norm, Adam, AdamConfig, Graph};
use crate::seeding;

/// Everything that determines a pretraining run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainConfig {
    pub seed: u64,
    pub mode: Mode,
    pub epochs: usize,
    pub batch_size: usize,
    pub lambda: f64,
    pub clip_norm: Option<f64>,
    pub max_vocab: usize,
    /// Derive the S/M/L boundaries from tertiles of the training pauses.
    pub tertile_bins: bool,
    pub model: EncoderConfig,
    pub adam: AdamConfig,
    pub masking: MaskingConfig,
    pub binning: BinningScheme,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            seed: 0,
            mode: Mode::Baseline,
            epochs: 10,
            batch_size: 16,
            lambda: 1.0,
            clip_norm: Some(5.0),
            max_vocab: 2000,
            tertile_bins: false,
            model: EncoderConfig::default(),
            adam: AdamConfig::default(),
            masking: MaskingConfig::default(),
            binning: BinningScheme::default(),
        }
    }
}

impl PretrainConfig {
    pub fn validate(&self) -> Result<(), EncoderError> {
        self.model.validate()?;
        self.masking.validate()?;
        self.binning.validate()?;
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(EncoderError::Config("epochs and batch_size must be positive".into()));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(EncoderError::Config(format!("lambda must be finite and non-negative, got {}", self.lambda)));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return Err(EncoderError::Config(format!("clip_norm must be positive, got {c}")));
            }
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self, EncoderError> {
        let cfg: PretrainConfig = toml::from_str(text).map_err(|e| EncoderError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Mean per-utterance losses for one epoch.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub bert: f64,
    pub aux: f64,
    pub total: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PretrainReport {
    pub epochs: Vec<EpochLoss>,
    pub steps: usize,
    pub examples: usize,
    pub vocab_size: usize,
    pub vocab_coverage: f64,
}

/// Runs one optimisation step on `batch` and returns its loss breakdown.
pub fn train_step(
    model: &mut EncoderModel,
    adam: &mut Adam,
    batch: &[&PretrainExample],
    lambda: f64,
    clip_norm: Option<f64>,
    dropout: Option<&mut rand_chacha::ChaCha8Rng>,
) -> Result<LossBreakdown, EncoderError> {
    let mut g = Graph::new();
    let (loss, breakdown) = model.batch_loss(&mut g, batch, lambda, dropout)?;
    if !breakdown.is_finite() {
        return Ok(breakdown);
    }
    let grads = g.backward(loss)?;
    let mut grads = grads.for_store(model.params());
    if let Some(c) = clip_norm {
        clip_global_norm(&mut grads, c);
    }
    adam.step(model.params_mut(), &grads)?;
    Ok(breakdown)
}

/// Builds the vocabulary from `corpus` and pretrains an encoder on it.
pub fn pretrain(corpus: &[Utterance], cfg: &PretrainConfig) -> Result<(EncoderModel, PretrainReport), EncoderError> {
    cfg.validate()?;
    if corpus.is_empty() {
        return Err(EncoderError::EmptyCorpus);
    }
    let vocab = Vocabulary::build(corpus, cfg.max_vocab)?;
    let coverage = vocab.coverage(corpus);
    let binning = if cfg.tertile_bins {
        let pauses: Vec<f64> = corpus.iter().flat_map(|u| u.tokens.iter().map(|t| t.pause_after_ms)).collect();
        cfg.binning.from_tertiles(&pauses)?
    } else {
        cfg.binning
    };
    let examples = make_pretrain_examples(corpus, &vocab, &binning, &cfg.masking, cfg.model.max_tokens(), cfg.seed)?;
    let mut model = EncoderModel::new(cfg.model, cfg.mode, vocab, binning, cfg.seed)?;
    let mut adam = Adam::new(cfg.adam, model.params());
    let mut report = PretrainReport {
        examples: examples.len(),
        vocab_size: model.vocab().len(),
        vocab_coverage: coverage,
        ..Default::default()
    };
    let mut order: Vec<usize> = (0..examples.len()).collect();
    for epoch in 0..cfg.epochs {
        order.sort_unstable();
        order.shuffle(&mut seeding::stream(cfg.seed, "pretrain-shuffle", epoch as u64));
        let mut dropout = seeding::stream(cfg.seed, "pretrain-dropout", epoch as u64);
        let mut sum = LossBreakdown::default();
        for (step, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&PretrainExample> = chunk.iter().map(|&i| &examples[i]).collect();
            let b = train_step(&mut model, &mut adam, &batch, cfg.lambda, cfg.clip_norm, Some(&mut dropout))?;
            if !b.is_finite() {
                return Err(EncoderError::Divergence {
                    epoch,
                    step,
                    bert: b.bert,
                    aux: b.aux,
                });
            }
            report.steps += 1;
            sum.bert += b.bert;
            sum.aux += b.aux;
            sum.total += b.total;
        }
        let n = examples.len() as f64;
        let e = EpochLoss {
            epoch,
            bert: sum.bert / n,
            aux: sum.aux / n,
            total: sum.total / n,
        };
        log::info!(
            "pretrain {:?} seed {} epoch {epoch}: bert {:.4} aux {:.4} total {:.4}",
            cfg.mode,
            cfg.seed,
            e.bert,
            e.aux,
            e.total
        );
        report.epochs.push(e);
    }
    Ok((model, report))
}
