use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::pause::{bin_pause, normalize_pause, BinningScheme, PauseBin};
use super::vocab::{Vocabulary, MASK, SPECIALS};
use super::EncoderError;
use crate::corpus::Utterance;
use crate::seeding;

/// Corruption rates for the masked-token objective and sampling sizes for the
/// pause objective.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaskingConfig {
    pub token_fraction: f64,
    pub mask_prob: f64,
    pub random_prob: f64,
    pub pause_fraction: f64,
    pub pause_max: usize,
}

impl Default for MaskingConfig {
    fn default() -> Self {
        MaskingConfig {
            token_fraction: 0.15,
            mask_prob: 0.8,
            random_prob: 0.1,
            pause_fraction: 0.15,
            pause_max: 3,
        }
    }
}

impl MaskingConfig {
    pub fn validate(&self) -> Result<(), EncoderError> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !unit(self.token_fraction)
            || !unit(self.mask_prob)
            || !unit(self.random_prob)
            || self.mask_prob + self.random_prob > 1.0
            || !unit(self.pause_fraction)
            || self.pause_max == 0
        {
            return Err(EncoderError::Config(format!("invalid masking config {self:?}")));
        }
        Ok(())
    }

    /// `max(1, min(pause_max, round(pause_fraction * len)))`.
    pub fn pause_count(&self, len: usize) -> usize {
        ((self.pause_fraction * len as f64).round() as usize).clamp(1, self.pause_max)
    }

    pub fn token_count(&self, len: usize) -> usize {
        ((self.token_fraction * len as f64).round() as usize).clamp(1, len.max(1))
    }
}

/// Pause target at one sampled position.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PauseTarget {
    pub position: usize,
    pub duration_ms: f64,
    pub bin: PauseBin,
    pub normalized: f64,
}

/// One utterance prepared for pretraining. Positions index the utterance
/// tokens, not counting the prepended classification token.
#[derive(Clone, Debug, PartialEq)]
pub struct PretrainExample {
    pub id: String,
    pub input_ids: Vec<usize>,
    pub original_ids: Vec<usize>,
    pub mlm_positions: Vec<usize>,
    pub pause_targets: Vec<PauseTarget>,
}

impl PretrainExample {
    pub fn len(&self) -> usize {
        self.input_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.input_ids.is_empty()
    }
}

/// Builds corruption and pause targets for one utterance. Utterances longer
/// than `max_tokens` are truncated. Randomness is keyed on `(seed, id)`.
pub fn make_example(
    utt: &Utterance,
    vocab: &Vocabulary,
    scheme: &BinningScheme,
    masking: &MaskingConfig,
    max_tokens: usize,
    seed: u64,
) -> Result<PretrainExample, EncoderError> {
    if max_tokens == 0 {
        return Err(EncoderError::Config("max_tokens must be positive".into()));
    }
    let mut tokens = &utt.tokens[..];
    if tokens.len() > max_tokens {
        log::warn!("utterance {} truncated from {} to {max_tokens} tokens", utt.id, tokens.len());
        tokens = &tokens[..max_tokens];
    }
    let n = tokens.len();
    let mut rng = seeding::keyed_stream(seed, "pretrain-example", &utt.id);
    let original_ids: Vec<usize> = tokens.iter().map(|t| vocab.id(&t.text)).collect();
    let mut input_ids = original_ids.clone();

    let mut mlm_positions = sample(&mut rng, n, masking.token_count(n)).into_vec();
    mlm_positions.sort_unstable();
    let random_range = SPECIALS.len()..vocab.len().max(SPECIALS.len() + 1);
    for &p in &mlm_positions {
        let r: f64 = rng.random();
        if r < masking.mask_prob {
            input_ids[p] = MASK;
        } else if r < masking.mask_prob + masking.random_prob && vocab.len() > SPECIALS.len() {
            input_ids[p] = rng.random_range(random_range.clone());
        }
    }

    let candidates: Vec<usize> = (0..n).filter(|&i| !scheme.is_noise(tokens[i].pause_after_ms)).collect();
    let mut pause_positions = Vec::new();
    if !candidates.is_empty() {
        let k = masking.pause_count(n).min(candidates.len());
        pause_positions = sample(&mut rng, candidates.len(), k)
            .into_iter()
            .map(|i| candidates[i])
            .collect();
        let nonzero: Vec<usize> = candidates
            .iter()
            .copied()
            .filter(|&i| tokens[i].pause_after_ms > 0.0)
            .collect();
        let has_nonzero = pause_positions.iter().any(|&i| tokens[i].pause_after_ms > 0.0);
        if !has_nonzero && !nonzero.is_empty() {
            let last = pause_positions.len() - 1;
            pause_positions[last] = nonzero[rng.random_range(0..nonzero.len())];
        }
        pause_positions.sort_unstable();
    }
    let pause_targets = pause_positions
        .into_iter()
        .map(|position| {
            let d = tokens[position].pause_after_ms;
            Ok(PauseTarget {
                position,
                duration_ms: d,
                bin: bin_pause(d, scheme)?,
                normalized: normalize_pause(d, scheme)?,
            })
        })
        .collect::<Result<_, EncoderError>>()?;

    Ok(PretrainExample {
        id: utt.id.clone(),
        input_ids,
        original_ids,
        mlm_positions,
        pause_targets,
    })
}

pub fn make_pretrain_examples(
    corpus: &[Utterance],
    vocab: &Vocabulary,
    scheme: &BinningScheme,
    masking: &MaskingConfig,
    max_tokens: usize,
    seed: u64,
) -> Result<Vec<PretrainExample>, EncoderError> {
    scheme.validate()?;
    masking.validate()?;
    corpus
        .iter()
        .map(|u| make_example(u, vocab, scheme, masking, max_tokens, seed))
        .collect()
}
