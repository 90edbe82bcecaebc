use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::crf::crf_nll;
use super::model::{TaggerConfig, TaggerModel};
use super::{LabelAlphabet, TaggerError};
use crate::corpus::{BioTag, Utterance};
use crate::encoder::EncoderModel;
use crate::metrics::{evaluate, EvalOptions, Prediction};
use crate::numcore::{clip_global_norm, Adam, Graph, Tensor};
use crate::seeding;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean per-utterance CRF negative log-likelihood over the epoch.
    pub train_nll: f64,
    pub dev_eer: f64,
    /// Mean per-utterance CRF negative log-likelihood on the dev set.
    #[serde(default)]
    pub dev_nll: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_dev_eer: f64,
}

/// Frozen encoder states for every utterance.
pub fn embed_corpus(encoder: &EncoderModel, corpus: &[Utterance]) -> Result<Vec<Tensor>, TaggerError> {
    corpus
        .iter()
        .map(|u| encoder.embed(&u.texts()).map_err(TaggerError::from))
        .collect()
}

/// Predictions for pre-computed embeddings.
pub fn predict_features(model: &TaggerModel, corpus: &[Utterance], features: &[Tensor]) -> Result<Vec<Prediction>, TaggerError> {
    corpus
        .iter()
        .zip(features)
        .map(|(u, x)| {
            Ok(Prediction {
                id: u.id.clone(),
                labels: model.labels.decode(&model.decode(x)?),
            })
        })
        .collect()
}

fn mean_nll(model: &TaggerModel, gold: &[Vec<usize>], features: &[Tensor]) -> Result<f64, TaggerError> {
    let mut total = 0.0;
    for (y, x) in gold.iter().zip(features) {
        total += crf_nll(&model.lattice(x)?, y)?;
    }
    Ok(total / gold.len().max(1) as f64)
}

/// Trains on pre-computed embeddings. Early stopping keeps the parameters of
/// the best epoch by dev EER, with lower dev NLL breaking ties (earliest on
/// exact ties), and stops after `patience` epochs without improvement.
pub fn train_tagger_on_features(
    train: &[Utterance],
    train_features: &[Tensor],
    dev: &[Utterance],
    dev_features: &[Tensor],
    labels: LabelAlphabet,
    cfg: &TaggerConfig,
) -> Result<(TaggerModel, TrainReport), TaggerError> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(TaggerError::EmptyCorpus);
    }
    if train.len() != train_features.len() || dev.len() != dev_features.len() {
        return Err(TaggerError::Config("feature count does not match corpus size".into()));
    }
    let input_dim = train_features[0].shape().get(1).copied().unwrap_or(0);
    let gold: Vec<Vec<usize>> = train
        .iter()
        .map(|u| labels.encode(&u.tags()))
        .collect::<Result<_, _>>()?;
    let dev_gold: Vec<Vec<usize>> = dev
        .iter()
        .map(|u| labels.encode(&u.tags()))
        .collect::<Result<_, _>>()?;
    let mut model = TaggerModel::new(labels, input_dim, cfg.hidden, cfg.bio_mask, cfg.seed)?;
    let mut adam = Adam::new(cfg.adam, model.params());
    let mut report = TrainReport {
        best_dev_eer: f64::INFINITY,
        ..Default::default()
    };
    let mut best_nll = f64::INFINITY;
    let mut best = model.params().clone();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut stale = 0;
    for epoch in 0..cfg.max_epochs {
        order.sort_unstable();
        order.shuffle(&mut seeding::stream(cfg.seed, "tagger-shuffle", epoch as u64));
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let mut g = Graph::new();
            let mut losses = Vec::with_capacity(chunk.len());
            for &i in chunk {
                losses.push(model.nll(&mut g, &train_features[i], &gold[i])?);
            }
            let mut sum = losses[0];
            for &l in &losses[1..] {
                sum = g.add(sum, l)?;
            }
            let batch_sum = g.value(sum).item();
            if !batch_sum.is_finite() {
                return Err(TaggerError::Divergence { epoch, loss: batch_sum });
            }
            total += batch_sum;
            let mean = g.scale(sum, 1.0 / chunk.len() as f64);
            let mut grads = g.backward(mean)?.for_store(model.params());
            if let Some(c) = cfg.clip_norm {
                clip_global_norm(&mut grads, c);
            }
            adam.step(model.params_mut(), &grads)?;
        }
        let (dev_eer, dev_nll) = if dev.is_empty() {
            (0.0, 0.0)
        } else {
            let preds = predict_features(&model, dev, dev_features)?;
            let eer = evaluate(dev, &preds, EvalOptions::default())?.eer;
            (eer, mean_nll(&model, &dev_gold, dev_features)?)
        };
        let rec = EpochRecord {
            epoch,
            train_nll: total / train.len() as f64,
            dev_eer,
            dev_nll,
        };
        log::debug!(
            "tagger epoch {epoch}: nll {:.4} dev EER {:.4} dev nll {:.4}",
            rec.train_nll,
            dev_eer,
            dev_nll
        );
        report.epochs.push(rec);
        if dev_eer < report.best_dev_eer || (dev_eer == report.best_dev_eer && dev_nll < best_nll) {
            report.best_dev_eer = dev_eer;
            best_nll = dev_nll;
            report.best_epoch = epoch;
            best = model.params().clone();
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    *model.params_mut() = best;
    Ok((model, report))
}

/// Trains the parser on embeddings from a frozen encoder. The label
/// alphabet covers the entity types of both splits.
pub fn train_tagger(
    train: &[Utterance],
    dev: &[Utterance],
    encoder: &EncoderModel,
    cfg: &TaggerConfig,
) -> Result<(TaggerModel, TrainReport), TaggerError> {
    let both: Vec<Utterance> = train.iter().chain(dev).cloned().collect();
    let labels = LabelAlphabet::from_corpus(&both);
    let train_x = embed_corpus(encoder, train)?;
    let dev_x = embed_corpus(encoder, dev)?;
    train_tagger_on_features(train, &train_x, dev, &dev_x, labels, cfg)
}

/// Predicted joint labels for one utterance; pause durations are ignored.
pub fn tag(model: &TaggerModel, encoder: &EncoderModel, words: &[&str]) -> Result<Vec<BioTag>, TaggerError> {
    let x = encoder.embed(words)?;
    Ok(model.labels.decode(&model.decode(&x)?))
}

pub fn tag_corpus(model: &TaggerModel, encoder: &EncoderModel, corpus: &[Utterance]) -> Result<Vec<Prediction>, TaggerError> {
    let x = embed_corpus(encoder, corpus)?;
    predict_features(model, corpus, &x)
}
