//! Reference (non-graph) forms of the pretraining losses, evaluated on
//! predicted probabilities. The training graph computes the same quantities
//! from logits; these are used for reporting and for cross-checking.

use super::examples::PretrainExample;
use super::EncoderError;

/// Probabilities are clamped to at least this before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

/// Head outputs for one example, aligned with its sampled positions:
/// `mlm` follows `mlm_positions`, the other three follow `pause_targets`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct HeadPredictions {
    pub mlm: Vec<Vec<f64>>,
    pub coarse: Vec<[f64; 2]>,
    pub fine: Vec<[f64; 3]>,
    pub regression: Vec<f64>,
}

/// A loss value together with how many probabilities had to be clamped.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub clamped: usize,
}

fn neg_log(p: f64, clamped: &mut usize) -> f64 {
    if p < PROB_FLOOR {
        *clamped += 1;
        log::warn!("probability {p:e} clamped to {PROB_FLOOR:e}");
    }
    -p.max(PROB_FLOOR).ln()
}

fn misaligned(what: &str, got: usize, expected: usize) -> EncoderError {
    EncoderError::Predictions(format!("{what}: {got} predictions for {expected} targets"))
}

/// Summed negative log-probability of the original token at each corrupted
/// position.
pub fn loss_bert(pred: &HeadPredictions, ex: &PretrainExample) -> Result<LossValue, EncoderError> {
    if pred.mlm.len() != ex.mlm_positions.len() {
        return Err(misaligned("mlm", pred.mlm.len(), ex.mlm_positions.len()));
    }
    let mut out = LossValue::default();
    for (dist, &pos) in pred.mlm.iter().zip(&ex.mlm_positions) {
        let target = ex.original_ids[pos];
        let p = *dist
            .get(target)
            .ok_or_else(|| EncoderError::Predictions(format!("token id {target} outside distribution")))?;
        out.value += neg_log(p, &mut out.clamped);
    }
    Ok(out)
}

/// Coarse presence term at every sampled position plus the fine-bin term
/// where a pause is present.
pub fn loss_hbc(pred: &HeadPredictions, ex: &PretrainExample) -> Result<LossValue, EncoderError> {
    let n = ex.pause_targets.len();
    if pred.coarse.len() != n {
        return Err(misaligned("coarse", pred.coarse.len(), n));
    }
    if pred.fine.len() != n {
        return Err(misaligned("fine", pred.fine.len(), n));
    }
    let mut out = LossValue::default();
    for ((c, f), t) in pred.coarse.iter().zip(&pred.fine).zip(&ex.pause_targets) {
        out.value += neg_log(c[t.bin.coarse_index()], &mut out.clamped);
        if let Some(bin) = t.bin.fine {
            out.value += neg_log(f[bin.index()], &mut out.clamped);
        }
    }
    Ok(out)
}

/// Summed squared error between normalised pause and prediction.
pub fn loss_nlr(pred: &HeadPredictions, ex: &PretrainExample) -> Result<LossValue, EncoderError> {
    let n = ex.pause_targets.len();
    if pred.regression.len() != n {
        return Err(misaligned("regression", pred.regression.len(), n));
    }
    let value = pred
        .regression
        .iter()
        .zip(&ex.pause_targets)
        .map(|(y, t)| (t.normalized - y).powi(2))
        .sum();
    Ok(LossValue { value, clamped: 0 })
}
