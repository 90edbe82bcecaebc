//! Entity, token and utterance error rates, and relative change against a
//! baseline.
//!
//! An entity counts as wrong when any token of its gold span carries a
//! predicted label different from the gold label. Predictions are scored
//! as given, without BIO repair.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{entity_spans, spans_of, BioTag, Utterance};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("utterance {id:?}: {gold} gold tokens but {predicted} predicted labels")]
    Length {
        id: String,
        gold: usize,
        predicted: usize,
    },
    #[error("no prediction for utterance {0:?}")]
    Missing(String),
    #[error("duplicate prediction for utterance {0:?}")]
    Duplicate(String),
    #[error("line {line}: malformed prediction: {message}")]
    Malformed { line: usize, message: String },
    #[error("malformed report: {0}")]
    Report(String),
    #[error("nothing to evaluate")]
    Empty,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// One line of a predictions file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Prediction {
    pub id: String,
    pub labels: Vec<BioTag>,
}

pub fn parse_prediction_line(line: &str) -> Result<Prediction, MetricsError> {
    serde_json::from_str(line).map_err(|e| MetricsError::Malformed {
        line: 0,
        message: e.to_string(),
    })
}

pub fn parse_predictions<R: BufRead>(reader: R) -> Result<Vec<Prediction>, MetricsError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_prediction_line(&line).map_err(|e| match e {
            MetricsError::Malformed { message, .. } => MetricsError::Malformed { line: i + 1, message },
            other => other,
        })?);
    }
    Ok(out)
}

pub fn write_predictions<W: Write>(mut w: W, preds: &[Prediction]) -> Result<(), MetricsError> {
    for p in preds {
        serde_json::to_writer(&mut w, p).map_err(std::io::Error::other)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalOptions {
    /// Count only mislabeled gold-entity tokens in the TER numerator.
    pub ter_entities_only: bool,
    /// Also report exact-match span precision/recall/F1.
    pub span_f1: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub entities_total: usize,
    pub entities_wrong: usize,
    pub tokens_total: usize,
    pub tokens_wrong: usize,
    pub utterances_total: usize,
    pub utterances_wrong: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpanScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<String>,
    pub eer: f64,
    pub ter: f64,
    pub uer: f64,
    pub counts: Counts,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spans: Option<SpanScores>,
}

impl EvalReport {
    pub fn from_json(text: &str) -> Result<Self, MetricsError> {
        let r: EvalReport = serde_json::from_str(text).map_err(|e| MetricsError::Report(e.to_string()))?;
        let ok = |v: f64| (0.0..=1.0).contains(&v);
        if !(ok(r.eer) && ok(r.ter) && ok(r.uer)) {
            return Err(MetricsError::Report("rates must lie in [0, 1]".into()));
        }
        Ok(r)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn rate(&self, metric: Metric) -> f64 {
        match metric {
            Metric::Eer => self.eer,
            Metric::Ter => self.ter,
            Metric::Uer => self.uer,
        }
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Scores predictions (matched to gold by utterance id).
pub fn evaluate(gold: &[Utterance], predictions: &[Prediction], opts: EvalOptions) -> Result<EvalReport, MetricsError> {
    if gold.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut by_id: HashMap<&str, &Prediction> = HashMap::with_capacity(predictions.len());
    for p in predictions {
        if by_id.insert(p.id.as_str(), p).is_some() {
            return Err(MetricsError::Duplicate(p.id.clone()));
        }
    }
    let mut c = Counts::default();
    let (mut span_tp, mut span_pred, mut span_gold) = (0usize, 0usize, 0usize);
    for u in gold {
        let pred = by_id.get(u.id.as_str()).ok_or_else(|| MetricsError::Missing(u.id.clone()))?;
        if pred.labels.len() != u.len() {
            return Err(MetricsError::Length {
                id: u.id.clone(),
                gold: u.len(),
                predicted: pred.labels.len(),
            });
        }
        let wrong: Vec<bool> = u.tokens.iter().zip(&pred.labels).map(|(t, p)| t.tag != *p).collect();
        c.tokens_total += u.len();
        c.tokens_wrong += u
            .tokens
            .iter()
            .zip(&wrong)
            .filter(|(t, w)| **w && (!opts.ter_entities_only || t.tag.is_entity()))
            .count();
        let spans = entity_spans(u);
        let bad = spans.iter().filter(|s| wrong[s.start..=s.end].iter().any(|w| *w)).count();
        c.entities_total += spans.len();
        c.entities_wrong += bad;
        c.utterances_total += 1;
        c.utterances_wrong += usize::from(bad > 0);
        if opts.span_f1 {
            let predicted = spans_of(&pred.labels.iter().collect::<Vec<_>>());
            span_tp += predicted.iter().filter(|s| spans.contains(s)).count();
            span_pred += predicted.len();
            span_gold += spans.len();
        }
    }
    let spans = opts.span_f1.then(|| {
        let precision = ratio(span_tp, span_pred);
        let recall = ratio(span_tp, span_gold);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        SpanScores { precision, recall, f1 }
    });
    Ok(EvalReport {
        model: None,
        domain: None,
        eer: ratio(c.entities_wrong, c.entities_total),
        ter: ratio(c.tokens_wrong, c.tokens_total),
        uer: ratio(c.utterances_wrong, c.utterances_total),
        counts: c,
        spans,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Metric {
    Eer,
    Ter,
    Uer,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Eer, Metric::Ter, Metric::Uer];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Eer => "EER",
            Metric::Ter => "TER",
            Metric::Uer => "UER",
        }
    }
}

/// Signed relative change in percent; negative is an improvement.
/// `None` when the baseline rate is zero.
pub fn relative_change(baseline: f64, variant: f64) -> Option<f64> {
    (baseline > 0.0).then(|| 100.0 * (variant - baseline) / baseline)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub model: String,
    pub domain: String,
    pub delta_eer: Option<f64>,
    pub delta_ter: Option<f64>,
    pub delta_uer: Option<f64>,
}

impl ComparisonRow {
    pub fn delta(&self, metric: Metric) -> Option<f64> {
        match metric {
            Metric::Eer => self.delta_eer,
            Metric::Ter => self.delta_ter,
            Metric::Uer => self.delta_uer,
        }
    }
}

/// One row per variant, relative to `baseline`.
pub fn compare(baseline: &EvalReport, variants: &[(String, EvalReport)], domain: &str) -> Vec<ComparisonRow> {
    variants
        .iter()
        .map(|(model, r)| ComparisonRow {
            model: model.clone(),
            domain: domain.to_owned(),
            delta_eer: relative_change(baseline.eer, r.eer),
            delta_ter: relative_change(baseline.ter, r.ter),
            delta_uer: relative_change(baseline.uer, r.uer),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Token;

    fn gold(id: &str, tags: &[&str]) -> Utterance {
        let tokens = tags
            .iter()
            .enumerate()
            .map(|(i, t)| Token::new(&format!("w{i}"), 0.0, t.parse().unwrap()))
            .collect();
        Utterance::new(id, "d", tokens).unwrap()
    }

    fn pred(id: &str, tags: &[&str]) -> Prediction {
        Prediction {
            id: id.into(),
            labels: tags.iter().map(|t| t.parse().unwrap()).collect(),
        }
    }

    #[test]
    fn perfect_predictions() {
        let g = [gold("a", &["O", "B-S", "I-S"]), gold("b", &["B-T"])];
        let p = [pred("a", &["O", "B-S", "I-S"]), pred("b", &["B-T"])];
        let r = evaluate(&g, &p, EvalOptions::default()).unwrap();
        assert_eq!((r.eer, r.ter, r.uer), (0.0, 0.0, 0.0));
    }

    #[test]
    fn truncated_entity_counts() {
        let r = evaluate(
            &[gold("a", &["O", "B-S", "I-S"])],
            &[pred("a", &["O", "B-S", "O"])],
            EvalOptions::default(),
        )
        .unwrap();
        assert_eq!(r.eer, 1.0);
        assert_eq!(r.ter, 1.0 / 3.0);
        assert_eq!(r.uer, 1.0);
        assert_eq!(r.counts.tokens_wrong, 1);
    }

    #[test]
    fn non_entity_error_does_not_raise_uer() {
        let g = [gold("a", &["O", "B-S"]), gold("b", &["O", "O", "B-S"])];
        let p = [pred("a", &["O", "B-S"]), pred("b", &["B-S", "O", "B-S"])];
        let r = evaluate(&g, &p, EvalOptions::default()).unwrap();
        assert_eq!(r.uer, 0.0);
        assert_eq!(r.eer, 0.0);
        assert!(r.ter > 0.0);
        let only = evaluate(
            &g,
            &p,
            EvalOptions {
                ter_entities_only: true,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(only.ter, 0.0);
    }

    #[test]
    fn length_mismatch_names_utterance() {
        let err = evaluate(&[gold("u7", &["O", "B-S"])], &[pred("u7", &["O"])], EvalOptions::default()).unwrap_err();
        assert!(err.to_string().contains("u7"));
        assert!(matches!(
            evaluate(&[gold("u7", &["O"])], &[], EvalOptions::default()),
            Err(MetricsError::Missing(_))
        ));
    }

    #[test]
    fn span_scores_behind_flag() {
        let opts = EvalOptions {
            span_f1: true,
            ..Default::default()
        };
        let r = evaluate(
            &[gold("a", &["B-S", "I-S", "O", "B-T"])],
            &[pred("a", &["B-S", "I-S", "O", "O"])],
            opts,
        )
        .unwrap();
        let s = r.spans.unwrap();
        assert_eq!((s.precision, s.recall), (1.0, 0.5));
        assert!((s.f1 - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn relative_changes() {
        let d = relative_change(0.10, 0.09).unwrap();
        assert!((d - -10.0).abs() < 1e-9, "{d}");
        assert_eq!(relative_change(0.2, 0.2), Some(0.0));
        assert_eq!(relative_change(0.0, 0.1), None);
    }

    #[test]
    fn report_json_round_trip() {
        let r = evaluate(&[gold("a", &["O", "B-S"])], &[pred("a", &["O", "O"])], EvalOptions::default()).unwrap();
        assert_eq!(EvalReport::from_json(&r.to_json()).unwrap(), r);
        assert!(EvalReport::from_json(r#"{"eer":2.0,"ter":0,"uer":0,"counts":{"entities_total":0,"entities_wrong":0,"tokens_total":0,"tokens_wrong":0,"utterances_total":0,"utterances_wrong":0}}"#).is_err());
    }

    #[test]
    fn predictions_parse_with_line_numbers() {
        let text = "{\"id\":\"a\",\"labels\":[\"O\",\"B-X\"]}\n\n{\"id\":\"b\",\"labels\":[\"Q\"]}\n";
        match parse_predictions(text.as_bytes()) {
            Err(MetricsError::Malformed { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }
}
