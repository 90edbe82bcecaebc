//! BiLSTM-CRF shallow parser over frozen contextual embeddings.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{BioTag, Position, Utterance};
use crate::encoder::EncoderError;
use crate::metrics::MetricsError;
use crate::numcore::{CheckpointError, NumError, Tensor};

pub mod crf;
pub mod model;
pub mod train;

pub use crf::{crf_log_partition, crf_nll, viterbi_decode, CrfNll, TagLattice};
pub use model::{TaggerConfig, TaggerModel};
pub use train::{tag, tag_corpus, train_tagger, train_tagger_on_features, EpochRecord, TrainReport};

/// Score given to transitions forbidden by the BIO mask.
pub const MASKED_SCORE: f64 = -1e9;

#[derive(Debug, Error)]
pub enum TaggerError {
    #[error("lattice: {0}")]
    Lattice(String),
    #[error("gold sequence has {got} labels for {expected} tokens")]
    GoldLength { expected: usize, got: usize },
    #[error("label id {label} out of range for {labels} labels")]
    LabelRange { label: usize, labels: usize },
    #[error("label {0} is not in the alphabet")]
    UnknownLabel(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error("checkpoint metadata: {0}")]
    Meta(String),
    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Divergence { epoch: usize, loss: f64 },
    #[error("embedding dimension {got} does not match the tagger input size {expected}")]
    InputDim { expected: usize, got: usize },
    #[error("empty training corpus")]
    EmptyCorpus,
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Num(#[from] NumError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

/// Joint BIO labels mapped to dense ids. `O` is id 0; each entity type
/// contributes `B-` then `I-`, types in lexicographic order. START and STOP
/// are the implicit ids `len()` and `len() + 1` of the transition matrix.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct LabelAlphabet {
    labels: Vec<BioTag>,
    index: HashMap<BioTag, usize>,
}

impl TryFrom<Vec<String>> for LabelAlphabet {
    type Error = TaggerError;

    fn try_from(names: Vec<String>) -> Result<Self, Self::Error> {
        let labels = names
            .iter()
            .map(|n| n.parse::<BioTag>().map_err(|_| TaggerError::UnknownLabel(n.clone())))
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_labels(labels)
    }
}

impl From<LabelAlphabet> for Vec<String> {
    fn from(a: LabelAlphabet) -> Self {
        a.labels.iter().map(ToString::to_string).collect()
    }
}

impl LabelAlphabet {
    fn from_labels(labels: Vec<BioTag>) -> Result<Self, TaggerError> {
        if labels.first() != Some(&BioTag::outside()) {
            return Err(TaggerError::Config("label alphabet must start with O".into()));
        }
        let mut index = HashMap::new();
        for (i, l) in labels.iter().enumerate() {
            if index.insert(l.clone(), i).is_some() {
                return Err(TaggerError::Config(format!("duplicate label {l}")));
            }
        }
        Ok(LabelAlphabet { labels, index })
    }

    pub fn from_entity_types<S: AsRef<str>>(types: &[S]) -> Self {
        let mut types: Vec<&str> = types.iter().map(AsRef::as_ref).collect();
        types.sort_unstable();
        types.dedup();
        let labels = std::iter::once(BioTag::outside())
            .chain(types.iter().flat_map(|t| [BioTag::begin(t), BioTag::inside(t)]))
            .collect();
        Self::from_labels(labels).expect("distinct labels")
    }

    pub fn from_corpus(corpus: &[Utterance]) -> Self {
        let types: Vec<String> = corpus
            .iter()
            .flat_map(|u| &u.tokens)
            .filter_map(|t| t.tag.entity_type().map(str::to_owned))
            .collect();
        Self::from_entity_types(&types)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn id(&self, tag: &BioTag) -> Option<usize> {
        self.index.get(tag).copied()
    }

    pub fn label(&self, id: usize) -> Option<&BioTag> {
        self.labels.get(id)
    }

    pub fn labels(&self) -> &[BioTag] {
        &self.labels
    }

    pub fn start(&self) -> usize {
        self.len()
    }

    pub fn stop(&self) -> usize {
        self.len() + 1
    }

    pub fn encode(&self, tags: &[BioTag]) -> Result<Vec<usize>, TaggerError> {
        tags.iter()
            .map(|t| self.id(t).ok_or_else(|| TaggerError::UnknownLabel(t.to_string())))
            .collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Vec<BioTag> {
        ids.iter().map(|&i| self.labels[i].clone()).collect()
    }

    /// Additive transition mask: 0 where a transition is BIO-valid,
    /// [`MASKED_SCORE`] where an `I-x` would follow anything but `B-x`/`I-x`.
    pub fn bio_mask(&self) -> Tensor {
        let w = self.len() + 2;
        let mut m = Tensor::zeros(&[w, w]);
        let data = m.data_mut();
        for (to, tag) in self.labels.iter().enumerate() {
            if tag.position() != Position::I {
                continue;
            }
            for from in 0..self.len() + 1 {
                let ok = from < self.len() && self.labels[from].entity_type() == tag.entity_type();
                if !ok {
                    data[from * w + to] = MASKED_SCORE;
                }
            }
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alphabet_layout() {
        let a = LabelAlphabet::from_entity_types(&["Song", "Artist", "Song"]);
        let names: Vec<String> = a.clone().into();
        assert_eq!(names, ["O", "B-Artist", "I-Artist", "B-Song", "I-Song"]);
        assert_eq!((a.start(), a.stop()), (5, 6));
        assert_eq!(a.id(&BioTag::begin("Song")), Some(3));
        assert!(a.encode(&[BioTag::begin("Team")]).is_err());
    }

    #[test]
    fn alphabet_serde_round_trip() {
        let a = LabelAlphabet::from_entity_types(&["Team"]);
        let json = serde_json::to_string(&a).unwrap();
        assert_eq!(json, r#"["O","B-Team","I-Team"]"#);
        assert_eq!(serde_json::from_str::<LabelAlphabet>(&json).unwrap(), a);
        assert!(serde_json::from_str::<LabelAlphabet>(r#"["B-Team"]"#).is_err());
    }

    #[test]
    fn bio_mask_blocks_orphan_inside() {
        let a = LabelAlphabet::from_entity_types(&["A", "B"]);
        let m = a.bio_mask();
        let w = a.len() + 2;
        let at = |f: usize, t: usize| m.data()[f * w + t];
        let (o, ba, ia, bb, ib) = (0, 1, 2, 3, 4);
        assert_eq!(at(o, ia), MASKED_SCORE);
        assert_eq!(at(a.start(), ia), MASKED_SCORE);
        assert_eq!(at(bb, ia), MASKED_SCORE);
        assert_eq!(at(ib, ia), MASKED_SCORE);
        assert_eq!(at(ba, ia), 0.0);
        assert_eq!(at(ia, ia), 0.0);
        assert_eq!(at(o, ba), 0.0);
        assert_eq!(at(ia, a.stop()), 0.0);
    }
}
