//! Pause-annotated, BIO-tagged utterances and their line-delimited JSON
//! serialization.
//!
//! One record per line:
//!
//! ```text
//! {"id":"u1","domain":"music","tokens":[{"text":"play","pause_ms":12,"tag":"O"},{"text":"thank","pause_ms":5,"tag":"B-Song"}]}
//! ```
//!
//! A missing or `null` `pause_ms` reads as 0 ms.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("utterance {id:?}, token {index}: {message}")]
    Invalid {
        id: String,
        index: usize,
        message: String,
    },
    #[error("utterance {0:?} has no tokens")]
    EmptyUtterance(String),
    #[error("invalid label {0:?}")]
    Label(String),
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Position {
    O,
    B,
    I,
}

/// A BIO tag; `entity_type` is present exactly when the position is B or I.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BioTag {
    position: Position,
    entity_type: Option<String>,
}

impl BioTag {
    pub fn outside() -> Self {
        BioTag {
            position: Position::O,
            entity_type: None,
        }
    }

    pub fn begin(entity_type: &str) -> Self {
        BioTag {
            position: Position::B,
            entity_type: Some(entity_type.to_owned()),
        }
    }

    pub fn inside(entity_type: &str) -> Self {
        BioTag {
            position: Position::I,
            entity_type: Some(entity_type.to_owned()),
        }
    }

    pub fn position(&self) -> Position {
        self.position
    }

    pub fn entity_type(&self) -> Option<&str> {
        self.entity_type.as_deref()
    }

    pub fn is_entity(&self) -> bool {
        self.position != Position::O
    }
}

impl fmt::Display for BioTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.position, &self.entity_type) {
            (Position::O, _) => f.write_str("O"),
            (Position::B, Some(t)) => write!(f, "B-{t}"),
            (Position::I, Some(t)) => write!(f, "I-{t}"),
            _ => unreachable!("constructors keep entity_type in sync with position"),
        }
    }
}

impl FromStr for BioTag {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "O" {
            return Ok(BioTag::outside());
        }
        let bad = || CorpusError::Label(s.to_owned());
        let (prefix, ty) = s.split_once('-').ok_or_else(bad)?;
        if ty.is_empty() || ty.chars().any(char::is_whitespace) {
            return Err(bad());
        }
        match prefix {
            "B" => Ok(BioTag::begin(ty)),
            "I" => Ok(BioTag::inside(ty)),
            _ => Err(bad()),
        }
    }
}

impl Serialize for BioTag {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for BioTag {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

fn zero_if_null<'de, D: serde::Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(0.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Token {
    pub text: String,
    #[serde(rename = "pause_ms", default, deserialize_with = "zero_if_null")]
    pub pause_after_ms: f64,
    pub tag: BioTag,
}

impl Token {
    pub fn new(text: &str, pause_after_ms: f64, tag: BioTag) -> Self {
        Token {
            text: text.to_owned(),
            pause_after_ms,
            tag,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Utterance {
    pub id: String,
    pub domain: String,
    pub tokens: Vec<Token>,
}

impl Utterance {
    /// Builds and validates an utterance.
    pub fn new(id: &str, domain: &str, tokens: Vec<Token>) -> Result<Self, CorpusError> {
        let u = Utterance {
            id: id.to_owned(),
            domain: domain.to_owned(),
            tokens,
        };
        u.validate()?;
        Ok(u)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn texts(&self) -> Vec<&str> {
        self.tokens.iter().map(|t| t.text.as_str()).collect()
    }

    pub fn tags(&self) -> Vec<BioTag> {
        self.tokens.iter().map(|t| t.tag.clone()).collect()
    }

    /// Checks token invariants and BIO well-formedness.
    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.tokens.is_empty() {
            return Err(CorpusError::EmptyUtterance(self.id.clone()));
        }
        let invalid = |index: usize, message: String| CorpusError::Invalid {
            id: self.id.clone(),
            index,
            message,
        };
        let mut prev: Option<&BioTag> = None;
        for (i, tok) in self.tokens.iter().enumerate() {
            if tok.text.is_empty() {
                return Err(invalid(i, "empty token text".into()));
            }
            if !tok.pause_after_ms.is_finite() || tok.pause_after_ms < 0.0 {
                return Err(invalid(i, format!("pause {} ms is not a non-negative number", tok.pause_after_ms)));
            }
            if tok.tag.position == Position::I {
                let continues = prev.is_some_and(|p| p.is_entity() && p.entity_type == tok.tag.entity_type);
                if !continues {
                    let before = prev.map_or_else(|| "utterance start".to_owned(), ToString::to_string);
                    return Err(invalid(i, format!("BIO violation: {} follows {before}", tok.tag)));
                }
            }
            prev = Some(&tok.tag);
        }
        Ok(())
    }
}

/// An entity span, inclusive on both ends.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub entity_type: String,
}

/// Maximal `B I*` runs of a BIO-valid utterance.
pub fn entity_spans(utterance: &Utterance) -> Vec<Span> {
    let tags: Vec<&BioTag> = utterance.tokens.iter().map(|t| &t.tag).collect();
    spans_of(&tags)
}

/// Span extraction that tolerates invalid sequences (an `I` that does not
/// continue a span opens a new one), for scoring decoder output.
pub fn spans_of(tags: &[&BioTag]) -> Vec<Span> {
    let mut spans: Vec<Span> = Vec::new();
    let mut open: Option<Span> = None;
    for (i, tag) in tags.iter().enumerate() {
        let continues = tag.position == Position::I
            && open
                .as_ref()
                .is_some_and(|s| Some(s.entity_type.as_str()) == tag.entity_type());
        if continues {
            if let Some(s) = open.as_mut() {
                s.end = i;
            }
            continue;
        }
        spans.extend(open.take());
        if let Some(ty) = tag.entity_type() {
            open = Some(Span {
                start: i,
                end: i,
                entity_type: ty.to_owned(),
            });
        }
    }
    spans.extend(open);
    spans
}

/// Parses one record without validation of line context.
pub fn parse_record(line: &str) -> Result<Utterance, CorpusError> {
    let u: Utterance = serde_json::from_str(line).map_err(|e| CorpusError::Malformed {
        line: 0,
        message: e.to_string(),
    })?;
    u.validate()?;
    Ok(u)
}

/// Reads a line-delimited corpus. Blank lines are skipped.
pub fn parse_corpus<R: BufRead>(reader: R) -> Result<Vec<Utterance>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let u = parse_record(&line).map_err(|e| match e {
            CorpusError::Malformed { message, .. } => CorpusError::Malformed { line: i + 1, message },
            other => other,
        })?;
        out.push(u);
    }
    Ok(out)
}

pub fn parse_corpus_str(text: &str) -> Result<Vec<Utterance>, CorpusError> {
    parse_corpus(text.as_bytes())
}

pub fn write_corpus<W: Write>(mut writer: W, corpus: &[Utterance]) -> Result<(), CorpusError> {
    for u in corpus {
        serde_json::to_writer(&mut writer, u).map_err(std::io::Error::other)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_corpus_file(path: &std::path::Path) -> Result<Vec<Utterance>, CorpusError> {
    let f = std::fs::File::open(path)?;
    parse_corpus(std::io::BufReader::new(f))
}

pub fn write_corpus_file(path: &std::path::Path, corpus: &[Utterance]) -> Result<(), CorpusError> {
    let f = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(f);
    write_corpus(&mut w, corpus)?;
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub n_utterances: usize,
    pub avg_tokens_per_utterance: f64,
    pub entity_token_fraction: f64,
    pub avg_pause_per_token_ms: f64,
}

/// Descriptive statistics; every token's pause counts, the final one
/// included.
pub fn corpus_stats(corpus: &[Utterance]) -> Result<CorpusStats, CorpusError> {
    if corpus.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    let tokens = corpus.iter().flat_map(|u| &u.tokens);
    let (mut n_tokens, mut n_entity, mut pause_sum) = (0usize, 0usize, 0.0f64);
    for t in tokens {
        n_tokens += 1;
        n_entity += usize::from(t.tag.is_entity());
        pause_sum += t.pause_after_ms;
    }
    Ok(CorpusStats {
        n_utterances: corpus.len(),
        avg_tokens_per_utterance: n_tokens as f64 / corpus.len() as f64,
        entity_token_fraction: n_entity as f64 / n_tokens as f64,
        avg_pause_per_token_ms: pause_sum / n_tokens as f64,
    })
}
