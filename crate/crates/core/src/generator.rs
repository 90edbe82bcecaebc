//! Synthetic pause-annotated corpora with controllable pause statistics.
//!
//! Each utterance is a carrier template with one entity slot filled from
//! the domain lexicon. The pause after each token is drawn from a
//! zero-inflated log-normal law whose mean depends on the BIO transition
//! to the next token.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{BioTag, Token, Utterance};
use crate::seeding;

/// Longest pause any generated token may carry.
pub const MAX_PAUSE_MS: f64 = 10_000.0;

/// Placeholder token marking the entity slot in a carrier template.
pub const SLOT: &str = "{}";

#[derive(Debug, Error)]
pub enum GeneratorError {
    #[error("domain {domain:?}: {message}")]
    Config { domain: String, message: String },
    #[error("no domain profiles configured")]
    NoDomains,
    #[error("split fractions must be positive and sum to 1, got {0:?}")]
    Fractions((f64, f64, f64)),
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

fn default_zero_prob() -> f64 {
    0.5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainProfile {
    pub name: String,
    pub entity_type: String,
    /// Whitespace-separated entity names.
    pub entity_lexicon: Vec<String>,
    /// Whitespace-separated patterns containing exactly one `{}` token.
    pub carrier_templates: Vec<String>,
    /// Mean pause (zeros included) before an entity and after its last token.
    pub boundary_pause_mean_ms: f64,
    /// Mean pause (zeros included) between tokens of one entity.
    pub within_pause_mean_ms: f64,
    /// Mean pause after an entity's last token; defaults to the boundary mean.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub after_pause_mean_ms: Option<f64>,
    /// Mean pause between non-entity tokens and after the final token;
    /// defaults to the within-entity mean.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outside_pause_mean_ms: Option<f64>,
    #[serde(default = "default_zero_prob")]
    pub zero_pause_prob: f64,
    /// Standard deviation of the non-zero pause component.
    pub noise_sd_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub n_utterances: usize,
    pub domain_profiles: Vec<DomainProfile>,
}

impl DomainProfile {
    fn err(&self, message: impl Into<String>) -> GeneratorError {
        GeneratorError::Config {
            domain: self.name.clone(),
            message: message.into(),
        }
    }

    pub fn validate(&self) -> Result<(), GeneratorError> {
        if self.entity_lexicon.is_empty() {
            return Err(self.err("entity lexicon is empty"));
        }
        if self.carrier_templates.is_empty() {
            return Err(self.err("no carrier templates"));
        }
        if self.entity_type.is_empty() || self.entity_type.chars().any(char::is_whitespace) {
            return Err(self.err("entity type must be a non-empty word"));
        }
        if let Some(name) = self
            .entity_lexicon
            .iter()
            .find(|n| n.split_whitespace().next().is_none() || n.split_whitespace().any(|w| w == SLOT))
        {
            return Err(self.err(format!("bad lexicon entry {name:?}")));
        }
        for t in &self.carrier_templates {
            let slots = t.split_whitespace().filter(|w| *w == SLOT).count();
            if slots != 1 {
                return Err(self.err(format!("template {t:?} must contain exactly one {SLOT} slot")));
            }
        }
        let means = [
            self.boundary_pause_mean_ms,
            self.within_pause_mean_ms,
            self.after_mean(),
            self.outside_mean(),
            self.noise_sd_ms,
        ];
        if means.iter().any(|m| !m.is_finite() || *m < 0.0) {
            return Err(self.err("pause means and noise sd must be finite and non-negative"));
        }
        if self.boundary_pause_mean_ms <= self.within_pause_mean_ms {
            return Err(self.err("boundary pause mean must exceed within-entity mean"));
        }
        if !(0.0..=1.0).contains(&self.zero_pause_prob) {
            return Err(self.err("zero_pause_prob must lie in [0, 1]"));
        }
        Ok(())
    }

    fn after_mean(&self) -> f64 {
        self.after_pause_mean_ms.unwrap_or(self.boundary_pause_mean_ms)
    }

    fn outside_mean(&self) -> f64 {
        self.outside_pause_mean_ms.unwrap_or(self.within_pause_mean_ms)
    }

    /// Draws one pause whose zero-inflated mean is `mean`.
    fn draw_pause<R: Rng + ?Sized>(&self, mean: f64, rng: &mut R) -> f64 {
        let p0 = self.zero_pause_prob;
        if rng.random::<f64>() < p0 || p0 >= 1.0 || mean <= 0.0 {
            return 0.0;
        }
        let positive_mean = mean / (1.0 - p0);
        let sd = self.noise_sd_ms.max(1e-9);
        let sigma2 = (1.0 + (sd / positive_mean).powi(2)).ln();
        let mu = positive_mean.ln() - sigma2 / 2.0;
        let law = LogNormal::new(mu, sigma2.sqrt()).expect("finite parameters");
        law.sample(rng).clamp(0.0, MAX_PAUSE_MS)
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<(), GeneratorError> {
        if self.domain_profiles.is_empty() {
            return Err(GeneratorError::NoDomains);
        }
        self.domain_profiles.iter().try_for_each(DomainProfile::validate)
    }

    pub fn from_toml(text: &str) -> Result<Self, GeneratorError> {
        let cfg: GeneratorConfig = toml::from_str(text).map_err(|e| GeneratorError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config is always representable")
    }

    pub fn load(path: &Path) -> Result<Self, GeneratorError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// Three domains (music, movies, sports) with the French pause means
    /// reported for entity boundaries: 55.04 ms before, 18.17 ms within and
    /// 63.86 ms after. Entity spans average 1.6, 2.5 and 1.25 tokens.
    pub fn french_default(seed: u64, n_utterances: usize) -> Self {
        let profile = |name: &str, ty: &str, lexicon: Vec<String>, templates: &[&str]| DomainProfile {
            name: name.into(),
            entity_type: ty.into(),
            entity_lexicon: lexicon,
            carrier_templates: templates.iter().map(|s| s.to_string()).collect(),
            boundary_pause_mean_ms: 55.04,
            within_pause_mean_ms: 18.17,
            after_pause_mean_ms: Some(63.86),
            outside_pause_mean_ms: Some(18.17),
            zero_pause_prob: 0.5,
            noise_sd_ms: 60.0,
        };
        GeneratorConfig {
            seed,
            n_utterances,
            domain_profiles: vec![
                profile(
                    "music",
                    "Song",
                    music_lexicon(),
                    &[
                        "play {}",
                        "play {} next",
                        "play me {}",
                        "put on {} tonight",
                        "i want to hear {} now",
                        "play the song {}",
                        "{} please",
                        "can you play {} for me",
                    ],
                ),
                profile(
                    "movies",
                    "MovieTitle",
                    movie_lexicon(),
                    &[
                        "watch {}",
                        "show me {}",
                        "play the movie {}",
                        "is {} on tonight",
                        "find {} for me",
                        "i want to watch {} now",
                        "play {} next",
                    ],
                ),
                profile(
                    "sports",
                    "Team",
                    sports_lexicon(),
                    &[
                        "how did the {} do",
                        "score of the {} game",
                        "when do the {} play next",
                        "{} score",
                        "did the {} win last night",
                        "show me the {} game",
                    ],
                ),
            ],
        }
    }
}

const NOUNS: &[&str] = &[
    "love", "night", "city", "star", "dream", "heart", "fire", "rain", "road", "light", "time", "river", "home",
    "sky", "stone", "king", "girl", "boy", "summer", "moon", "game", "song", "world", "water", "heaven", "angel",
    "money", "story", "ocean", "thunder",
];
const MODIFIERS: &[&str] = &[
    "blue", "dark", "wild", "golden", "lost", "last", "little", "broken", "sweet", "silent", "red", "lonely",
    "next", "new", "old", "crazy", "secret", "high",
];
const TAILS: &[&str] = &["tonight", "now", "me", "you", "again", "forever"];
const TEAM_WORDS: &[&str] = &[
    "lions", "tigers", "bears", "kings", "stars", "rangers", "united", "rovers", "giants", "sharks", "hawks",
    "wolves", "eagles", "saints", "bulls", "jets",
];
const CITIES: &[&str] = &["boston", "paris", "lyon", "madrid", "milan", "denver", "chicago", "nice"];

fn pick<'a>(pool: &[&'a str], i: usize, stride: usize) -> &'a str {
    pool[(i * stride + i / pool.len()) % pool.len()]
}

fn dedup(mut names: Vec<String>) -> Vec<String> {
    let mut seen = std::collections::HashSet::new();
    names.retain(|n| seen.insert(n.clone()));
    names
}

fn music_lexicon() -> Vec<String> {
    dedup(
        (0..150)
            .map(|i| match i % 5 {
                0 | 1 => pick(NOUNS, i, 7).to_string(),
                2 => format!("{} {}", pick(MODIFIERS, i, 5), pick(NOUNS, i, 11)),
                3 => format!("{} {}", pick(NOUNS, i, 13), pick(TAILS, i, 1)),
                _ => format!("my {}", pick(NOUNS, i, 17)),
            })
            .collect(),
    )
}

fn movie_lexicon() -> Vec<String> {
    dedup(
        (0..160)
            .map(|i| match i % 4 {
                0 => format!("the {} {}", pick(MODIFIERS, i, 7), pick(NOUNS, i, 3)),
                1 => format!("{} {}", pick(MODIFIERS, i, 5), pick(NOUNS, i, 13)),
                2 => format!("the {}", pick(NOUNS, i, 11)),
                _ => format!("{} {} {}", pick(MODIFIERS, i, 11), pick(NOUNS, i, 7), pick(TAILS, i, 1)),
            })
            .collect(),
    )
}

fn sports_lexicon() -> Vec<String> {
    let mut names: Vec<String> = TEAM_WORDS.iter().map(|s| s.to_string()).collect();
    names.extend(CITIES.iter().map(|s| s.to_string()));
    names.extend(
        (0..8).map(|i| format!("{} {}", CITIES[i % CITIES.len()], TEAM_WORDS[(i * 5) % TEAM_WORDS.len()])),
    );
    dedup(names)
}

/// Transition class between a token and its successor, for pause drawing.
fn pause_mean(profile: &DomainProfile, tag: &BioTag, next: Option<&BioTag>) -> f64 {
    match (tag.is_entity(), next.map(BioTag::position)) {
        (_, None) => profile.outside_mean(),
        (false, Some(crate::corpus::Position::B)) => profile.boundary_pause_mean_ms,
        (false, _) => profile.outside_mean(),
        (true, Some(crate::corpus::Position::I)) => profile.within_pause_mean_ms,
        (true, _) => profile.after_mean(),
    }
}

/// Generates `n_utterances` utterances, cycling through the domain
/// profiles in order. Utterance `i` draws from its own random stream, so
/// the output is a pure function of the config.
pub fn generate(config: &GeneratorConfig) -> Result<Vec<Utterance>, GeneratorError> {
    config.validate()?;
    let n_domains = config.domain_profiles.len();
    (0..config.n_utterances)
        .map(|i| {
            let profile = &config.domain_profiles[i % n_domains];
            let mut rng = seeding::stream(config.seed, "generate", i as u64);
            Ok(generate_one(profile, &format!("{}-{i:06}", profile.name), &mut rng))
        })
        .collect()
}

fn generate_one<R: Rng + ?Sized>(profile: &DomainProfile, id: &str, rng: &mut R) -> Utterance {
    let template = &profile.carrier_templates[rng.random_range(0..profile.carrier_templates.len())];
    let entity = &profile.entity_lexicon[rng.random_range(0..profile.entity_lexicon.len())];
    let mut words: Vec<(&str, BioTag)> = Vec::new();
    for w in template.split_whitespace() {
        if w == SLOT {
            for (k, e) in entity.split_whitespace().enumerate() {
                let tag = if k == 0 {
                    BioTag::begin(&profile.entity_type)
                } else {
                    BioTag::inside(&profile.entity_type)
                };
                words.push((e, tag));
            }
        } else {
            words.push((w, BioTag::outside()));
        }
    }
    let tokens = (0..words.len())
        .map(|k| {
            let next = words.get(k + 1).map(|(_, t)| t);
            let mean = pause_mean(profile, &words[k].1, next);
            let pause = profile.draw_pause(mean, rng);
            Token::new(words[k].0, pause, words[k].1.clone())
        })
        .collect();
    Utterance::new(id, &profile.name, tokens).expect("generated utterances are BIO-valid")
}

/// Part sizes for `n` items: floor each share, then hand the remainder out
/// one at a time by largest fractional part (ties go to the earlier part).
pub fn split_sizes(n: usize, fractions: (f64, f64, f64)) -> Result<[usize; 3], GeneratorError> {
    let f = [fractions.0, fractions.1, fractions.2];
    if f.iter().any(|v| !v.is_finite() || *v <= 0.0) || (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(GeneratorError::Fractions(fractions));
    }
    let exact: Vec<f64> = f.iter().map(|v| v * n as f64).collect();
    let mut sizes = [0usize; 3];
    for (s, e) in sizes.iter_mut().zip(&exact) {
        *s = e.floor() as usize;
    }
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.partial_cmp(&fa).expect("finite").then(a.cmp(&b))
    });
    let mut remainder = n - sizes.iter().sum::<usize>();
    for &k in order.iter().cycle() {
        if remainder == 0 {
            break;
        }
        sizes[k] += 1;
        remainder -= 1;
    }
    Ok(sizes)
}

/// Shuffles with `seed` and cuts into train/dev/test by [`split_sizes`].
pub fn split(
    corpus: &[Utterance],
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<(Vec<Utterance>, Vec<Utterance>, Vec<Utterance>), GeneratorError> {
    let [a, b, _] = split_sizes(corpus.len(), fractions)?;
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    order.shuffle(&mut seeding::stream(seed, "split", 0));
    let take = |idx: &[usize]| idx.iter().map(|&i| corpus[i].clone()).collect::<Vec<_>>();
    Ok((take(&order[..a]), take(&order[a..a + b]), take(&order[a + b..])))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{entity_spans, Position};

    #[test]
    fn zero_utterances_is_empty() {
        assert!(generate(&GeneratorConfig::french_default(1, 0)).unwrap().is_empty());
    }

    #[test]
    fn same_seed_same_corpus() {
        let cfg = GeneratorConfig::french_default(11, 300);
        assert_eq!(generate(&cfg).unwrap(), generate(&cfg).unwrap());
        let other = GeneratorConfig::french_default(12, 300);
        assert_ne!(generate(&cfg).unwrap(), generate(&other).unwrap());
    }

    #[test]
    fn empty_lexicon_is_config_error() {
        let mut cfg = GeneratorConfig::french_default(1, 10);
        cfg.domain_profiles[0].entity_lexicon.clear();
        assert!(matches!(generate(&cfg), Err(GeneratorError::Config { .. })));
        let mut cfg = GeneratorConfig::french_default(1, 10);
        cfg.domain_profiles[1].carrier_templates = vec!["no slot here".into()];
        assert!(generate(&cfg).is_err());
        let mut cfg = GeneratorConfig::french_default(1, 10);
        cfg.domain_profiles[2].within_pause_mean_ms = 80.0;
        assert!(generate(&cfg).is_err());
    }

    #[test]
    fn default_span_lengths_follow_domain_profiles() {
        let corpus = generate(&GeneratorConfig::french_default(3, 3000)).unwrap();
        let mean_len = |domain: &str| {
            let spans: Vec<_> = corpus
                .iter()
                .filter(|u| u.domain == domain)
                .flat_map(entity_spans)
                .collect();
            spans.iter().map(|s| (s.end - s.start + 1) as f64).sum::<f64>() / spans.len() as f64
        };
        let (music, movies, sports) = (mean_len("music"), mean_len("movies"), mean_len("sports"));
        assert!((movies - 2.5).abs() < 0.2, "movies {movies}");
        assert!((sports - 1.25).abs() < 0.2, "sports {sports}");
        assert!(movies > music && music > sports, "{music} {movies} {sports}");
    }

    #[test]
    fn pauses_are_bounded_and_zero_inflated() {
        let corpus = generate(&GeneratorConfig::french_default(5, 2000)).unwrap();
        let pauses: Vec<f64> = corpus.iter().flat_map(|u| u.tokens.iter().map(|t| t.pause_after_ms)).collect();
        assert!(pauses.iter().all(|p| (0.0..=MAX_PAUSE_MS).contains(p)));
        let zeros = pauses.iter().filter(|p| **p == 0.0).count() as f64 / pauses.len() as f64;
        assert!((zeros - 0.5).abs() < 0.03, "{zeros}");
        assert!(corpus.iter().all(|u| u.validate().is_ok()));
        assert!(corpus.iter().all(|u| u.tokens.iter().any(|t| t.tag.position() == Position::B)));
    }

    #[test]
    fn config_toml_round_trip() {
        let cfg = GeneratorConfig::french_default(9, 42);
        assert_eq!(GeneratorConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn split_sizes_rule() {
        assert_eq!(split_sizes(100, (0.8, 0.1, 0.1)).unwrap(), [80, 10, 10]);
        // floors 5/2/2, remainder to the earlier of the tied .5 parts
        assert_eq!(split_sizes(10, (0.5, 0.25, 0.25)).unwrap(), [5, 3, 2]);
        assert!(split_sizes(10, (0.5, 0.5, 0.5)).is_err());
        assert!(split_sizes(10, (1.0, 0.0, 0.0)).is_err());
    }

    #[test]
    fn split_is_deterministic_partition() {
        let corpus = generate(&GeneratorConfig::french_default(2, 100)).unwrap();
        let (a, b, c) = split(&corpus, (0.8, 0.1, 0.1), 4).unwrap();
        assert_eq!((a.len(), b.len(), c.len()), (80, 10, 10));
        assert_eq!(split(&corpus, (0.8, 0.1, 0.1), 4).unwrap(), (a.clone(), b.clone(), c.clone()));
        let mut ids: Vec<&str> = a.iter().chain(&b).chain(&c).map(|u| u.id.as_str()).collect();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), 100);
    }
}
