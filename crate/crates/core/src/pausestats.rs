//! Pause durations around entity boundaries: pair extraction, group
//! summaries, two-sample t-tests, histograms and long-pause frequencies.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;
use thiserror::Error;

use crate::corpus::{Position, Utterance};

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("group {0} is empty")]
    EmptyGroup(String),
    #[error("group {group} needs at least 2 samples, has {n}")]
    TooFew { group: String, n: usize },
    #[error("no samples")]
    NoSamples,
    #[error("invalid histogram spec: {0}")]
    Spec(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// BIO positions of a token and its successor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PairType {
    #[serde(rename = "O-B")]
    OB,
    #[serde(rename = "B-I")]
    BI,
    #[serde(rename = "I-I")]
    II,
    #[serde(rename = "B-O")]
    BO,
    #[serde(rename = "I-O")]
    IO,
}

impl PairType {
    pub const ALL: [PairType; 5] = [PairType::OB, PairType::BI, PairType::II, PairType::BO, PairType::IO];

    pub fn classify(current: Position, next: Position) -> Option<PairType> {
        match (current, next) {
            (Position::O, Position::B) => Some(PairType::OB),
            (Position::B, Position::I) => Some(PairType::BI),
            (Position::I, Position::I) => Some(PairType::II),
            (Position::B, Position::O) => Some(PairType::BO),
            (Position::I, Position::O) => Some(PairType::IO),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PairType::OB => "O-B",
            PairType::BI => "B-I",
            PairType::II => "I-I",
            PairType::BO => "B-O",
            PairType::IO => "I-O",
        }
    }

    pub fn group(self) -> Group {
        match self {
            PairType::OB => Group::Before,
            PairType::BI | PairType::II => Group::Within,
            PairType::BO | PairType::IO => Group::After,
        }
    }
}

impl fmt::Display for PairType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Pooled pair groups: before = O-B, within = B-I ∪ I-I, after = B-O ∪ I-O.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    Before,
    Within,
    After,
}

impl Group {
    pub const ALL: [Group; 3] = [Group::Before, Group::Within, Group::After];

    pub fn as_str(self) -> &'static str {
        match self {
            Group::Before => "before",
            Group::Within => "within",
            Group::After => "after",
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PausePairSample {
    pub pair: PairType,
    pub duration_ms: f64,
    pub domain: String,
}

/// One sample per adjacent token pair whose positions form a [`PairType`];
/// the duration is the pause after the first token.
pub fn extract_pairs(corpus: &[Utterance]) -> Vec<PausePairSample> {
    corpus
        .iter()
        .flat_map(|u| {
            u.tokens.windows(2).filter_map(|w| {
                PairType::classify(w[0].tag.position(), w[1].tag.position()).map(|pair| PausePairSample {
                    pair,
                    duration_ms: w[0].pause_after_ms,
                    domain: u.domain.clone(),
                })
            })
        })
        .collect()
}

pub fn durations(samples: &[PausePairSample], pairs: &[PairType]) -> Vec<f64> {
    samples
        .iter()
        .filter(|s| pairs.contains(&s.pair))
        .map(|s| s.duration_ms)
        .collect()
}

pub fn group_durations(samples: &[PausePairSample], group: Group) -> Vec<f64> {
    samples
        .iter()
        .filter(|s| s.pair.group() == group)
        .map(|s| s.duration_ms)
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub sd: f64,
    pub n: usize,
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample variance (n - 1 denominator).
pub fn sample_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

pub fn summarize(name: &str, xs: &[f64]) -> Result<Summary, StatsError> {
    match xs.len() {
        0 => Err(StatsError::EmptyGroup(name.to_owned())),
        1 => Err(StatsError::TooFew {
            group: name.to_owned(),
            n: 1,
        }),
        n => Ok(Summary {
            mean: mean(xs),
            sd: sample_variance(xs).sqrt(),
            n,
        }),
    }
}

/// Mean, sample SD and count for the before / within / after groups.
pub fn group_summaries(samples: &[PausePairSample]) -> Result<BTreeMap<Group, Summary>, StatsError> {
    Group::ALL
        .iter()
        .map(|&g| summarize(g.as_str(), &group_durations(samples, g)).map(|s| (g, s)))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TTestKind {
    /// Unequal variances, Welch–Satterthwaite degrees of freedom.
    #[default]
    Welch,
    /// Equal variances, pooled estimate.
    Pooled,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    pub t_statistic: f64,
    pub degrees_of_freedom: f64,
    pub p_value: f64,
    pub mean_a: f64,
    pub mean_b: f64,
    pub n_a: usize,
    pub n_b: usize,
}

/// Two-tailed Student-t p-value, `I_{df/(df+t²)}(df/2, 1/2)`.
pub fn two_tailed_p(t: f64, df: f64) -> f64 {
    if t.is_nan() || df.is_nan() {
        return f64::NAN;
    }
    if t.is_infinite() {
        return 0.0;
    }
    let x = df / (df + t * t);
    beta_reg(df / 2.0, 0.5, x).clamp(0.0, 1.0)
}

pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<TTestResult, StatsError> {
    t_test(a, b, TTestKind::Welch)
}

pub fn t_test(a: &[f64], b: &[f64], kind: TTestKind) -> Result<TTestResult, StatsError> {
    for (name, xs) in [("a", a), ("b", b)] {
        if xs.len() < 2 {
            return Err(StatsError::TooFew {
                group: name.to_owned(),
                n: xs.len(),
            });
        }
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (ma, mb) = (mean(a), mean(b));
    let (va, vb) = (sample_variance(a), sample_variance(b));
    let diff = ma - mb;
    let (se2, df) = match kind {
        TTestKind::Welch => {
            let (qa, qb) = (va / na, vb / nb);
            let se2 = qa + qb;
            let df = se2 * se2 / (qa * qa / (na - 1.0) + qb * qb / (nb - 1.0));
            (se2, df)
        }
        TTestKind::Pooled => {
            let df = na + nb - 2.0;
            let sp2 = ((na - 1.0) * va + (nb - 1.0) * vb) / df;
            (sp2 * (1.0 / na + 1.0 / nb), df)
        }
    };
    let (t, df, p) = if se2 == 0.0 {
        // Both samples constant: identical means give no evidence at all.
        if diff == 0.0 {
            (0.0, df.max(0.0), 1.0)
        } else {
            (diff.signum() * f64::INFINITY, df, 0.0)
        }
    } else {
        let t = diff / se2.sqrt();
        (t, df, two_tailed_p(t, df))
    };
    Ok(TTestResult {
        t_statistic: t,
        degrees_of_freedom: if df.is_nan() { 0.0 } else { df },
        p_value: p,
        mean_a: ma,
        mean_b: mb,
        n_a: a.len(),
        n_b: b.len(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramSpec {
    pub bin_width_ms: f64,
    pub clip_sd: f64,
    pub log_normalized: bool,
}

impl Default for HistogramSpec {
    fn default() -> Self {
        HistogramSpec {
            bin_width_ms: 10.0,
            clip_sd: 3.0,
            log_normalized: true,
        }
    }
}

/// Counts per bin of width `bin_width_ms` from 0 up to the largest sample
/// within `mean + clip_sd * sd`; larger samples are dropped. With
/// `log_normalized` each value is `ln(1 + count)`.
pub fn histogram(samples: &[f64], spec: &HistogramSpec) -> Result<Vec<(f64, f64)>, StatsError> {
    if !(spec.bin_width_ms > 0.0 && spec.bin_width_ms.is_finite()) {
        return Err(StatsError::Spec(format!("bin width {}", spec.bin_width_ms)));
    }
    if !(spec.clip_sd > 0.0) {
        return Err(StatsError::Spec(format!("clip sd {}", spec.clip_sd)));
    }
    if samples.is_empty() {
        return Err(StatsError::NoSamples);
    }
    let sd = if samples.len() > 1 {
        sample_variance(samples).sqrt()
    } else {
        0.0
    };
    let bound = mean(samples) + spec.clip_sd * sd;
    let kept: Vec<f64> = samples.iter().copied().filter(|&d| d <= bound).collect();
    let max_bin = kept
        .iter()
        .map(|d| (d / spec.bin_width_ms).floor() as usize)
        .max()
        .unwrap_or(0);
    let mut counts = vec![0usize; max_bin + 1];
    for d in kept {
        counts[(d / spec.bin_width_ms).floor() as usize] += 1;
    }
    Ok(counts
        .into_iter()
        .enumerate()
        .map(|(k, c)| {
            let value = if spec.log_normalized {
                (c as f64).ln_1p()
            } else {
                c as f64
            };
            (k as f64 * spec.bin_width_ms, value)
        })
        .collect())
}

/// Percentage of durations at or above `threshold_ms`.
pub fn long_pause_share(durations: &[f64], threshold_ms: f64) -> Option<f64> {
    if durations.is_empty() {
        return None;
    }
    let long = durations.iter().filter(|&&d| d >= threshold_ms).count();
    Some(100.0 * long as f64 / durations.len() as f64)
}

/// [`long_pause_share`] for each pair type; every type must be present.
pub fn long_pause_frequency(
    samples: &[PausePairSample],
    threshold_ms: f64,
) -> Result<BTreeMap<PairType, f64>, StatsError> {
    PairType::ALL
        .iter()
        .map(|&p| {
            long_pause_share(&durations(samples, &[p]), threshold_ms)
                .map(|v| (p, v))
                .ok_or_else(|| StatsError::EmptyGroup(p.to_string()))
        })
        .collect()
}

/// Everything the `analyze` command reports for one corpus slice.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Analysis {
    pub domain: Option<String>,
    pub summaries: BTreeMap<Group, Summary>,
    pub before_vs_within: TTestResult,
    pub after_vs_within: TTestResult,
    pub long_pause_pct: BTreeMap<PairType, f64>,
    pub histograms: BTreeMap<Group, Vec<(f64, f64)>>,
}

pub fn analyze(
    corpus: &[Utterance],
    domain: Option<&str>,
    spec: &HistogramSpec,
    threshold_ms: f64,
    kind: TTestKind,
) -> Result<Analysis, StatsError> {
    let slice: Vec<Utterance> = corpus
        .iter()
        .filter(|u| domain.is_none_or(|d| u.domain == d))
        .cloned()
        .collect();
    let samples = extract_pairs(&slice);
    let summaries = group_summaries(&samples)?;
    let within = group_durations(&samples, Group::Within);
    let before_vs_within = t_test(&group_durations(&samples, Group::Before), &within, kind)?;
    let after_vs_within = t_test(&group_durations(&samples, Group::After), &within, kind)?;
    let long_pause_pct = PairType::ALL
        .iter()
        .filter_map(|&p| long_pause_share(&durations(&samples, &[p]), threshold_ms).map(|v| (p, v)))
        .collect();
    let histograms = Group::ALL
        .iter()
        .map(|&g| histogram(&group_durations(&samples, g), spec).map(|h| (g, h)))
        .collect::<Result<_, _>>()?;
    Ok(Analysis {
        domain: domain.map(str::to_owned),
        summaries,
        before_vs_within,
        after_vs_within,
        long_pause_pct,
        histograms,
    })
}

impl Analysis {
    /// Writes `summary.tsv`, `ttests.tsv`, `long_pauses.tsv` and one
    /// `hist_<group>.tsv` per group into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), StatsError> {
        fs::create_dir_all(dir)?;
        let mut s = String::from("group\tmean_ms\tsd_ms\tn\n");
        for (g, sum) in &self.summaries {
            s.push_str(&format!("{g}\t{:.4}\t{:.4}\t{}\n", sum.mean, sum.sd, sum.n));
        }
        fs::write(dir.join("summary.tsv"), s)?;
        let mut t = String::from("comparison\tt\tdf\tp\tmean_a\tmean_b\tn_a\tn_b\n");
        for (name, r) in [
            ("before_vs_within", &self.before_vs_within),
            ("after_vs_within", &self.after_vs_within),
        ] {
            t.push_str(&format!(
                "{name}\t{:.6}\t{:.3}\t{:e}\t{:.4}\t{:.4}\t{}\t{}\n",
                r.t_statistic, r.degrees_of_freedom, r.p_value, r.mean_a, r.mean_b, r.n_a, r.n_b
            ));
        }
        fs::write(dir.join("ttests.tsv"), t)?;
        let mut l = String::from("pair\tpercent\n");
        for (p, v) in &self.long_pause_pct {
            l.push_str(&format!("{p}\t{v:.4}\n"));
        }
        fs::write(dir.join("long_pauses.tsv"), l)?;
        for (g, h) in &self.histograms {
            let mut out = String::from("bin_ms\tvalue\n");
            for (bin, v) in h {
                out.push_str(&format!("{bin}\t{v:.6}\n"));
            }
            fs::write(dir.join(format!("hist_{g}.tsv")), out)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{BioTag, Token};

    fn utt(tags: &[&str], pauses: &[f64]) -> Utterance {
        let tokens = tags
            .iter()
            .zip(pauses)
            .enumerate()
            .map(|(i, (t, p))| Token::new(&format!("w{i}"), *p, t.parse::<BioTag>().unwrap()))
            .collect();
        Utterance::new("u", "music", tokens).unwrap()
    }

    fn pairs(u: Utterance) -> Vec<(PairType, f64)> {
        extract_pairs(&[u]).into_iter().map(|s| (s.pair, s.duration_ms)).collect()
    }

    #[test]
    fn extract_examples() {
        let got = pairs(utt(&["O", "B-S", "I-S", "I-S"], &[12.0, 5.0, 8.0, 40.0]));
        assert_eq!(got, vec![(PairType::OB, 12.0), (PairType::BI, 5.0), (PairType::II, 8.0)]);
        assert_eq!(pairs(utt(&["B-S", "O"], &[30.0, 7.0])), vec![(PairType::BO, 30.0)]);
        assert!(pairs(utt(&["O", "O", "O"], &[1.0, 2.0, 3.0])).is_empty());
        assert!(pairs(utt(&["B-S", "B-S"], &[1.0, 2.0])).is_empty());
    }

    #[test]
    fn summaries_need_two_samples() {
        let s = summarize("within", &[10.0, 20.0, 30.0]).unwrap();
        assert_eq!((s.mean, s.sd, s.n), (20.0, 10.0, 3));
        assert!(matches!(summarize("within", &[4.0]), Err(StatsError::TooFew { n: 1, .. })));
        match group_summaries(&extract_pairs(&[utt(&["O", "O"], &[1.0, 1.0])])) {
            Err(StatsError::EmptyGroup(g)) => assert_eq!(g, "before"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn identical_samples_give_t0_p1() {
        let r = welch_t_test(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(r.t_statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
        let c = welch_t_test(&[5.0, 5.0], &[5.0, 5.0]).unwrap();
        assert_eq!((c.t_statistic, c.p_value), (0.0, 1.0));
    }

    #[test]
    fn t_test_needs_two_per_sample() {
        assert!(welch_t_test(&[1.0], &[1.0, 2.0]).is_err());
        assert!(welch_t_test(&[1.0, 2.0], &[]).is_err());
    }

    #[test]
    fn pooled_equals_welch_for_equal_sizes_and_variances() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [3.0, 4.0, 5.0, 6.0];
        let w = t_test(&a, &b, TTestKind::Welch).unwrap();
        let p = t_test(&a, &b, TTestKind::Pooled).unwrap();
        assert!((w.t_statistic - p.t_statistic).abs() < 1e-12);
        assert!((w.degrees_of_freedom - 6.0).abs() < 1e-12);
        assert!((w.p_value - p.p_value).abs() < 1e-12);
    }

    #[test]
    fn histogram_examples() {
        let log = HistogramSpec {
            bin_width_ms: 10.0,
            clip_sd: 3.0,
            log_normalized: true,
        };
        assert_eq!(histogram(&[0.0, 0.0, 0.0], &log).unwrap(), vec![(0.0, 4f64.ln())]);
        let raw = HistogramSpec {
            log_normalized: false,
            ..log
        };
        assert_eq!(histogram(&[5.0, 15.0], &raw).unwrap(), vec![(0.0, 1.0), (10.0, 1.0)]);
        let gap = histogram(&[1.0, 25.0], &log).unwrap();
        assert_eq!(gap[1], (10.0, 0.0));
        assert!(matches!(histogram(&[], &log), Err(StatsError::NoSamples)));
        let bad = HistogramSpec {
            bin_width_ms: 0.0,
            ..log
        };
        assert!(histogram(&[1.0], &bad).is_err());
    }

    #[test]
    fn histogram_drops_beyond_clip_bound() {
        let mut xs = vec![10.0; 50];
        xs.push(10_000.0);
        let raw = HistogramSpec {
            bin_width_ms: 10.0,
            clip_sd: 3.0,
            log_normalized: false,
        };
        let h = histogram(&xs, &raw).unwrap();
        assert_eq!(h.iter().map(|(_, v)| v).sum::<f64>(), 50.0);
    }

    #[test]
    fn long_pause_examples() {
        let v = long_pause_share(&[59.0, 60.0, 61.0], 60.0).unwrap();
        assert!((v - 200.0 / 3.0).abs() < 1e-12);
        assert_eq!(long_pause_share(&[0.0, 0.0], 60.0), Some(0.0));
        assert_eq!(long_pause_share(&[0.0, 3.0], 0.0), Some(100.0));
        assert_eq!(long_pause_share(&[], 60.0), None);
        let samples = extract_pairs(&[utt(&["O", "B-S", "O"], &[70.0, 0.0, 0.0])]);
        assert!(matches!(long_pause_frequency(&samples, 60.0), Err(StatsError::EmptyGroup(_))));
    }
}
