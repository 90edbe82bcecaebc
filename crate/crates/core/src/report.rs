//! Text and tab-delimited rendering of corpus statistics and relative error
//! changes.

use std::fmt::Write as _;

use crate::corpus::CorpusStats;
use crate::metrics::{ComparisonRow, Metric};

const METRICS: [Metric; 3] = [Metric::Eer, Metric::Ter, Metric::Uer];

/// Rendered table in two forms.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rendered {
    pub text: String,
    pub tsv: String,
}

fn group_thousands(n: usize) -> String {
    let digits = n.to_string();
    let mut out = String::new();
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(c);
    }
    out
}

/// Signed percentage with two decimals, e.g. `-2.94%`.
pub fn format_delta(value: Option<f64>) -> String {
    match value {
        Some(v) if v.is_finite() => {
            let v = if v == 0.0 { 0.0 } else { v };
            format!("{v:+.2}%")
        }
        _ => "N/A".to_owned(),
    }
}

/// The first `left` columns are left-aligned, the rest right-aligned.
fn pad_table(rows: &[Vec<String>], left: usize) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| rows.iter().filter_map(|r| r.get(c)).map(|s| s.chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, row) in rows.iter().enumerate() {
        let line: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(c, s)| {
                if c < left {
                    format!("{s:<w$}", w = widths[c])
                } else {
                    format!("{s:>w$}", w = widths[c])
                }
            })
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
        if i == 0 {
            let total = widths.iter().sum::<usize>() + 2 * widths.len().saturating_sub(1);
            out.push_str(&"-".repeat(total));
            out.push('\n');
        }
    }
    out
}

/// Corpus overview, one column per named corpus.
pub fn render_corpus_table(columns: &[(String, CorpusStats)]) -> Rendered {
    let mut rows = vec![std::iter::once("Measure".to_owned())
        .chain(columns.iter().map(|(n, _)| n.clone()))
        .collect::<Vec<_>>()];
    let measures: [(&str, fn(&CorpusStats) -> String); 4] = [
        ("Number of utterances", |s| group_thousands(s.n_utterances)),
        ("Average # tokens in an utterance", |s| format!("{:.2}", s.avg_tokens_per_utterance)),
        ("% of tokens that are entities", |s| format!("{:.2}%", 100.0 * s.entity_token_fraction)),
        ("Average pause duration per token", |s| format!("{:.2}ms", s.avg_pause_per_token_ms)),
    ];
    let mut tsv = String::from("measure");
    for (n, _) in columns {
        let _ = write!(tsv, "\t{n}");
    }
    tsv.push('\n');
    let keys = ["n_utterances", "avg_tokens_per_utterance", "entity_token_fraction", "avg_pause_per_token_ms"];
    for ((label, f), key) in measures.iter().zip(keys) {
        rows.push(std::iter::once(label.to_string()).chain(columns.iter().map(|(_, s)| f(s))).collect());
        tsv.push_str(key);
        for (_, s) in columns {
            let v = match key {
                "n_utterances" => s.n_utterances as f64,
                "avg_tokens_per_utterance" => s.avg_tokens_per_utterance,
                "entity_token_fraction" => s.entity_token_fraction,
                _ => s.avg_pause_per_token_ms,
            };
            let _ = write!(tsv, "\t{v}");
        }
        tsv.push('\n');
    }
    Rendered {
        text: pad_table(&rows, 1),
        tsv,
    }
}

/// For each row and metric, whether it holds the lowest change among rows
/// of the same domain. Ties are all flagged; missing values never are.
pub fn best_flags(rows: &[ComparisonRow]) -> Vec<[bool; 3]> {
    rows.iter()
        .map(|row| {
            let mut flags = [false; 3];
            for (f, m) in flags.iter_mut().zip(METRICS) {
                let Some(v) = row.delta(m) else { continue };
                let best = rows
                    .iter()
                    .filter(|r| r.domain == row.domain)
                    .filter_map(|r| r.delta(m))
                    .fold(f64::INFINITY, f64::min);
                *f = v == best;
            }
            flags
        })
        .collect()
}

/// Relative-change table: models in order of first appearance, each with
/// its domains; best values per (domain, metric) wrapped in `**`.
pub fn render_comparison(rows: &[ComparisonRow]) -> Rendered {
    let flags = best_flags(rows);
    let mut models: Vec<&str> = Vec::new();
    for r in rows {
        if !models.contains(&r.model.as_str()) {
            models.push(&r.model);
        }
    }
    let mut table = vec![["Model", "Domain", "EER", "TER", "UER"].map(String::from).to_vec()];
    let mut tsv = String::from("model\tdomain\tdelta_eer\tdelta_ter\tdelta_uer\tbest\n");
    for model in models {
        let mut first = true;
        for (row, f) in rows.iter().zip(&flags).filter(|(r, _)| r.model == model) {
            let mut line = vec![if first { model.to_owned() } else { String::new() }, row.domain.clone()];
            first = false;
            let mut best = Vec::new();
            for (m, flag) in METRICS.iter().zip(f) {
                let cell = format_delta(row.delta(*m));
                line.push(if *flag { format!("**{cell}**") } else { cell });
                if *flag {
                    best.push(m.as_str().to_ascii_lowercase());
                }
            }
            table.push(line);
            let num = |m: Metric| row.delta(m).map_or("NA".to_owned(), |v| v.to_string());
            let _ = writeln!(
                tsv,
                "{model}\t{}\t{}\t{}\t{}\t{}",
                row.domain,
                num(Metric::Eer),
                num(Metric::Ter),
                num(Metric::Uer),
                best.join(",")
            );
        }
    }
    Rendered {
        text: pad_table(&table, 2),
        tsv,
    }
}
