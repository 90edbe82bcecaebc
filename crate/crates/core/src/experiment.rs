//! Reproducible experiment runner: generate a corpus, pretrain one encoder
//! per (seed, mode), train and evaluate one parser per (seed, mode, domain),
//! then aggregate over seeds.
//!
//! Artifacts live under `out_dir/<config hash>/`; every path is a function of
//! the hash and the cell coordinates, and finished stages are skipped when
//! their artifact exists.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{corpus_stats, read_corpus_file, write_corpus_file, CorpusStats, Utterance};
use crate::encoder::{pretrain, EncoderModel, Mode, PretrainConfig};
use crate::generator::{generate, split, GeneratorConfig};
use crate::metrics::{compare, evaluate, write_predictions, ComparisonRow, Counts, EvalOptions, EvalReport};
use crate::numcore::DType;
use crate::pausestats::{analyze, HistogramSpec, TTestKind};
use crate::tagger::{tag_corpus, train_tagger, TaggerConfig, TaggerModel};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("{stage}: {message}")]
    Stage { stage: String, message: String },
    #[error("i/o on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn stage_err(stage: &str, e: impl std::fmt::Display) -> ExperimentError {
    ExperimentError::Stage {
        stage: stage.to_owned(),
        message: e.to_string(),
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.to_owned(),
        source,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seeds: Vec<u64>,
    pub modes: Vec<Mode>,
    /// Domains to parse; each must name a generator profile.
    pub domains: Vec<String>,
    /// Train/dev/test fractions.
    pub split: (f64, f64, f64),
    pub split_seed: u64,
    /// Labelled utterances per domain for the parser (all when unset).
    pub parser_train_limit: Option<usize>,
    pub parser_dev_limit: Option<usize>,
    pub generator: GeneratorConfig,
    /// `seed` and `mode` are replaced per cell.
    pub encoder: PretrainConfig,
    /// `seed` is replaced per cell.
    pub tagger: TaggerConfig,
    pub eval: EvalOptions,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let mut encoder = PretrainConfig {
            epochs: 8,
            batch_size: 16,
            ..PretrainConfig::default()
        };
        encoder.model.hidden = 32;
        encoder.model.ffn_hidden = 64;
        encoder.model.heads = 2;
        encoder.model.max_len = 16;
        let tagger = TaggerConfig {
            hidden: 32,
            max_epochs: 50,
            ..TaggerConfig::default()
        };
        ExperimentConfig {
            seeds: (0..10).collect(),
            modes: Mode::ALL.to_vec(),
            domains: vec!["music".into(), "movies".into(), "sports".into()],
            split: (0.7, 0.1, 0.2),
            split_seed: 0,
            parser_train_limit: Some(60),
            parser_dev_limit: Some(150),
            generator: GeneratorConfig::french_default(0, 5000),
            encoder,
            tagger,
            eval: EvalOptions::default(),
            out_dir: PathBuf::from("runs"),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::Config(m));
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        if self.modes.is_empty() {
            return bad("at least one mode is required".into());
        }
        if self.modes.len() > 1 && !self.modes.contains(&Mode::Baseline) {
            return bad("comparing modes requires the baseline".into());
        }
        if self.domains.is_empty() {
            return bad("at least one domain is required".into());
        }
        self.generator.validate().map_err(|e| ExperimentError::Config(e.to_string()))?;
        for d in &self.domains {
            if !self.generator.domain_profiles.iter().any(|p| &p.name == d) {
                return bad(format!("domain {d:?} has no generator profile"));
            }
        }
        self.encoder.validate().map_err(|e| ExperimentError::Config(e.to_string()))?;
        self.tagger.validate().map_err(|e| ExperimentError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self, ExperimentError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// First 16 hex digits of the SHA-256 of the config (output directory
    /// excluded) in canonical JSON form.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir = PathBuf::new();
        let json = serde_json::to_string(&c).expect("config serialises");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn run_dir(&self) -> PathBuf {
        self.out_dir.join(self.hash())
    }

    pub fn encoder_path(&self, seed: u64, mode: Mode) -> PathBuf {
        self.run_dir().join("encoders").join(format!("{mode}-s{seed}.ptck"))
    }

    pub fn cell_dir(&self, seed: u64, mode: Mode, domain: &str) -> PathBuf {
        self.run_dir().join("cells").join(mode.as_str()).join(domain).join(format!("s{seed}"))
    }
}

/// Outcome of one (seed, mode, domain) cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub seed: u64,
    pub mode: Mode,
    pub domain: String,
    pub report: Option<EvalReport>,
    pub error: Option<String>,
}

/// Mean rates over the seeds that completed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanRow {
    pub mode: Mode,
    pub domain: String,
    pub runs: usize,
    pub eer: f64,
    pub ter: f64,
    pub uer: f64,
}

impl MeanRow {
    pub fn as_report(&self) -> EvalReport {
        EvalReport {
            model: Some(self.mode.to_string()),
            domain: Some(self.domain.clone()),
            eer: self.eer,
            ter: self.ter,
            uer: self.uer,
            counts: Counts::default(),
            spans: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config_hash: String,
    pub corpus_stats: BTreeMap<String, CorpusStats>,
    pub cells: Vec<CellResult>,
    pub means: Vec<MeanRow>,
    pub comparison: Vec<ComparisonRow>,
}

impl ExperimentReport {
    pub fn mean(&self, mode: Mode, domain: &str) -> Option<&MeanRow> {
        self.means.iter().find(|m| m.mode == mode && m.domain == domain)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CellResult> {
        self.cells.iter().filter(|c| c.error.is_some())
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ExperimentError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let text = serde_json::to_string_pretty(value).expect("serialisable");
    fs::write(path, text).map_err(io_err(path))
}

/// Loads the split corpora from the run directory, generating them first
/// when absent.
fn prepare_data(cfg: &ExperimentConfig) -> Result<[Vec<Utterance>; 3], ExperimentError> {
    let dir = cfg.run_dir().join("data");
    let paths = ["train", "dev", "test"].map(|s| dir.join(format!("{s}.jsonl")));
    if paths.iter().all(|p| p.exists()) {
        let mut out: [Vec<Utterance>; 3] = Default::default();
        for (slot, p) in out.iter_mut().zip(&paths) {
            *slot = read_corpus_file(p).map_err(|e| stage_err("data", e))?;
        }
        return Ok(out);
    }
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let corpus = generate(&cfg.generator).map_err(|e| stage_err("generate", e))?;
    let (train, dev, test) = split(&corpus, cfg.split, cfg.split_seed).map_err(|e| stage_err("split", e))?;
    for (p, part) in paths.iter().zip([&train, &dev, &test]) {
        write_corpus_file(p, part).map_err(|e| stage_err("data", e))?;
    }
    Ok([train, dev, test])
}

fn domain_slice(corpus: &[Utterance], domain: &str, limit: Option<usize>) -> Vec<Utterance> {
    corpus
        .iter()
        .filter(|u| u.domain == domain)
        .take(limit.unwrap_or(usize::MAX))
        .cloned()
        .collect()
}

/// Pretrains (or loads) the encoder for one (seed, mode).
pub fn encoder_stage(cfg: &ExperimentConfig, train: &[Utterance], seed: u64, mode: Mode) -> Result<EncoderModel, ExperimentError> {
    let path = cfg.encoder_path(seed, mode);
    if path.exists() {
        log::info!("[pretrain] reuse {}", path.display());
        return EncoderModel::load(&path).map_err(|e| stage_err("pretrain", e));
    }
    let pcfg = PretrainConfig {
        seed,
        mode,
        ..cfg.encoder.clone()
    };
    log::info!("[pretrain] mode {mode} seed {seed} on {} utterances", train.len());
    let (model, report) = pretrain(train, &pcfg).map_err(|e| stage_err("pretrain", e))?;
    write_json(&path.with_extension("losses.json"), &report)?;
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    model.save(&path, DType::F64).map_err(|e| stage_err("pretrain", e))?;
    Ok(model)
}

/// Trains, tags and evaluates one cell, reusing its artifacts when present.
pub fn cell_stage(
    cfg: &ExperimentConfig,
    encoder: &EncoderModel,
    data: &[Vec<Utterance>; 3],
    seed: u64,
    mode: Mode,
    domain: &str,
) -> Result<EvalReport, ExperimentError> {
    let dir = cfg.cell_dir(seed, mode, domain);
    let report_path = dir.join("report.json");
    if report_path.exists() {
        let text = fs::read_to_string(&report_path).map_err(io_err(&report_path))?;
        return EvalReport::from_json(&text).map_err(|e| stage_err("evaluate", e));
    }
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let train = domain_slice(&data[0], domain, cfg.parser_train_limit);
    let dev = domain_slice(&data[1], domain, cfg.parser_dev_limit);
    let test = domain_slice(&data[2], domain, None);
    let parser_path = dir.join("parser.ptck");
    let parser = if parser_path.exists() {
        TaggerModel::load(&parser_path).map_err(|e| stage_err("train-parser", e))?
    } else {
        let tcfg = TaggerConfig {
            seed,
            ..cfg.tagger.clone()
        };
        let (parser, report) = train_tagger(&train, &dev, encoder, &tcfg).map_err(|e| stage_err("train-parser", e))?;
        write_json(&dir.join("parser_training.json"), &report)?;
        parser.save(&parser_path, DType::F64).map_err(|e| stage_err("train-parser", e))?;
        parser
    };
    let preds = tag_corpus(&parser, encoder, &test).map_err(|e| stage_err("tag", e))?;
    let pred_path = dir.join("predictions.jsonl");
    let file = fs::File::create(&pred_path).map_err(io_err(&pred_path))?;
    write_predictions(std::io::BufWriter::new(file), &preds).map_err(|e| stage_err("tag", e))?;
    let mut report = evaluate(&test, &preds, cfg.eval).map_err(|e| stage_err("evaluate", e))?;
    report.model = Some(mode.to_string());
    report.domain = Some(domain.to_owned());
    write_json(&report_path, &report)?;
    Ok(report)
}

pub fn aggregate(cfg: &ExperimentConfig, cells: &[CellResult]) -> (Vec<MeanRow>, Vec<ComparisonRow>) {
    let mut means = Vec::new();
    for &mode in &cfg.modes {
        for domain in &cfg.domains {
            let done: Vec<&EvalReport> = cells
                .iter()
                .filter(|c| c.mode == mode && &c.domain == domain)
                .filter_map(|c| c.report.as_ref())
                .collect();
            if done.is_empty() {
                continue;
            }
            let n = done.len() as f64;
            means.push(MeanRow {
                mode,
                domain: domain.clone(),
                runs: done.len(),
                eer: done.iter().map(|r| r.eer).sum::<f64>() / n,
                ter: done.iter().map(|r| r.ter).sum::<f64>() / n,
                uer: done.iter().map(|r| r.uer).sum::<f64>() / n,
            });
        }
    }
    let mut comparison = Vec::new();
    for domain in &cfg.domains {
        let Some(base) = means.iter().find(|m| m.mode == Mode::Baseline && &m.domain == domain) else {
            continue;
        };
        let variants: Vec<(String, EvalReport)> = means
            .iter()
            .filter(|m| m.mode != Mode::Baseline && &m.domain == domain)
            .map(|m| (m.mode.as_str().to_uppercase(), m.as_report()))
            .collect();
        comparison.extend(compare(&base.as_report(), &variants, domain));
    }
    (means, comparison)
}

/// Runs every cell. Stage failures are recorded per cell and do not stop
/// the remaining cells.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport, ExperimentError> {
    cfg.validate()?;
    let run_dir = cfg.run_dir();
    fs::create_dir_all(&run_dir).map_err(io_err(&run_dir))?;
    fs::write(run_dir.join("config.toml"), cfg.to_toml()).map_err(io_err(&run_dir))?;
    let data = prepare_data(cfg)?;

    let mut corpus_stats_by_domain = BTreeMap::new();
    let all: Vec<Utterance> = data.iter().flatten().cloned().collect();
    for domain in &cfg.domains {
        let slice = domain_slice(&all, domain, None);
        if let Ok(s) = corpus_stats(&slice) {
            corpus_stats_by_domain.insert(domain.clone(), s);
        }
        match analyze(&all, Some(domain), &HistogramSpec::default(), 60.0, TTestKind::Welch) {
            Ok(a) => {
                let dir = run_dir.join("analysis").join(domain);
                if let Err(e) = a.write(&dir) {
                    log::warn!("[analyze] {domain}: {e}");
                }
            }
            Err(e) => log::warn!("[analyze] {domain}: {e}"),
        }
    }

    let mut cells = Vec::new();
    for &seed in &cfg.seeds {
        for &mode in &cfg.modes {
            let encoder = encoder_stage(cfg, &data[0], seed, mode);
            for domain in &cfg.domains {
                let outcome = encoder
                    .as_ref()
                    .map_err(|e| e.to_string())
                    .and_then(|enc| cell_stage(cfg, enc, &data, seed, mode, domain).map_err(|e| e.to_string()));
                match &outcome {
                    Ok(r) => log::info!("[cell] {mode} {domain} s{seed}: EER {:.4} TER {:.4} UER {:.4}", r.eer, r.ter, r.uer),
                    Err(e) => log::error!("[cell] {mode} {domain} s{seed} failed: {e}"),
                }
                cells.push(CellResult {
                    seed,
                    mode,
                    domain: domain.clone(),
                    report: outcome.as_ref().ok().cloned(),
                    error: outcome.err(),
                });
            }
        }
    }
    let (means, comparison) = aggregate(cfg, &cells);
    let report = ExperimentReport {
        config_hash: cfg.hash(),
        corpus_stats: corpus_stats_by_domain,
        cells,
        means,
        comparison,
    };
    write_json(&run_dir.join("experiment.json"), &report)?;
    Ok(report)
}
