use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use pausetag::corpus::{read_corpus_file, write_corpus_file};
use pausetag::encoder::{pretrain, EncoderModel, Mode, PretrainConfig};
use pausetag::experiment::{run_experiment, ExperimentConfig};
use pausetag::generator::{generate, split, GeneratorConfig};
use pausetag::metrics::{compare, evaluate, parse_predictions, write_predictions, EvalOptions, EvalReport};
use pausetag::numcore::DType;
use pausetag::pausestats::{analyze, HistogramSpec, TTestKind};
use pausetag::report::{render_comparison, render_corpus_table};
use pausetag::tagger::{tag_corpus, train_tagger, TaggerConfig, TaggerModel};

#[derive(Parser)]
#[command(name = "pausetag", version, about = "Pause analysis, pause-grounded embeddings and shallow parsing")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Seed overriding the one in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TOML configuration for the subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for outputs.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Worker threads. Training is single-threaded; values above 1 are
    /// accepted but ignored.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus.
    Generate {
        #[arg(long, default_value_t = 5000)]
        n: usize,
        /// Output corpus (default: <out-dir>/corpus.jsonl).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write train/dev/test files with these fractions.
        #[arg(long, num_args = 3, value_names = ["TRAIN", "DEV", "TEST"])]
        split: Option<Vec<f64>>,
    },
    /// Pause statistics around entity spans.
    Analyze {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        domain: Option<String>,
        #[arg(long, default_value_t = 10.0)]
        bin_width: f64,
        #[arg(long, default_value_t = 60.0)]
        threshold: f64,
        /// Use the pooled-variance t-test instead of Welch's.
        #[arg(long)]
        pooled: bool,
    },
    /// Pretrain an encoder.
    Pretrain {
        #[arg(long)]
        mode: Mode,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Delimited loss log (default: <out>.losses.tsv).
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long)]
        f32: bool,
    },
    /// Train the shallow parser on frozen embeddings.
    TrainParser {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        dev: PathBuf,
        #[arg(long)]
        encoder: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Tag a corpus.
    Tag {
        #[arg(long)]
        encoder: PathBuf,
        #[arg(long)]
        parser: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score predictions against a gold corpus.
    Evaluate {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        ter_entities_only: bool,
        #[arg(long)]
        span_f1: bool,
    },
    /// Relative error changes of variant reports against a baseline.
    Compare {
        #[arg(long)]
        baseline: PathBuf,
        #[arg(long, required = true, num_args = 1..)]
        variant: Vec<PathBuf>,
        #[arg(long)]
        domain: Option<String>,
        /// Text table; a `.tsv` sibling is written next to it.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the full seeds x modes x domains experiment.
    RunExperiment,
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn out_path(global: &Global, explicit: Option<PathBuf>, default_name: &str) -> PathBuf {
    explicit.unwrap_or_else(|| global.out_dir.clone().unwrap_or_default().join(default_name))
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    ensure_parent(path)?;
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load_report(path: &Path) -> Result<EvalReport> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    EvalReport::from_json(&text).with_context(|| format!("parsing {}", path.display()))
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    if g.threads == 0 {
        bail!("--threads must be at least 1");
    }
    if g.threads > 1 {
        log::warn!("[setup] training is single-threaded; --threads {} ignored", g.threads);
    }
    match cli.command {
        Command::Generate { n, out, split: fractions } => {
            let mut cfg = match &g.config {
                Some(p) => GeneratorConfig::from_toml(&read_text(p)?)?,
                None => GeneratorConfig::french_default(0, n),
            };
            if g.config.is_none() {
                cfg.n_utterances = n;
            }
            if let Some(s) = g.seed {
                cfg.seed = s;
            }
            let corpus = generate(&cfg)?;
            let out = out_path(g, out, "corpus.jsonl");
            ensure_parent(&out)?;
            write_corpus_file(&out, &corpus)?;
            log::info!("[generate] {} utterances -> {}", corpus.len(), out.display());
            if let Some(f) = fractions {
                let (train, dev, test) = split(&corpus, (f[0], f[1], f[2]), cfg.seed)?;
                for (name, part) in [("train", &train), ("dev", &dev), ("test", &test)] {
                    let p = out.with_file_name(format!("{name}.jsonl"));
                    write_corpus_file(&p, part)?;
                    log::info!("[generate] {name}: {} utterances -> {}", part.len(), p.display());
                }
            }
        }
        Command::Analyze {
            corpus,
            domain,
            bin_width,
            threshold,
            pooled,
        } => {
            let corpus = read_corpus_file(&corpus)?;
            let spec = HistogramSpec {
                bin_width_ms: bin_width,
                ..HistogramSpec::default()
            };
            let kind = if pooled { TTestKind::Pooled } else { TTestKind::Welch };
            let a = analyze(&corpus, domain.as_deref(), &spec, threshold, kind)?;
            let dir = g.out_dir.clone().unwrap_or_else(|| PathBuf::from("analysis"));
            a.write(&dir)?;
            println!(
                "before vs within: t = {:.4}, df = {:.2}, p = {:.3e}",
                a.before_vs_within.t_statistic, a.before_vs_within.degrees_of_freedom, a.before_vs_within.p_value
            );
            println!(
                "after vs within:  t = {:.4}, df = {:.2}, p = {:.3e}",
                a.after_vs_within.t_statistic, a.after_vs_within.degrees_of_freedom, a.after_vs_within.p_value
            );
            log::info!("[analyze] tables written to {}", dir.display());
        }
        Command::Pretrain {
            mode,
            corpus,
            out,
            log: log_path,
            f32,
        } => {
            let mut cfg = match &g.config {
                Some(p) => PretrainConfig::from_toml(&read_text(p)?)?,
                None => PretrainConfig::default(),
            };
            cfg.mode = mode;
            if let Some(s) = g.seed {
                cfg.seed = s;
            }
            let corpus = read_corpus_file(&corpus)?;
            let (model, report) = pretrain(&corpus, &cfg)?;
            ensure_parent(&out)?;
            model.save(&out, if f32 { DType::F32 } else { DType::F64 })?;
            let log_path = log_path.unwrap_or_else(|| out.with_extension("losses.tsv"));
            let fresh = !log_path.exists();
            ensure_parent(&log_path)?;
            let mut f = fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(&log_path)
                .with_context(|| format!("opening {}", log_path.display()))?;
            if fresh {
                writeln!(f, "mode\tseed\tepoch\tl_bert\tl_aux\tlambda\ttotal")?;
            }
            for e in &report.epochs {
                writeln!(f, "{mode}\t{}\t{}\t{}\t{}\t{}\t{}", cfg.seed, e.epoch, e.bert, e.aux, cfg.lambda, e.total)?;
            }
            log::info!("[pretrain] {} steps, checkpoint -> {}", report.steps, out.display());
        }
        Command::TrainParser {
            corpus,
            dev,
            encoder,
            out,
        } => {
            let mut cfg = match &g.config {
                Some(p) => TaggerConfig::from_toml(&read_text(p)?)?,
                None => TaggerConfig::default(),
            };
            if let Some(s) = g.seed {
                cfg.seed = s;
            }
            let train = read_corpus_file(&corpus)?;
            let dev = read_corpus_file(&dev)?;
            let encoder = EncoderModel::load(&encoder)?;
            let (model, report) = train_tagger(&train, &dev, &encoder, &cfg)?;
            ensure_parent(&out)?;
            model.save(&out, DType::F64)?;
            log::info!(
                "[train-parser] best dev EER {:.4} at epoch {}, checkpoint -> {}",
                report.best_dev_eer,
                report.best_epoch,
                out.display()
            );
        }
        Command::Tag {
            encoder,
            parser,
            corpus,
            out,
        } => {
            let encoder = EncoderModel::load(&encoder)?;
            let parser = TaggerModel::load(&parser)?;
            let corpus = read_corpus_file(&corpus)?;
            let preds = tag_corpus(&parser, &encoder, &corpus)?;
            ensure_parent(&out)?;
            let f = fs::File::create(&out).with_context(|| format!("creating {}", out.display()))?;
            write_predictions(BufWriter::new(f), &preds)?;
            log::info!("[tag] {} utterances -> {}", preds.len(), out.display());
        }
        Command::Evaluate {
            gold,
            pred,
            out,
            ter_entities_only,
            span_f1,
        } => {
            let gold = read_corpus_file(&gold)?;
            let f = fs::File::open(&pred).with_context(|| format!("opening {}", pred.display()))?;
            let preds = parse_predictions(BufReader::new(f))?;
            let report = evaluate(
                &gold,
                &preds,
                EvalOptions {
                    ter_entities_only,
                    span_f1,
                },
            )?;
            println!("EER {:.4}  TER {:.4}  UER {:.4}", report.eer, report.ter, report.uer);
            if let Some(out) = out {
                write_text(&out, &report.to_json())?;
            }
        }
        Command::Compare {
            baseline,
            variant,
            domain,
            out,
        } => {
            let base = load_report(&baseline)?;
            let domain = domain.or_else(|| base.domain.clone()).unwrap_or_default();
            let variants = variant
                .iter()
                .map(|p| {
                    let r = load_report(p)?;
                    let name = r
                        .model
                        .clone()
                        .unwrap_or_else(|| p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default());
                    Ok((name, r))
                })
                .collect::<Result<Vec<_>>>()?;
            let rows = compare(&base, &variants, &domain);
            let table = render_comparison(&rows);
            print!("{}", table.text);
            if let Some(out) = out {
                write_text(&out, &table.text)?;
                write_text(&out.with_extension("tsv"), &table.tsv)?;
            }
        }
        Command::RunExperiment => {
            let mut cfg = match &g.config {
                Some(p) => ExperimentConfig::from_toml(&read_text(p)?)?,
                None => ExperimentConfig::default(),
            };
            if let Some(d) = &g.out_dir {
                cfg.out_dir = d.clone();
            }
            if let Some(s) = g.seed {
                cfg.seeds = vec![s];
            }
            let report = run_experiment(&cfg)?;
            let stats: Vec<_> = report.corpus_stats.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
            let t1 = render_corpus_table(&stats);
            let t2 = render_comparison(&report.comparison);
            let dir = cfg.run_dir();
            write_text(&dir.join("table1.txt"), &t1.text)?;
            write_text(&dir.join("table1.tsv"), &t1.tsv)?;
            write_text(&dir.join("table2.txt"), &t2.text)?;
            write_text(&dir.join("table2.tsv"), &t2.tsv)?;
            print!("{}\n{}", t1.text, t2.text);
            let failed = report.failures().count();
            if failed > 0 {
                bail!("{failed} experiment cells failed; see {}", dir.join("experiment.json").display());
            }
        }
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .format_target(false)
        .init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
