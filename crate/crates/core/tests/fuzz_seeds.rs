//! Replays the checked-in fuzz seeds through the same entry points as the
//! fuzz targets, so the seeds stay meaningful as the formats evolve.

use std::fs;
use std::path::PathBuf;

use pausetag::corpus::{parse_record, BioTag};
use pausetag::encoder::{EncoderModel, PretrainConfig};
use pausetag::experiment::ExperimentConfig;
use pausetag::generator::GeneratorConfig;
use pausetag::metrics::{parse_predictions, EvalReport};
use pausetag::numcore::Checkpoint;
use pausetag::tagger::{TaggerConfig, TaggerModel};

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<_> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

fn text(b: &[u8]) -> &str {
    std::str::from_utf8(b).unwrap()
}

#[test]
fn corpus_line_seeds() {
    for (name, b) in seeds("corpus_line") {
        let r = parse_record(text(&b).trim_end()).and_then(|u| u.validate().map(|_| u));
        assert_eq!(r.is_ok(), name != "bio_violation", "{name}: {r:?}");
    }
}

#[test]
fn bio_tag_seeds() {
    for (name, b) in seeds("bio_tag") {
        assert_eq!(text(&b).parse::<BioTag>().is_ok(), name != "bad", "{name}");
    }
}

#[test]
fn config_seeds() {
    for (name, b) in seeds("generator_config") {
        let r = GeneratorConfig::from_toml(text(&b)).and_then(|c| c.validate());
        assert_eq!(r.is_ok(), name != "missing_seed", "{name}");
    }
    for (_, b) in seeds("experiment_config") {
        ExperimentConfig::from_toml(text(&b)).unwrap().validate().unwrap();
    }
    for (_, b) in seeds("pretrain_config") {
        PretrainConfig::from_toml(text(&b)).unwrap().validate().unwrap();
    }
    for (_, b) in seeds("tagger_config") {
        TaggerConfig::from_toml(text(&b)).unwrap().validate().unwrap();
    }
}

#[test]
fn checkpoint_seeds() {
    for (name, b) in seeds("checkpoint") {
        let ckpt = Checkpoint::decode(&b).unwrap();
        let enc = EncoderModel::from_checkpoint(&ckpt);
        let tag = TaggerModel::from_checkpoint(&ckpt);
        assert_eq!(enc.is_ok(), name.starts_with("encoder"), "{name}");
        assert_eq!(tag.is_ok(), name.starts_with("tagger"), "{name}");
    }
}

#[test]
fn report_and_prediction_seeds() {
    for (name, b) in seeds("eval_report") {
        assert_eq!(EvalReport::from_json(text(&b)).is_ok(), name != "out_of_range", "{name}");
    }
    for (name, b) in seeds("prediction_line") {
        assert_eq!(parse_predictions(&b[..]).is_ok(), name != "bad_label", "{name}");
    }
}
