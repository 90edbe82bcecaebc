//! A miniature experiment configuration that runs in seconds.

use std::path::Path;

use pausetag::encoder::Mode;
use pausetag::experiment::ExperimentConfig;
use pausetag::generator::GeneratorConfig;

pub fn tiny_experiment(out_dir: &Path, seeds: &[u64], modes: &[Mode], domains: &[&str]) -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        seeds: seeds.to_vec(),
        modes: modes.to_vec(),
        domains: domains.iter().map(|d| d.to_string()).collect(),
        generator: GeneratorConfig::french_default(3, 400),
        parser_train_limit: Some(30),
        parser_dev_limit: Some(20),
        out_dir: out_dir.to_path_buf(),
        ..ExperimentConfig::default()
    };
    cfg.encoder.epochs = 1;
    cfg.encoder.max_vocab = 300;
    cfg.encoder.model.hidden = 16;
    cfg.encoder.model.ffn_hidden = 32;
    cfg.encoder.model.layers = 1;
    cfg.tagger.hidden = 8;
    cfg.tagger.max_epochs = 2;
    cfg
}
