//! Pause-duration analysis around entity spans, pause-grounded contextual
//! embeddings, and a BiLSTM-CRF shallow parser that consumes them.

pub mod corpus;
pub mod numcore;
pub mod generator;
pub mod seeding;
pub mod pausestats;
pub mod metrics;
pub mod encoder;
pub mod tagger;
pub mod experiment;
pub mod report;
