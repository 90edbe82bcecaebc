#![allow(dead_code)]

pub mod crf_oracle;
pub mod fixtures;
pub mod gradcheck;
pub mod tiny;
pub mod welch_fixtures;
