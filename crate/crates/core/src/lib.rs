//! Harness for GUI automation agents: a codec between canonical GUI commands
//! and their conditional natural-language form, prompt assembly from goals,
//! OCR layouts and action history, step-level matching metrics, dataset
//! ingestion, a pluggable agent backend protocol and probe-task generators.

pub mod cap;
pub mod cep;
pub mod config;
pub mod eval;
pub mod gateway;
pub mod ingest;
pub mod model;
pub mod probe;
pub mod synth;
