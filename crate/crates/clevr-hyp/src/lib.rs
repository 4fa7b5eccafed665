//! Symbolic engine for mental-simulation QA over scene graphs: a typed
//! functional DSL, its executor, template-based text generation, dataset
//! generation with validity filtering and answer balancing, and an
//! evaluation harness.

pub mod dataset;
pub mod eval;
pub mod executor;
pub mod generator;
pub mod nlg;
pub mod program;
pub mod scene;
