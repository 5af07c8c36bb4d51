//! Command-line pipeline around `plaincode-core`: analysis, recording, test generation
//! and round-trip verification of programs written in the `mj` host language.

pub mod config;
pub mod corpus;
pub mod pipeline;
pub mod plandb;
pub mod roundtrip;

pub use config::Config;
pub use plandb::PlanDb;
