//! GGUF container IO, model conversion, row-parallel kernels and the
//! throughput bench harness on top of `kquant-core`.

pub mod gguf;
pub mod inventory;
pub mod mixfile;
pub mod parallel;
pub mod convert;
pub mod bench;
pub mod results;
pub mod config;
pub mod cli;
