//! Benchmark programs and tooling for recording, replaying and inspecting
//! polyrr traces.

pub mod bench;
pub mod digest;
pub mod json;

pub use bench::{execute, Benchmark, Execution, Observed, Outcome, Params, ParamsError};
pub use digest::digest;
