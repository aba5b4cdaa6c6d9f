//! Command-line front end: flag and config resolution, run orchestration and
//! artifact output.

pub mod args;
pub mod manifest;
pub mod run;

pub use args::{parse_args, ArgsError, InitKind, RunConfig};
pub use manifest::RunManifest;
pub use run::{run, RunOutcome, StageError, OUTPUT_FILES};
