//! Data loading, run configuration, result records and command execution
//! behind the `gscatter` binary.

pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod record;
pub mod run;

pub use config::RunConfig;
pub use data::{load_csv, Centering};
pub use error::{CliError, CliResult};
pub use record::ResultRecord;
pub use run::{run, Context, SEED_ENV};
