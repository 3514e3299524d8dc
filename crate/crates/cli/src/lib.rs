//! Library side of the `conflasso` binary: CSV ingestion, argument types
//! and one function per subcommand.

pub mod args;
pub mod commands;
pub mod error;
pub mod ingest;
pub mod standardize;

pub use error::{CliError, CliResult};
pub use ingest::{ingest_csv, read_matrix, IngestError};
