//! Command-line entry point, configuration loading, and durable text
//! archives for snapshot blocks, GOOF datasets, classifier banks, and
//! result tables.
//!
//! Archives are line-oriented text with a validated `GOOF1` header; reals
//! are stored with 17 significant digits so every round trip is bit-exact.
//! Configuration files are flat `key = value` documents whose keys mirror
//! the experiment configuration's field paths.

pub mod archive;
pub mod cli;
pub mod config;

pub use archive::{
    load_archive, load_banks, load_goof, load_results, load_snapshots, save_archive,
    ArchivePayload, PersistError, ARCHIVE_MAGIC, ARCHIVE_VERSION,
};
pub use cli::run;
pub use config::{apply_override, load_config, parse_config_text};
