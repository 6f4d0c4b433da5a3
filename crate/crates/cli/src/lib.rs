//! Operational layer around `pluvio-core`: file formats, the ingest
//! gateway, checkpoints, and the subcommands the binary exposes.
//!
//! The split follows deployability: everything in `pluvio-core` is
//! `no_std` numeric/codec logic that could run on a constrained device,
//! while this crate owns the parts that assume an operating system —
//! CSV and JSON files, the HTTP server, the filesystem store, processes
//! and exit codes.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod dataio;
pub mod fixture;
pub mod gateway;
