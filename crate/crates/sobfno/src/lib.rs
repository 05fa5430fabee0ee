//! Persistence and command-line pipeline around `sobfno-core`: binary
//! dataset and checkpoint containers, CSV tables, run manifests, config
//! files and the `sobfno` commands.

pub mod checkpoint;
pub mod cli;
pub mod config_file;
pub mod container;
pub mod dataset;
pub mod figures;
pub mod manifest;
pub mod pipeline;
pub mod tables;
