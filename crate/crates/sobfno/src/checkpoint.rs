//! Parameter checkpoints. The payload is the flat parameter vector; complex
//! spectral weights are stored as interleaved `(re, im)` pairs.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sobfno_core::fno::{FnoConfig, FnoParams};

use crate::container::{self, FormatError};

pub const KIND: &str = "checkpoint";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub config: FnoConfig,
    pub epoch: usize,
    /// `init`, `final`, `best` or `periodic`.
    pub tag: String,
}

pub fn save(path: &Path, params: &FnoParams, epoch: usize, tag: &str) -> Result<(), FormatError> {
    let meta = CheckpointMeta {
        config: *params.config(),
        epoch,
        tag: tag.into(),
    };
    container::write_file(path, KIND, &meta, params.as_slice())
}

pub fn load(path: &Path) -> Result<(FnoParams, CheckpointMeta), FormatError> {
    let (meta, payload): (CheckpointMeta, _) = container::read_kind(path, KIND)?;
    let params = FnoParams::from_vec(&meta.config, payload)?;
    Ok((params, meta))
}
