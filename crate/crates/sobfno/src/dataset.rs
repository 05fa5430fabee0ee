//! Dataset files: both splits of `(u0, target)` pairs plus the sampler and
//! solver settings that produced them.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sobfno_core::burgers::SolverConfig;
use sobfno_core::datagen::{Dataset, SamplerConfig, Sample};
use sobfno_core::spectral::{hs_norm, PeriodicGrid, RealField};

use crate::container::{self, FormatError};

pub const KIND: &str = "dataset";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub sampler: SamplerConfig,
    pub solver: SolverConfig,
    pub grid: usize,
    pub n_train: usize,
    pub n_test: usize,
}

/// Payload order: every train sample then every test sample, each as `u0`
/// followed by `target`.
pub fn save(path: &Path, d: &Dataset) -> Result<(), FormatError> {
    let meta = DatasetMeta {
        sampler: d.sampler,
        solver: d.solver,
        grid: d.grid().len(),
        n_train: d.train.len(),
        n_test: d.test.len(),
    };
    let mut payload = Vec::with_capacity(2 * meta.grid * (meta.n_train + meta.n_test));
    for s in d.train.iter().chain(&d.test) {
        payload.extend_from_slice(s.u0.values());
        payload.extend_from_slice(s.target.values());
    }
    container::write_file(path, KIND, &meta, &payload)
}

pub fn load(path: &Path) -> Result<Dataset, FormatError> {
    let (meta, payload): (DatasetMeta, _) = container::read_kind(path, KIND)?;
    if meta.grid != meta.solver.n {
        return Err(FormatError::Malformed(format!(
            "grid {} disagrees with solver grid {}",
            meta.grid, meta.solver.n
        )));
    }
    let grid = PeriodicGrid::new(meta.grid)?;
    let n = grid.len();
    let count = meta.n_train + meta.n_test;
    if payload.len() != 2 * n * count {
        return Err(FormatError::Malformed(format!(
            "payload holds {} values, expected {}",
            payload.len(),
            2 * n * count
        )));
    }
    let mut samples = payload
        .chunks_exact(2 * n)
        .map(|c| {
            let u0 = RealField::new(grid, c[..n].to_vec())?;
            let target = RealField::new(grid, c[n..].to_vec())?;
            let u0_h1 = hs_norm(&u0, 1.0)?;
            Ok(Sample { u0, target, u0_h1 })
        })
        .collect::<Result<Vec<_>, sobfno_core::Error>>()?;
    let test = samples.split_off(meta.n_train);
    Ok(Dataset {
        sampler: meta.sampler,
        solver: meta.solver,
        train: samples,
        test,
    })
}
