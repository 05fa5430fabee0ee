//! Random initial conditions in a bounded H1-ball and paired
//! `(u0, u(., t_final))` datasets.

use alloc::boxed::Box;
use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::burgers::{BurgersSolver, SolverConfig};
use crate::error::{Error, Result};
use crate::rng::{keyed_rng, Domain};
use crate::spectral::{hs_norm, PeriodicGrid, RealField};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SamplerConfig {
    /// H1-ball radius.
    pub radius: f64,
    /// Highest excited wavenumber.
    pub k_max: usize,
    /// Coefficient standard deviation decays like `k^-decay`.
    pub decay: f64,
    pub zero_mean: bool,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            radius: 0.3,
            k_max: 8,
            decay: 2.0,
            zero_mean: true,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self, grid: PeriodicGrid) -> Result<()> {
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::InvalidArgument(format!("radius must be positive, got {}", self.radius)));
        }
        if !(self.decay > 0.0 && self.decay.is_finite()) {
            return Err(Error::InvalidArgument(format!("decay must be positive, got {}", self.decay)));
        }
        if self.k_max == 0 || self.k_max > grid.len() / 3 {
            return Err(Error::InvalidArgument(format!(
                "k_max must lie in 1..={} for a {}-point grid, got {}",
                grid.len() / 3,
                grid.len(),
                self.k_max
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Split {
    Train,
    Test,
}

impl Split {
    fn domain(self) -> Domain {
        match self {
            Split::Train => Domain::TrainSamples,
            Split::Test => Domain::TestSamples,
        }
    }
}

/// Draws `f = sum_k a_k cos(2 pi k x) + b_k sin(2 pi k x)` with
/// `a_k, b_k ~ N(0, k^(-2 decay))`, then rescales it so that
/// `||f||_H1 = r R` with `r ~ U[0.5, 1]`. The draw depends only on
/// `(cfg.seed, split, index)`.
pub fn sample_initial_condition(
    cfg: &SamplerConfig,
    grid: PeriodicGrid,
    split: Split,
    index: u64,
) -> Result<RealField> {
    cfg.validate(grid)?;
    let mut rng = keyed_rng(cfg.seed, split.domain(), index);
    loop {
        let mut cos_amp = Vec::with_capacity(cfg.k_max);
        let mut sin_amp = Vec::with_capacity(cfg.k_max);
        for k in 1..=cfg.k_max {
            let sd = libm::pow(k as f64, -cfg.decay);
            let normal = Normal::new(0.0, sd).expect("positive standard deviation");
            cos_amp.push(normal.sample(&mut rng));
            sin_amp.push(normal.sample(&mut rng));
        }
        let offset = if cfg.zero_mean {
            0.0
        } else {
            Normal::new(0.0, 1.0).expect("unit normal").sample(&mut rng)
        };
        let shape = RealField::from_fn(grid, |x| {
            let mut v = offset;
            for (i, (a, b)) in cos_amp.iter().zip(&sin_amp).enumerate() {
                let arg = 2.0 * PI * (i + 1) as f64 * x;
                v += a * libm::cos(arg) + b * libm::sin(arg);
            }
            v
        })?;
        let norm = hs_norm(&shape, 1.0)?;
        let target = rng.random_range(0.5..=1.0) * cfg.radius;
        if norm > 0.0 {
            let scale = target / norm;
            let values = shape.into_values().into_iter().map(|v| v * scale).collect();
            return RealField::new(grid, values);
        }
    }
}

/// One `(u0, u(., t_final))` pair with the H1 norm of its initial condition.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub u0: RealField,
    pub target: RealField,
    pub u0_h1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub sampler: SamplerConfig,
    pub solver: SolverConfig,
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
}

impl Dataset {
    pub fn grid(&self) -> PeriodicGrid {
        PeriodicGrid::new(self.solver.n).expect("dataset built from a validated solver config")
    }

    pub fn split(&self, split: Split) -> &[Sample] {
        match split {
            Split::Train => &self.train,
            Split::Test => &self.test,
        }
    }

    /// Solves Burgers for caller-supplied initial conditions.
    pub fn from_initial_conditions(
        sampler: SamplerConfig,
        solver: SolverConfig,
        train: Vec<RealField>,
        test: Vec<RealField>,
    ) -> Result<Self> {
        let burgers = BurgersSolver::new(solver)?;
        let mut index = 0;
        let mut run = |fields: Vec<RealField>| -> Result<Vec<Sample>> {
            fields
                .into_iter()
                .map(|u0| {
                    let i = index;
                    index += 1;
                    make_sample(&burgers, u0, i)
                })
                .collect()
        };
        let train = run(train)?;
        let test = run(test)?;
        Ok(Self {
            sampler,
            solver,
            train,
            test,
        })
    }
}

fn make_sample(burgers: &BurgersSolver, u0: RealField, index: usize) -> Result<Sample> {
    let wrap = |e: Error| Error::SampleFailed {
        index,
        source: Box::new(e),
    };
    let target = burgers.solve(&u0).map_err(wrap)?;
    let u0_h1 = hs_norm(&u0, 1.0)?;
    Ok(Sample { u0, target, u0_h1 })
}

/// Samples `n_train + n_test` initial conditions and propagates each to
/// `solver.t_final`. Sample indices in errors count train samples first.
pub fn build_dataset(sampler: &SamplerConfig, solver: &SolverConfig, n_train: usize, n_test: usize) -> Result<Dataset> {
    let burgers = BurgersSolver::new(*solver)?;
    let grid = burgers.grid();
    sampler.validate(grid)?;
    let mut train = Vec::with_capacity(n_train);
    for i in 0..n_train {
        let u0 = sample_initial_condition(sampler, grid, Split::Train, i as u64)?;
        train.push(make_sample(&burgers, u0, i)?);
    }
    let mut test = Vec::with_capacity(n_test);
    for i in 0..n_test {
        let u0 = sample_initial_condition(sampler, grid, Split::Test, i as u64)?;
        test.push(make_sample(&burgers, u0, n_train + i)?);
    }
    Ok(Dataset {
        sampler: *sampler,
        solver: *solver,
        train,
        test,
    })
}
