//! Numerical core for learning the 1-D viscous Burgers solution operator
//! `u0 -> u(., 1)` with a Fourier neural operator trained under a discrete
//! H1 loss.
//!
//! Everything here is `no_std` + `alloc` and free of IO: grids and spectral
//! tools, the pseudospectral solver with its Cole–Hopf oracle, initial
//! condition sampling, the FNO with hand-written reverse mode, Adam training
//! and power-law fitting. File formats and the command line live in the
//! `sobfno` crate.

#![cfg_attr(not(test), no_std)]

#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

mod error;
mod regression;

pub mod burgers;
pub mod datagen;
pub mod fft;
pub mod fno;
pub mod rng;
pub mod spectral;
pub mod scaling;
pub mod train;

pub use error::{Error, Result};
