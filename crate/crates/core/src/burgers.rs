//! Pseudospectral integration of `u_t + u u_x = nu u_xx` on the unit torus.
//!
//! Integrating-factor RK4: diffusion is propagated exactly by
//! `exp(-nu (2 pi k)^2 t)`, the conservative nonlinearity `-(1/2) d/dx (u^2)`
//! is stepped with classical RK4, with optional 2/3-rule dealiasing.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft::RealFft;
use crate::spectral::{forward_transform, PeriodicGrid, RealField, SpectralField};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SolverConfig {
    pub nu: f64,
    pub t_final: f64,
    pub dt: f64,
    pub dealias: bool,
    pub n: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            nu: 0.01,
            t_final: 1.0,
            dt: 1e-3,
            dealias: true,
            n: 256,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<PeriodicGrid> {
        let grid = PeriodicGrid::new(self.n)?;
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!("{name} must be positive and finite, got {v}")))
            }
        };
        positive("nu", self.nu)?;
        positive("t_final", self.t_final)?;
        positive("dt", self.dt)?;
        if self.dt > self.t_final {
            return Err(Error::InvalidArgument(format!(
                "dt = {} exceeds t_final = {}",
                self.dt, self.t_final
            )));
        }
        Ok(grid)
    }
}

/// Parameters of the exact solution `u = -2 nu phi_x / phi` with
/// `phi = a + b exp(-4 pi^2 nu t) cos(2 pi x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColeHopfParams {
    a: f64,
    b: f64,
    nu: f64,
}

impl ColeHopfParams {
    /// Requires `a > |b|` so `phi` stays positive, and `nu > 0`.
    pub fn new(a: f64, b: f64, nu: f64) -> Result<Self> {
        if !(a > b.abs()) {
            return Err(Error::InvalidArgument(format!("need a > |b|, got a = {a}, b = {b}")));
        }
        if !(nu > 0.0) {
            return Err(Error::InvalidArgument(format!("nu must be positive, got {nu}")));
        }
        Ok(Self { a, b, nu })
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn field(&self, grid: PeriodicGrid, t: f64) -> RealField {
        RealField::from_fn(grid, |x| cole_hopf_exact(self, x, t))
            .expect("Cole-Hopf solution is finite for a > |b|")
    }
}

pub fn cole_hopf_exact(p: &ColeHopfParams, x: f64, t: f64) -> f64 {
    let decay = p.b * libm::exp(-4.0 * PI * PI * p.nu * t);
    let arg = 2.0 * PI * x;
    4.0 * PI * p.nu * decay * libm::sin(arg) / (p.a + decay * libm::cos(arg))
}

/// Reusable stepping state for one grid and viscosity.
#[derive(Debug, Clone)]
pub struct BurgersSolver {
    grid: PeriodicGrid,
    cfg: SolverConfig,
    fft: RealFft,
    /// highest wavenumber fed into the quadratic product
    cutoff: usize,
}

struct Workspace {
    phys: Vec<f64>,
    spec: Vec<Complex64>,
    k: [Vec<Complex64>; 4],
    stage: Vec<Complex64>,
}

impl BurgersSolver {
    pub fn new(cfg: SolverConfig) -> Result<Self> {
        let grid = cfg.validate()?;
        let cutoff = if cfg.dealias { (cfg.n - 1) / 3 } else { grid.nyquist() };
        Ok(Self {
            grid,
            cfg,
            fft: grid.fft(),
            cutoff,
        })
    }

    pub fn grid(&self) -> PeriodicGrid {
        self.grid
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    fn workspace(&self) -> Workspace {
        let m = self.grid.spectrum_len();
        let z = Complex64::new(0.0, 0.0);
        Workspace {
            phys: vec![0.0; self.grid.len()],
            spec: vec![z; m],
            k: [vec![z; m], vec![z; m], vec![z; m], vec![z; m]],
            stage: vec![z; m],
        }
    }

    /// `out = -(1/2) d/dx (u^2)` in spectral space.
    fn nonlinear(&self, uhat: &[Complex64], out: &mut [Complex64], phys: &mut [f64], spec: &mut [Complex64]) {
        let h = self.grid.nyquist();
        spec.copy_from_slice(uhat);
        for c in spec.iter_mut().skip(self.cutoff + 1) {
            *c = Complex64::new(0.0, 0.0);
        }
        self.fft.inverse(spec, phys);
        for v in phys.iter_mut() {
            *v *= *v;
        }
        self.fft.forward(phys, out);
        for (k, c) in out.iter_mut().enumerate() {
            if k > self.cutoff || k == h {
                *c = Complex64::new(0.0, 0.0);
            } else {
                // -(1/2) * (2 pi i k) * c
                *c = Complex64::new(PI * k as f64 * c.im, -PI * k as f64 * c.re);
            }
        }
    }

    /// Advances `uhat` (starting at time `t0`) by `duration` with the
    /// smallest uniform step count whose step does not exceed `cfg.dt`.
    fn advance(&self, uhat: &mut [Complex64], t0: f64, duration: f64, ws: &mut Workspace) -> Result<()> {
        if duration <= 0.0 {
            return Ok(());
        }
        let steps = libm::ceil(duration / self.cfg.dt - 1e-9).max(1.0) as usize;
        let dt = duration / steps as f64;
        let lin: Vec<f64> = (0..self.grid.spectrum_len())
            .map(|k| {
                let w = 2.0 * PI * k as f64;
                -self.cfg.nu * w * w
            })
            .collect();
        let e_full: Vec<f64> = lin.iter().map(|l| libm::exp(l * dt)).collect();
        let e_half: Vec<f64> = lin.iter().map(|l| libm::exp(l * dt * 0.5)).collect();
        let Workspace { phys, spec, k, stage } = ws;
        let [k1, k2, k3, k4] = k;
        for step in 0..steps {
            self.nonlinear(uhat, k1, phys, spec);
            for i in 0..uhat.len() {
                stage[i] = e_half[i] * (uhat[i] + k1[i] * (0.5 * dt));
            }
            self.nonlinear(stage, k2, phys, spec);
            for i in 0..uhat.len() {
                stage[i] = e_half[i] * uhat[i] + k2[i] * (0.5 * dt);
            }
            self.nonlinear(stage, k3, phys, spec);
            for i in 0..uhat.len() {
                stage[i] = e_full[i] * uhat[i] + e_half[i] * k3[i] * dt;
            }
            self.nonlinear(stage, k4, phys, spec);
            let mut finite = true;
            for i in 0..uhat.len() {
                let incr = e_full[i] * k1[i] + 2.0 * e_half[i] * (k2[i] + k3[i]) + k4[i];
                uhat[i] = e_full[i] * uhat[i] + incr * (dt / 6.0);
                finite &= uhat[i].re.is_finite() && uhat[i].im.is_finite();
            }
            if !finite {
                return Err(Error::BlowUp {
                    time: t0 + (step + 1) as f64 * dt,
                });
            }
        }
        Ok(())
    }

    fn check_input(&self, u0: &RealField) -> Result<()> {
        if u0.grid() != self.grid {
            return Err(Error::GridMismatch(self.grid.len(), u0.grid().len()));
        }
        Ok(())
    }

    /// `u(., t_final)` from `u0`.
    pub fn solve(&self, u0: &RealField) -> Result<RealField> {
        self.check_input(u0)?;
        let mut uhat = forward_transform(u0).into_coeffs();
        let mut ws = self.workspace();
        self.advance(&mut uhat, 0.0, self.cfg.t_final, &mut ws)?;
        self.to_field(&uhat)
    }

    fn to_field(&self, uhat: &[Complex64]) -> Result<RealField> {
        let mut values = vec![0.0; self.grid.len()];
        self.fft.inverse(uhat, &mut values);
        RealField::new(self.grid, values)
    }

    /// Solution snapshots at each time in `times` (increasing, within
    /// `[0, t_final]`).
    pub fn snapshots(&self, u0: &RealField, times: &[f64]) -> Result<Vec<RealField>> {
        self.check_input(u0)?;
        if times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument("checkpoint times must be strictly increasing".into()));
        }
        if times.iter().any(|&t| !(0.0..=self.cfg.t_final).contains(&t)) {
            return Err(Error::InvalidArgument("checkpoint times must lie in [0, t_final]".into()));
        }
        let mut uhat = forward_transform(u0).into_coeffs();
        let mut ws = self.workspace();
        let mut t = 0.0;
        let mut out = Vec::with_capacity(times.len());
        for &target in times {
            self.advance(&mut uhat, t, target - t, &mut ws)?;
            t = target;
            out.push(self.to_field(&uhat)?);
        }
        Ok(out)
    }
}

pub fn solve(u0: &RealField, cfg: &SolverConfig) -> Result<RealField> {
    BurgersSolver::new(*cfg)?.solve(u0)
}

/// Mean and energy `(1/2) ||u||^2` logged at checkpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct ConservationReport {
    pub times: Vec<f64>,
    pub means: Vec<f64>,
    pub energies: Vec<f64>,
}

impl ConservationReport {
    /// Largest `|mean(t) - mean(t_0)|`.
    pub fn mean_drift(&self) -> f64 {
        let m0 = self.means.first().copied().unwrap_or(0.0);
        self.means.iter().fold(0.0, |acc, m| f64::max(acc, (m - m0).abs()))
    }

    /// Largest energy increase between consecutive checkpoints (0 when the
    /// energy never increases).
    pub fn max_energy_increase(&self) -> f64 {
        self.energies
            .windows(2)
            .fold(0.0, |acc, w| f64::max(acc, w[1] - w[0]))
    }
}

pub fn conservation_report(u0: &RealField, cfg: &SolverConfig, checkpoints: &[f64]) -> Result<ConservationReport> {
    let snaps = BurgersSolver::new(*cfg)?.snapshots(u0, checkpoints)?;
    Ok(ConservationReport {
        times: checkpoints.to_vec(),
        means: snaps.iter().map(RealField::mean).collect(),
        energies: snaps.iter().map(|u| 0.5 * u.l2_norm_sq()).collect(),
    })
}

/// `nu * ||u_x||^2`, the instantaneous energy dissipation rate, with the
/// derivative taken spectrally.
pub fn dissipation_rate(u: &RealField, nu: f64) -> f64 {
    let spec: SpectralField = forward_transform(u);
    let h = u.grid().nyquist();
    let grad_sq: f64 = spec
        .coeffs()
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let pair = if k == 0 || k == h { 1.0 } else { 2.0 };
            let w = 2.0 * PI * k as f64;
            pair * w * w * c.norm_sqr()
        })
        .sum();
    nu * grad_sq
}
