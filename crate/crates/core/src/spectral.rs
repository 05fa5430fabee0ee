//! Periodic grids on `[0, 1)`, real and spectral fields, spectral
//! differentiation, discrete Sobolev norms and Fourier truncation.
//!
//! Spectra use the real-input layout: `n/2 + 1` bins, forward transform
//! scaled by `1/n` so that bin 0 is the mean of the samples. Gradient code in
//! [`crate::fno`] depends on this normalization.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::fft::RealFft;
use crate::regression::ols;
use crate::rng::{keyed_rng, Domain};

/// Uniform periodic grid `x_i = i / n` on `[0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PeriodicGrid {
    n: usize,
}

impl PeriodicGrid {
    pub fn new(n: usize) -> Result<Self> {
        if n < 4 || !n.is_multiple_of(2) {
            return Err(Error::InvalidGrid(n));
        }
        Ok(Self { n })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn point(&self, i: usize) -> f64 {
        i as f64 / self.n as f64
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(move |i| self.point(i))
    }

    /// Number of bins in the real-input spectrum, `n/2 + 1`.
    pub fn spectrum_len(&self) -> usize {
        self.n / 2 + 1
    }

    /// Highest representable wavenumber, `n/2`.
    pub fn nyquist(&self) -> usize {
        self.n / 2
    }

    pub fn fft(&self) -> RealFft {
        RealFft::new(self.n)
    }
}

/// Real samples of a periodic function. All entries are finite.
#[derive(Debug, Clone, PartialEq)]
pub struct RealField {
    grid: PeriodicGrid,
    values: Vec<f64>,
}

impl RealField {
    pub fn new(grid: PeriodicGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::LengthMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { grid, values })
    }

    /// Samples `f` at the grid points.
    pub fn from_fn(grid: PeriodicGrid, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(grid, grid.points().map(f).collect())
    }

    pub fn zeros(grid: PeriodicGrid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn constant(grid: PeriodicGrid, c: f64) -> Result<Self> {
        Self::new(grid, vec![c; grid.len()])
    }

    pub fn grid(&self) -> PeriodicGrid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Rectangle-rule `h * sum f_i^2`.
    pub fn l2_norm_sq(&self) -> f64 {
        self.grid.spacing() * self.values.iter().map(|v| v * v).sum::<f64>()
    }

    pub fn l2_norm(&self) -> f64 {
        libm::sqrt(self.l2_norm_sq())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| f64::max(m, v.abs()))
    }

    /// `a * self + b * other`.
    pub fn combine(&self, a: f64, other: &RealField, b: f64) -> Result<RealField> {
        self.check_grid(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| a * x + b * y)
            .collect();
        RealField::new(self.grid, values)
    }

    pub fn sub(&self, other: &RealField) -> Result<RealField> {
        self.combine(1.0, other, -1.0)
    }

    pub(crate) fn check_grid(&self, other: &RealField) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch(self.grid.len(), other.grid.len()));
        }
        Ok(())
    }
}

/// Fourier coefficients `c_k`, `k = 0..=n/2`, of a real field.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    grid: PeriodicGrid,
    coeffs: Vec<Complex64>,
}

impl SpectralField {
    /// Rejects non-finite coefficients and spectra whose mean or Nyquist bin
    /// carries an imaginary part (beyond round-off relative to the spectrum).
    pub fn new(grid: PeriodicGrid, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != grid.spectrum_len() {
            return Err(Error::LengthMismatch {
                expected: grid.spectrum_len(),
                got: coeffs.len(),
            });
        }
        if let Some(index) = coeffs.iter().position(|c| !(c.re.is_finite() && c.im.is_finite())) {
            return Err(Error::NonFinite { index });
        }
        let scale = coeffs.iter().fold(0.0, |m: f64, c| m.max(c.norm()));
        let tol = 1e-12 * (1.0 + scale);
        for bin in [0, grid.nyquist()] {
            let imag = coeffs[bin].im;
            if imag.abs() > tol {
                return Err(Error::NotHermitian { bin, imag });
            }
        }
        let mut coeffs = coeffs;
        coeffs[0].im = 0.0;
        let h = grid.nyquist();
        coeffs[h].im = 0.0;
        Ok(Self { grid, coeffs })
    }

    pub fn grid(&self) -> PeriodicGrid {
        self.grid
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<Complex64> {
        self.coeffs
    }
}

pub fn forward_transform(f: &RealField) -> SpectralField {
    let grid = f.grid;
    let mut coeffs = vec![Complex64::new(0.0, 0.0); grid.spectrum_len()];
    grid.fft().forward(&f.values, &mut coeffs);
    SpectralField { grid, coeffs }
}

pub fn inverse_transform(s: &SpectralField) -> RealField {
    let grid = s.grid;
    let mut values = vec![0.0; grid.len()];
    grid.fft().inverse(&s.coeffs, &mut values);
    RealField { grid, values }
}

/// `i^order (2 pi k)^order` with the powers of `i` taken exactly.
fn derivative_multiplier(k: usize, order: u32) -> Complex64 {
    let mag = libm::pow(2.0 * PI * k as f64, order as f64);
    match order % 4 {
        0 => Complex64::new(mag, 0.0),
        1 => Complex64::new(0.0, mag),
        2 => Complex64::new(-mag, 0.0),
        _ => Complex64::new(0.0, -mag),
    }
}

/// Multiplies bin `k` by `(2 pi i k)^order`. The Nyquist bin is zeroed for
/// odd orders since its derivative is not representable on the grid.
pub fn spectral_derivative(s: &SpectralField, order: u32) -> Result<SpectralField> {
    if order == 0 {
        return Err(Error::InvalidArgument("derivative order must be positive".into()));
    }
    let h = s.grid.nyquist();
    let coeffs = s
        .coeffs
        .iter()
        .enumerate()
        .map(|(k, &c)| {
            if k == h && order % 2 == 1 {
                Complex64::new(0.0, 0.0)
            } else {
                c * derivative_multiplier(k, order)
            }
        })
        .collect();
    Ok(SpectralField { grid: s.grid, coeffs })
}

/// Convenience: spectral derivative of a real field, back in physical space.
pub fn differentiate(f: &RealField, order: u32) -> Result<RealField> {
    Ok(inverse_transform(&spectral_derivative(&forward_transform(f), order)?))
}

/// Spectral Sobolev norm `(sum_k (1 + (2 pi k)^2)^s |c_k|^2)^(1/2)` with each
/// conjugate pair counted twice. `s = 0` gives the L2 norm, `s = 1` gives
/// `(||f||^2 + ||f'||^2)^(1/2)`.
pub fn hs_norm(f: &RealField, s: f64) -> Result<f64> {
    if !(s >= 0.0) || !s.is_finite() {
        return Err(Error::InvalidArgument(format!("Sobolev order must be nonnegative, got {s}")));
    }
    Ok(libm::sqrt(hs_norm_sq_spectrum(&forward_transform(f), s)))
}

pub(crate) fn hs_norm_sq_spectrum(spec: &SpectralField, s: f64) -> f64 {
    let h = spec.grid.nyquist();
    spec.coeffs
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let pair = if k == 0 || k == h { 1.0 } else { 2.0 };
            let wk = 2.0 * PI * k as f64;
            pair * libm::pow(1.0 + wk * wk, s) * c.norm_sqr()
        })
        .sum()
}

/// Finite-difference stencil for the gradient term of the discrete H1 norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum FdStencil {
    /// `(f[i+1] - f[i-1]) / 2h`
    #[default]
    Central,
    /// `(f[i+1] - f[i]) / h`
    Forward,
}

impl FdStencil {
    pub fn apply(self, f: &[f64], h: f64, out: &mut [f64]) {
        let n = f.len();
        match self {
            FdStencil::Central => {
                let c = 0.5 / h;
                for i in 0..n {
                    let next = f[(i + 1) % n];
                    let prev = f[(i + n - 1) % n];
                    out[i] = (next - prev) * c;
                }
            }
            FdStencil::Forward => {
                let c = 1.0 / h;
                for i in 0..n {
                    out[i] = (f[(i + 1) % n] - f[i]) * c;
                }
            }
        }
    }

    /// Transpose of [`FdStencil::apply`].
    pub fn apply_adjoint(self, g: &[f64], h: f64, out: &mut [f64]) {
        let n = g.len();
        match self {
            FdStencil::Central => {
                let c = 0.5 / h;
                for i in 0..n {
                    let next = g[(i + 1) % n];
                    let prev = g[(i + n - 1) % n];
                    out[i] = (prev - next) * c;
                }
            }
            FdStencil::Forward => {
                let c = 1.0 / h;
                for i in 0..n {
                    out[i] = (g[(i + n - 1) % n] - g[i]) * c;
                }
            }
        }
    }
}

/// Periodic central-difference gradient.
pub fn fd_gradient(f: &RealField) -> RealField {
    fd_gradient_with(f, FdStencil::Central)
}

pub fn fd_gradient_with(f: &RealField, stencil: FdStencil) -> RealField {
    let mut values = vec![0.0; f.values.len()];
    stencil.apply(&f.values, f.grid.spacing(), &mut values);
    RealField { grid: f.grid, values }
}

/// Discrete H1 norm squared, `h sum f_i^2 + h sum (D f)_i^2` with central `D`.
pub fn h1_fd_norm_sq(f: &RealField) -> f64 {
    h1_fd_norm_sq_with(f, FdStencil::Central)
}

pub fn h1_fd_norm_sq_with(f: &RealField, stencil: FdStencil) -> f64 {
    let mut scratch = vec![0.0; f.values.len()];
    h1_fd_norm_sq_slice(&f.values, f.grid.spacing(), stencil, &mut scratch)
}

pub(crate) fn h1_fd_norm_sq_slice(f: &[f64], h: f64, stencil: FdStencil, scratch: &mut [f64]) -> f64 {
    stencil.apply(f, h, scratch);
    let value: f64 = f.iter().map(|v| v * v).sum();
    let grad: f64 = scratch.iter().map(|v| v * v).sum();
    h * (value + grad)
}

/// Truncation projection: keeps wavenumbers `|k| <= modes`.
pub fn project_modes(f: &RealField, modes: usize) -> Result<RealField> {
    let grid = f.grid;
    if modes > grid.nyquist() {
        return Err(Error::TooManyModes {
            modes,
            limit: grid.nyquist(),
        });
    }
    let mut spec = forward_transform(f);
    for c in spec.coeffs.iter_mut().skip(modes + 1) {
        *c = Complex64::new(0.0, 0.0);
    }
    Ok(inverse_transform(&spec))
}

/// Empirical decay exponent of the L2 truncation error `||f - P_N f||` for
/// random fields with `|c_k| = k^-(s + 1/2 + 0.01)` and uniformly random
/// phases. Returns the slope of log mean error against log `N`; for fields of
/// Sobolev regularity just above `s` it sits near `-s`.
pub fn projection_decay_rate(
    grid: PeriodicGrid,
    s: f64,
    cutoffs: &[usize],
    trials: usize,
    seed: u64,
) -> Result<f64> {
    if !(s > 0.0) {
        return Err(Error::InvalidArgument(format!("regularity must be positive, got {s}")));
    }
    if trials == 0 {
        return Err(Error::InvalidArgument("need at least one trial".into()));
    }
    if cutoffs.len() < 2 {
        return Err(Error::DegenerateFit("need at least two distinct cutoffs".into()));
    }
    if cutoffs.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("cutoffs must be strictly increasing".into()));
    }
    if cutoffs[0] == 0 {
        return Err(Error::InvalidArgument("cutoffs must be positive".into()));
    }
    if let Some(&too_big) = cutoffs.iter().find(|&&c| c > grid.nyquist()) {
        return Err(Error::TooManyModes {
            modes: too_big,
            limit: grid.nyquist(),
        });
    }
    let decay = s + 0.5 + 0.01;
    let h = grid.nyquist();
    let mut mean_err = vec![0.0; cutoffs.len()];
    for trial in 0..trials {
        let mut rng = keyed_rng(seed, Domain::ProjectionTrials, trial as u64);
        let mut coeffs = vec![Complex64::new(0.0, 0.0); grid.spectrum_len()];
        for (k, c) in coeffs.iter_mut().enumerate().take(h).skip(1) {
            let phase = rng.random_range(0.0..2.0 * PI);
            *c = Complex64::from_polar(libm::pow(k as f64, -decay), phase);
        }
        let f = inverse_transform(&SpectralField { grid, coeffs });
        for (acc, &cut) in mean_err.iter_mut().zip(cutoffs) {
            let p = project_modes(&f, cut)?;
            *acc += f.sub(&p)?.l2_norm() / trials as f64;
        }
    }
    if mean_err.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::DegenerateFit("zero truncation error at some cutoff".into()));
    }
    let xs: Vec<f64> = cutoffs.iter().map(|&c| libm::log(c as f64)).collect();
    let ys: Vec<f64> = mean_err.iter().map(|&e| libm::log(e)).collect();
    Ok(ols(&xs, &ys).slope)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> PeriodicGrid {
        PeriodicGrid::new(n).unwrap()
    }

    fn sin2pi(n: usize) -> RealField {
        RealField::from_fn(grid(n), |x| libm::sin(2.0 * PI * x)).unwrap()
    }

    #[test]
    fn grid_rejects_small_or_odd_sizes() {
        assert_eq!(PeriodicGrid::new(2), Err(Error::InvalidGrid(2)));
        assert_eq!(PeriodicGrid::new(7), Err(Error::InvalidGrid(7)));
        let g = grid(8);
        let pts: Vec<f64> = g.points().collect();
        assert_eq!(pts[0], 0.0);
        assert_eq!(pts[7], 1.0 - g.spacing());
        assert!(pts.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn non_finite_samples_are_rejected() {
        let err = RealField::new(grid(4), vec![0.0, f64::NAN, 1.0, 2.0]).unwrap_err();
        assert_eq!(err, Error::NonFinite { index: 1 });
        assert!(RealField::new(grid(4), vec![0.0; 3]).is_err());
    }

    #[test]
    fn constant_maps_to_mean_bin() {
        let s = forward_transform(&RealField::constant(grid(8), 1.0).unwrap());
        assert_eq!(s.coeffs()[0], Complex64::new(1.0, 0.0));
        assert!(s.coeffs()[1..].iter().all(|c| c.norm() < 1e-15));
    }

    #[test]
    fn sine_maps_to_single_bin() {
        let s = forward_transform(&sin2pi(8));
        for (k, c) in s.coeffs().iter().enumerate() {
            let want = if k == 1 { Complex64::new(0.0, -0.5) } else { Complex64::new(0.0, 0.0) };
            assert!((c - want).norm() < 1e-15, "k={k} c={c}");
        }
    }

    #[test]
    fn inverse_of_single_bins() {
        let g = grid(8);
        let mut coeffs = vec![Complex64::new(0.0, 0.0); 5];
        coeffs[0] = Complex64::new(0.75, 0.0);
        let f = inverse_transform(&SpectralField::new(g, coeffs.clone()).unwrap());
        assert!(f.values().iter().all(|&v| (v - 0.75).abs() < 1e-15));
        coeffs[0] = Complex64::new(0.0, 0.0);
        coeffs[1] = Complex64::new(0.0, -0.5);
        let f = inverse_transform(&SpectralField::new(g, coeffs).unwrap());
        for (x, v) in g.points().zip(f.values()) {
            assert!((v - libm::sin(2.0 * PI * x)).abs() < 1e-15);
        }
    }

    #[test]
    fn hermitian_violations_are_rejected() {
        let g = grid(8);
        let mut coeffs = vec![Complex64::new(0.0, 0.0); 5];
        coeffs[0] = Complex64::new(1.0, 0.1);
        assert!(matches!(SpectralField::new(g, coeffs.clone()), Err(Error::NotHermitian { bin: 0, .. })));
        coeffs[0] = Complex64::new(1.0, 0.0);
        coeffs[4] = Complex64::new(0.0, 0.2);
        assert!(matches!(SpectralField::new(g, coeffs), Err(Error::NotHermitian { bin: 4, .. })));
    }

    #[test]
    fn derivatives_of_trig_modes() {
        let g = grid(32);
        let d = differentiate(&sin2pi(32), 1).unwrap();
        for (x, v) in g.points().zip(d.values()) {
            assert!((v - 2.0 * PI * libm::cos(2.0 * PI * x)).abs() < 1e-12);
        }
        let f = RealField::from_fn(g, |x| libm::cos(4.0 * PI * x)).unwrap();
        let d2 = differentiate(&f, 2).unwrap();
        for (x, v) in g.points().zip(d2.values()) {
            assert!((v + 16.0 * PI * PI * libm::cos(4.0 * PI * x)).abs() < 1e-10);
        }
        let c = RealField::constant(g, 3.0).unwrap();
        for order in 1..5 {
            assert!(differentiate(&c, order).unwrap().max_abs() < 1e-13);
        }
        assert!(spectral_derivative(&forward_transform(&c), 0).is_err());
    }

    #[test]
    fn odd_derivative_zeroes_nyquist() {
        let g = grid(8);
        let alt = RealField::new(g, (0..8).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect()).unwrap();
        assert!(differentiate(&alt, 1).unwrap().max_abs() < 1e-13);
        let d2 = differentiate(&alt, 2).unwrap();
        assert!((d2.values()[0] + (PI * 8.0).powi(2)).abs() < 1e-9);
    }

    /// Composite Simpson on `[0, 1]`, independent of the grid machinery.
    fn simpson(f: impl Fn(f64) -> f64, panels: usize) -> f64 {
        let h = 1.0 / panels as f64;
        let mut acc = f(0.0) + f(1.0);
        for i in 1..panels {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * f(i as f64 * h);
        }
        acc * h / 3.0
    }

    #[test]
    fn hs_norm_matches_quadrature() {
        let two_pi = 2.0 * PI;
        let l2 = simpson(|x| libm::sin(two_pi * x).powi(2), 20_000);
        let grad = simpson(|x| (two_pi * libm::cos(two_pi * x)).powi(2), 20_000);
        let s0 = hs_norm(&sin2pi(64), 0.0).unwrap();
        let s1 = hs_norm(&sin2pi(64), 1.0).unwrap();
        assert!((s0 - libm::sqrt(l2)).abs() < 1e-10);
        assert!((s1 - libm::sqrt(l2 + grad)).abs() < 1e-10);
        assert!((s0 - core::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert!((s1 - 4.49880).abs() < 1e-5);
        let c = RealField::constant(grid(16), -2.5).unwrap();
        for s in [0.0, 0.5, 1.0, 3.0] {
            assert!((hs_norm(&c, s).unwrap() - 2.5).abs() < 1e-14);
        }
        assert!(hs_norm(&c, -0.1).is_err());
    }

    #[test]
    fn central_difference_error_within_taylor_bound() {
        let n = 256;
        let h = 1.0 / n as f64;
        let g = grid(n);
        let d = fd_gradient(&sin2pi(n));
        let bound = (2.0 * PI * h).powi(2) * 2.0 * PI / 6.0;
        let worst = g
            .points()
            .zip(d.values())
            .map(|(x, v)| (v - 2.0 * PI * libm::cos(2.0 * PI * x)).abs())
            .fold(0.0, f64::max);
        assert!(worst <= bound, "{worst} > {bound}");
        assert!(fd_gradient(&RealField::constant(g, 4.0).unwrap()).max_abs() == 0.0);
    }

    #[test]
    fn stencil_adjoints_are_transposes() {
        let n = 12;
        let f: Vec<f64> = (0..n).map(|i| libm::sin(1.7 * i as f64)).collect();
        let g: Vec<f64> = (0..n).map(|i| libm::cos(0.3 * (i * i) as f64)).collect();
        for st in [FdStencil::Central, FdStencil::Forward] {
            let mut df = vec![0.0; n];
            let mut dtg = vec![0.0; n];
            st.apply(&f, 0.1, &mut df);
            st.apply_adjoint(&g, 0.1, &mut dtg);
            let lhs: f64 = df.iter().zip(&g).map(|(a, b)| a * b).sum();
            let rhs: f64 = f.iter().zip(&dtg).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn h1_fd_norm_examples() {
        let c = RealField::constant(grid(16), 0.3).unwrap();
        assert!((h1_fd_norm_sq(&c) - 0.09).abs() < 1e-15);
        let s = sin2pi(256);
        let fd = h1_fd_norm_sq(&s);
        let spectral = hs_norm(&sin2pi(4096), 1.0).unwrap().powi(2);
        assert!(fd <= 20.24);
        assert!(((fd - spectral) / spectral).abs() < 5e-3);
        assert_eq!(h1_fd_norm_sq(&s.sub(&s).unwrap()), 0.0);
        // forward stencil is the other option
        let fwd = h1_fd_norm_sq_with(&s, FdStencil::Forward);
        assert!(((fwd - spectral) / spectral).abs() < 5e-3);
    }

    #[test]
    fn projection_examples() {
        let g = grid(64);
        let band = RealField::from_fn(g, |x| {
            1.0 + libm::sin(2.0 * PI * x) - 0.3 * libm::cos(6.0 * PI * x) + 0.2 * libm::sin(4.0 * PI * x)
        })
        .unwrap();
        let p = project_modes(&band, 3).unwrap();
        for (a, b) in p.values().iter().zip(band.values()) {
            assert!((a - b).abs() < 1e-13);
        }
        let p0 = project_modes(&band, 0).unwrap();
        assert!(p0.values().iter().all(|v| (v - band.mean()).abs() < 1e-14));
        assert!(project_modes(&band, 33).is_err());
        assert!(project_modes(&band, 32).is_ok());
    }

    #[test]
    fn projection_error_ratio_matches_tail_sum() {
        // oracle: ||f - P_N f||^2 = sum_{N<k<n/2} 2 k^-4
        let n = 1024;
        let g = grid(n);
        let tail = |cut: usize| -> f64 {
            libm::sqrt((cut + 1..n / 2).map(|k| 2.0 * (k as f64).powi(-4)).sum::<f64>())
        };
        let oracle_ratio = tail(16) / tail(8);
        assert!((libm::log2(oracle_ratio) + 1.5).abs() < 0.1);
        let mut coeffs = vec![Complex64::new(0.0, 0.0); g.spectrum_len()];
        for (k, c) in coeffs.iter_mut().enumerate().take(n / 2).skip(1) {
            *c = Complex64::from_polar((k as f64).powi(-2), 0.37 * k as f64);
        }
        let f = inverse_transform(&SpectralField::new(g, coeffs).unwrap());
        let err = |cut| f.sub(&project_modes(&f, cut).unwrap()).unwrap().l2_norm();
        assert!((err(8) - tail(8)).abs() < 1e-12);
        assert!((err(16) / err(8) - oracle_ratio).abs() < 1e-9);
    }

    /// Analytic slope of log tail(N) vs log N for `|c_k| = k^-decay`.
    fn tail_slope_oracle(n: usize, s: f64, cuts: &[usize]) -> f64 {
        let decay = s + 0.51;
        let tail = |cut: usize| -> f64 {
            (cut + 1..n / 2).map(|k| 2.0 * libm::pow(k as f64, -2.0 * decay)).sum::<f64>().sqrt()
        };
        let xs: Vec<f64> = cuts.iter().map(|&c| (c as f64).ln()).collect();
        let ys: Vec<f64> = cuts.iter().map(|&c| tail(c).ln()).collect();
        ols(&xs, &ys).slope
    }

    #[test]
    fn projection_decay_tracks_regularity() {
        let g = grid(512);
        let cuts = [4, 8, 16, 32, 64];
        let s1 = projection_decay_rate(g, 1.0, &cuts, 3, 11).unwrap();
        let s2 = projection_decay_rate(g, 2.0, &cuts, 3, 11).unwrap();
        assert!((-1.15..=-0.85).contains(&s1), "{s1}");
        assert!((-2.25..=-1.75).contains(&s2), "{s2}");
        assert!((s1 - tail_slope_oracle(512, 1.0, &cuts)).abs() < 1e-8);
        assert!((s2 - tail_slope_oracle(512, 2.0, &cuts)).abs() < 1e-8);
        let again = projection_decay_rate(g, 1.0, &cuts, 1, 5).unwrap();
        assert_eq!(again.to_bits(), projection_decay_rate(g, 1.0, &cuts, 1, 5).unwrap().to_bits());
        assert!(matches!(projection_decay_rate(g, 1.0, &[8], 1, 0), Err(Error::DegenerateFit(_))));
        assert!(projection_decay_rate(g, 1.0, &[8, 8], 1, 0).is_err());
        assert!(projection_decay_rate(g, 1.0, &[8, 300], 1, 0).is_err());
    }
}
