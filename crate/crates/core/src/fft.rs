//! Discrete Fourier transforms used by the spectral machinery.
//!
//! `ComplexFft` is an unnormalized in-place transform (iterative radix-2 for
//! power-of-two lengths, Bluestein's chirp-z otherwise). `RealFft` packs an
//! even-length real signal into a half-length complex transform and applies
//! the `1/n` forward normalization used throughout the crate, so bin 0 holds
//! the mean of the samples.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;

#[derive(Debug, Clone)]
pub struct ComplexFft {
    n: usize,
    kind: Kind,
}

#[derive(Debug, Clone)]
enum Kind {
    Trivial,
    Radix2 {
        twiddles: Vec<Complex64>,
        bitrev: Vec<usize>,
    },
    Bluestein(Box<Bluestein>),
}

#[derive(Debug, Clone)]
struct Bluestein {
    inner: ComplexFft,
    chirp: Vec<Complex64>,
    kernel_hat: Vec<Complex64>,
}

impl ComplexFft {
    pub fn new(n: usize) -> Self {
        let kind = if n <= 1 {
            Kind::Trivial
        } else if n.is_power_of_two() {
            let bits = n.trailing_zeros();
            let bitrev = (0..n)
                .map(|i| i.reverse_bits() >> (usize::BITS - bits))
                .collect();
            let twiddles = (0..n / 2)
                .map(|k| Complex64::from_polar(1.0, -2.0 * PI * k as f64 / n as f64))
                .collect();
            Kind::Radix2 { twiddles, bitrev }
        } else {
            Kind::Bluestein(Box::new(Bluestein::new(n)))
        };
        Self { n, kind }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Unnormalized transform, `X_k = sum_j x_j exp(-2 pi i jk/n)` when
    /// `inverse` is false and the conjugate kernel otherwise.
    pub fn process(&self, data: &mut [Complex64], inverse: bool) {
        debug_assert_eq!(data.len(), self.n);
        match &self.kind {
            Kind::Trivial => {}
            Kind::Radix2 { twiddles, bitrev } => radix2(data, twiddles, bitrev, inverse),
            Kind::Bluestein(b) => b.process(data, inverse),
        }
    }
}

fn radix2(data: &mut [Complex64], twiddles: &[Complex64], bitrev: &[usize], inverse: bool) {
    let n = data.len();
    for (i, &j) in bitrev.iter().enumerate() {
        if i < j {
            data.swap(i, j);
        }
    }
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let stride = n / len;
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let mut w = twiddles[k * stride];
                if inverse {
                    w = w.conj();
                }
                let a = data[start + k];
                let b = data[start + k + half] * w;
                data[start + k] = a + b;
                data[start + k + half] = a - b;
            }
        }
        len <<= 1;
    }
}

impl Bluestein {
    fn new(n: usize) -> Self {
        let m = (2 * n - 1).next_power_of_two();
        let inner = ComplexFft::new(m);
        // chirp_j = exp(-i pi j^2 / n); j^2 reduced mod 2n keeps the angle accurate
        let chirp: Vec<Complex64> = (0..n)
            .map(|j| {
                let jj = ((j as u128 * j as u128) % (2 * n as u128)) as f64;
                Complex64::from_polar(1.0, -PI * jj / n as f64)
            })
            .collect();
        let mut kernel = vec![Complex64::new(0.0, 0.0); m];
        kernel[0] = chirp[0].conj();
        for j in 1..n {
            kernel[j] = chirp[j].conj();
            kernel[m - j] = chirp[j].conj();
        }
        inner.process(&mut kernel, false);
        Self {
            inner,
            chirp,
            kernel_hat: kernel,
        }
    }

    fn process(&self, data: &mut [Complex64], inverse: bool) {
        let n = data.len();
        let m = self.kernel_hat.len();
        if inverse {
            // IDFT(x) = conj(DFT(conj(x)))
            for v in data.iter_mut() {
                *v = v.conj();
            }
        }
        let mut buf = vec![Complex64::new(0.0, 0.0); m];
        for j in 0..n {
            buf[j] = data[j] * self.chirp[j];
        }
        self.inner.process(&mut buf, false);
        for (b, k) in buf.iter_mut().zip(&self.kernel_hat) {
            *b *= k;
        }
        self.inner.process(&mut buf, true);
        let scale = 1.0 / m as f64;
        for k in 0..n {
            data[k] = buf[k] * self.chirp[k] * scale;
        }
        if inverse {
            for v in data.iter_mut() {
                *v = v.conj();
            }
        }
    }
}

/// Real-input transform of even length `n` producing `n/2 + 1` bins,
/// normalized by `1/n` on the forward side.
#[derive(Debug, Clone)]
pub struct RealFft {
    n: usize,
    half: ComplexFft,
    // exp(-2 pi i k / n) for k = 0..n/2
    twiddles: Vec<Complex64>,
}

impl RealFft {
    /// `n` must be even and at least 2.
    pub fn new(n: usize) -> Self {
        assert!(n >= 2 && n.is_multiple_of(2), "real transform length must be even");
        let twiddles = (0..=n / 2)
            .map(|k| Complex64::from_polar(1.0, -2.0 * PI * k as f64 / n as f64))
            .collect();
        Self {
            n,
            half: ComplexFft::new(n / 2),
            twiddles,
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spectrum_len(&self) -> usize {
        self.n / 2 + 1
    }

    /// `out[k] = (1/n) sum_j x_j exp(-2 pi i jk/n)` for `k = 0..=n/2`.
    /// Bins 0 and `n/2` come out with exactly zero imaginary part.
    pub fn forward(&self, input: &[f64], out: &mut [Complex64]) {
        let n = self.n;
        let h = n / 2;
        debug_assert_eq!(input.len(), n);
        debug_assert_eq!(out.len(), h + 1);
        let mut z: Vec<Complex64> = (0..h)
            .map(|j| Complex64::new(input[2 * j], input[2 * j + 1]))
            .collect();
        self.half.process(&mut z, false);
        let scale = 1.0 / n as f64;
        out[0] = Complex64::new((z[0].re + z[0].im) * scale, 0.0);
        out[h] = Complex64::new((z[0].re - z[0].im) * scale, 0.0);
        for k in 1..h {
            let a = z[k];
            let b = z[h - k].conj();
            let even = (a + b) * 0.5;
            let odd = (a - b) * Complex64::new(0.0, -0.5);
            out[k] = (even + self.twiddles[k] * odd) * scale;
        }
    }

    /// Inverse of [`RealFft::forward`]: `x_j = c_0 + 2 Re sum_{0<k<n/2} c_k e^{2 pi i jk/n} + c_{n/2} (-1)^j`.
    /// Imaginary parts of bins 0 and `n/2` are ignored.
    pub fn inverse(&self, coeffs: &[Complex64], out: &mut [f64]) {
        let n = self.n;
        let h = n / 2;
        debug_assert_eq!(coeffs.len(), h + 1);
        debug_assert_eq!(out.len(), n);
        let c0 = coeffs[0].re;
        let ch = coeffs[h].re;
        let mut z = vec![Complex64::new(0.0, 0.0); h];
        z[0] = Complex64::new(c0 + ch, c0 - ch);
        for (k, zk) in z.iter_mut().enumerate().skip(1) {
            let a = coeffs[k];
            let b = coeffs[h - k].conj();
            let even = a + b;
            let odd = (a - b) * self.twiddles[k].conj();
            *zk = even + Complex64::new(0.0, 1.0) * odd;
        }
        self.half.process(&mut z, true);
        for j in 0..h {
            out[2 * j] = z[j].re;
            out[2 * j + 1] = z[j].im;
        }
    }
}
