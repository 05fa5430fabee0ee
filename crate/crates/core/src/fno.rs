//! One-dimensional Fourier neural operator with exact reverse-mode gradients.
//!
//! Graph, per input field `u0` sampled on an `n`-point periodic grid:
//!
//! ```text
//! features (u0(x), x) -> lift -> [spectral conv + pointwise + bias -> act] x L -> head1 -> act -> head2
//! ```
//!
//! The activation is skipped after the last Fourier layer. The spectral
//! convolution takes the real-input transform of each channel (scaled by
//! `1/n`), keeps bins `k = 0..modes`, mixes channels mode-wise with a complex
//! `width x width` matrix and maps back with the matching inverse. Bins above
//! `modes` contribute nothing to the spectral branch.
//!
//! All parameters live in one flat vector (complex entries interleaved as
//! `re, im`), which is also the layout of gradients, optimizer moments and
//! checkpoints.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{FRAC_1_SQRT_2, PI};
use core::ops::Range;

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::fft::RealFft;
use crate::rng::{keyed_rng, Domain};
use crate::spectral::{PeriodicGrid, RealField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Activation {
    /// Exact (erf-based) Gaussian error linear unit.
    #[default]
    Gelu,
    Relu,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Gelu => 0.5 * x * (1.0 + libm::erf(x * FRAC_1_SQRT_2)),
            Activation::Relu => x.max(0.0),
        }
    }

    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Gelu => {
                const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
                0.5 * (1.0 + libm::erf(x * FRAC_1_SQRT_2)) + x * INV_SQRT_2PI * libm::exp(-0.5 * x * x)
            }
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FnoConfig {
    pub modes: usize,
    pub width: usize,
    pub layers: usize,
    pub fc_hidden: usize,
    /// 1 feeds only `u0`; 2 also feeds the raw coordinate `x`.
    pub in_channels: usize,
    pub out_channels: usize,
    pub activation: Activation,
}

impl FnoConfig {
    /// Four Fourier layers, a 128-unit head and `(u0, x)` input features.
    pub fn new(modes: usize, width: usize) -> Self {
        Self {
            modes,
            width,
            layers: 4,
            fc_hidden: 128,
            in_channels: 2,
            out_channels: 1,
            activation: Activation::Gelu,
        }
    }

    /// The four model sizes of the scaling sweep.
    pub fn sweep_defaults() -> [FnoConfig; 4] {
        [
            FnoConfig::new(8, 32),
            FnoConfig::new(12, 48),
            FnoConfig::new(16, 64),
            FnoConfig::new(24, 96),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        if self.modes == 0 || self.width == 0 || self.layers == 0 || self.fc_hidden == 0 {
            return Err(Error::InvalidArgument(format!("all FNO dimensions must be positive: {self:?}")));
        }
        if !(1..=2).contains(&self.in_channels) {
            return Err(Error::InvalidArgument(format!(
                "in_channels must be 1 (u0) or 2 (u0, x), got {}",
                self.in_channels
            )));
        }
        if self.out_channels != 1 {
            return Err(Error::InvalidArgument(format!(
                "the operator maps to one field, got out_channels = {}",
                self.out_channels
            )));
        }
        Ok(())
    }

    pub fn check_grid(&self, grid: PeriodicGrid) -> Result<()> {
        if self.modes > grid.nyquist() {
            return Err(Error::TooManyModes {
                modes: self.modes,
                limit: grid.nyquist(),
            });
        }
        Ok(())
    }
}

/// Number of trainable reals, complex weights counted twice.
pub fn param_count(cfg: &FnoConfig) -> usize {
    let (w, m, h) = (cfg.width, cfg.modes, cfg.fc_hidden);
    let fourier = 2 * w * w * m + w * w + w;
    cfg.layers * fourier + (cfg.in_channels * w + w) + (w * h + h) + (h * cfg.out_channels + cfg.out_channels)
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct LayerSlots {
    spectral: Range<usize>,
    weight: Range<usize>,
    bias: Range<usize>,
}

/// Offsets of every tensor inside the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Layout {
    lift_weight: Range<usize>,
    lift_bias: Range<usize>,
    layers: Vec<LayerSlots>,
    head1_weight: Range<usize>,
    head1_bias: Range<usize>,
    head2_weight: Range<usize>,
    head2_bias: Range<usize>,
    len: usize,
}

impl Layout {
    fn new(cfg: &FnoConfig) -> Self {
        let mut at = 0;
        let mut take = |len: usize| {
            let r = at..at + len;
            at += len;
            r
        };
        let w = cfg.width;
        let lift_weight = take(w * cfg.in_channels);
        let lift_bias = take(w);
        let layers = (0..cfg.layers)
            .map(|_| LayerSlots {
                spectral: take(2 * w * w * cfg.modes),
                weight: take(w * w),
                bias: take(w),
            })
            .collect();
        let head1_weight = take(cfg.fc_hidden * w);
        let head1_bias = take(cfg.fc_hidden);
        let head2_weight = take(cfg.out_channels * cfg.fc_hidden);
        let head2_bias = take(cfg.out_channels);
        Self {
            lift_weight,
            lift_bias,
            layers,
            head1_weight,
            head1_bias,
            head2_weight,
            head2_bias,
            len: at,
        }
    }

    fn biases(&self) -> impl Iterator<Item = usize> + '_ {
        self.lift_bias
            .clone()
            .chain(self.layers.iter().flat_map(|l| l.bias.clone()))
            .chain(self.head1_bias.clone())
            .chain(self.head2_bias.clone())
    }
}

/// Flat parameter vector plus its shape. Also used for gradients.
///
/// Tensor layouts (row-major):
/// - lift weight `[width][in_channels]`, bias `[width]`
/// - spectral weight of layer `l`: `[in][out][mode][re, im]`
/// - pointwise weight `[out][in]`, bias `[width]`
/// - head1 weight `[fc_hidden][width]`, head2 weight `[out_channels][fc_hidden]`
#[derive(Debug, Clone, PartialEq)]
pub struct FnoParams {
    cfg: FnoConfig,
    layout: Layout,
    data: Vec<f64>,
}

macro_rules! tensor_access {
    ($($name:ident, $name_mut:ident => $($field:ident).+;)*) => {
        $(
            pub fn $name(&self) -> &[f64] {
                &self.data[self.layout.$($field).+.clone()]
            }
            pub fn $name_mut(&mut self) -> &mut [f64] {
                let r = self.layout.$($field).+.clone();
                &mut self.data[r]
            }
        )*
    };
}

impl FnoParams {
    pub fn zeros(cfg: &FnoConfig) -> Result<Self> {
        cfg.validate()?;
        let layout = Layout::new(cfg);
        let data = vec![0.0; layout.len];
        Ok(Self { cfg: *cfg, layout, data })
    }

    pub fn from_vec(cfg: &FnoConfig, data: Vec<f64>) -> Result<Self> {
        let mut p = Self::zeros(cfg)?;
        if data.len() != p.data.len() {
            return Err(Error::LengthMismatch {
                expected: p.data.len(),
                got: data.len(),
            });
        }
        p.data = data;
        Ok(p)
    }

    pub fn config(&self) -> &FnoConfig {
        &self.cfg
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Indices of every bias entry in the flat vector.
    pub fn bias_indices(&self) -> Vec<usize> {
        self.layout.biases().collect()
    }

    /// Flat index range of the spectral weights of each layer.
    pub fn spectral_ranges(&self) -> Vec<Range<usize>> {
        self.layout.layers.iter().map(|l| l.spectral.clone()).collect()
    }

    tensor_access! {
        lift_weight, lift_weight_mut => lift_weight;
        lift_bias, lift_bias_mut => lift_bias;
        head1_weight, head1_weight_mut => head1_weight;
        head1_bias, head1_bias_mut => head1_bias;
        head2_weight, head2_weight_mut => head2_weight;
        head2_bias, head2_bias_mut => head2_bias;
    }

    pub fn spectral_weight(&self, layer: usize) -> &[f64] {
        &self.data[self.layout.layers[layer].spectral.clone()]
    }

    pub fn spectral_weight_mut(&mut self, layer: usize) -> &mut [f64] {
        let r = self.layout.layers[layer].spectral.clone();
        &mut self.data[r]
    }

    pub fn pointwise_weight(&self, layer: usize) -> &[f64] {
        &self.data[self.layout.layers[layer].weight.clone()]
    }

    pub fn pointwise_weight_mut(&mut self, layer: usize) -> &mut [f64] {
        let r = self.layout.layers[layer].weight.clone();
        &mut self.data[r]
    }

    pub fn pointwise_bias(&self, layer: usize) -> &[f64] {
        &self.data[self.layout.layers[layer].bias.clone()]
    }

    pub fn pointwise_bias_mut(&mut self, layer: usize) -> &mut [f64] {
        let r = self.layout.layers[layer].bias.clone();
        &mut self.data[r]
    }

    fn spectral_at(&self, layer: usize, input: usize, output: usize, mode: usize) -> Complex64 {
        let (w, m) = (self.cfg.width, self.cfg.modes);
        let base = self.layout.layers[layer].spectral.start + 2 * ((input * w + output) * m + mode);
        Complex64::new(self.data[base], self.data[base + 1])
    }
}

/// Spectral weights `re, im ~ U(-1/w^2, 1/w^2)`; dense weights
/// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`; zero biases.
pub fn init_params(cfg: &FnoConfig, seed: u64) -> Result<FnoParams> {
    let mut p = FnoParams::zeros(cfg)?;
    let mut rng = keyed_rng(seed, Domain::ParamInit, 0);
    let mut fill = |slice: &mut [f64], bound: f64| {
        for v in slice {
            *v = rng.random_range(-bound..bound);
        }
    };
    let w = cfg.width as f64;
    let inv_sqrt = |fan_in: usize| 1.0 / libm::sqrt(fan_in as f64);
    fill(p.lift_weight_mut(), inv_sqrt(cfg.in_channels));
    for l in 0..cfg.layers {
        fill(p.spectral_weight_mut(l), 1.0 / (w * w));
        fill(p.pointwise_weight_mut(l), inv_sqrt(cfg.width));
    }
    fill(p.head1_weight_mut(), inv_sqrt(cfg.width));
    fill(p.head2_weight_mut(), inv_sqrt(cfg.fc_hidden));
    Ok(p)
}

/// Activations recorded by [`forward_tape`], enough to run [`backward`].
#[derive(Debug, Clone, PartialEq)]
pub struct Tape {
    cfg: FnoConfig,
    n: usize,
    features: Vec<f64>,
    /// input `v_l` of each Fourier layer, `[width][n]`
    layer_inputs: Vec<Vec<f64>>,
    /// retained spectra of `v_l`, `[width][modes]`
    layer_spectra: Vec<Vec<Complex64>>,
    /// pre-activation sums `z_l`, `[width][n]`
    layer_pre: Vec<Vec<f64>>,
    /// head1 pre-activation and activation, `[fc_hidden][n]`
    head_pre: Vec<f64>,
    head_act: Vec<f64>,
    output: Vec<f64>,
}

impl Tape {
    pub fn output(&self) -> &[f64] {
        &self.output
    }

    pub fn grid_len(&self) -> usize {
        self.n
    }

    /// Input to head1 (the last Fourier layer's output), `[width][n]`.
    pub fn trunk_output(&self) -> &[f64] {
        self.layer_pre.last().expect("at least one layer")
    }

    /// Re-evaluates the final affine map on the recorded head activations.
    pub fn replay_head(&self, params: &FnoParams) -> Result<Vec<f64>> {
        if params.cfg != self.cfg {
            return Err(Error::TapeMismatch);
        }
        let mut out = vec![0.0; self.n];
        head2(params, &self.head_act, self.n, &mut out);
        Ok(out)
    }
}

fn head2(params: &FnoParams, act: &[f64], n: usize, out: &mut [f64]) {
    let bias = params.head2_bias()[0];
    out.iter_mut().for_each(|o| *o = bias);
    for (row, &b) in act.chunks_exact(n).zip(params.head2_weight()) {
        axpy(b, row, out);
    }
}

#[inline]
fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

fn check_finite(values: &[f64], layer: usize) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteActivation { layer })
    }
}

fn check_input(params: &FnoParams, u0: &RealField) -> Result<()> {
    params.cfg.check_grid(u0.grid())
}

/// Per-point input features, `[in_channels][n]`.
fn features(cfg: &FnoConfig, u0: &RealField) -> Vec<f64> {
    let mut f = Vec::with_capacity(cfg.in_channels * u0.grid().len());
    f.extend_from_slice(u0.values());
    if cfg.in_channels == 2 {
        f.extend(u0.grid().points());
    }
    f
}

/// Spectral branch of layer `layer` applied to `input` (`[width][n]`).
/// Returns the branch output `[width][n]` and the retained input spectra.
fn spectral_conv(params: &FnoParams, layer: usize, input: &[f64], fft: &RealFft) -> (Vec<f64>, Vec<Complex64>) {
    let (w, m) = (params.cfg.width, params.cfg.modes);
    let n = fft.len();
    let zero = Complex64::new(0.0, 0.0);
    let mut full = vec![zero; fft.spectrum_len()];
    let mut spectra = vec![zero; w * m];
    for (c, row) in input.chunks_exact(n).enumerate() {
        fft.forward(row, &mut full);
        spectra[c * m..(c + 1) * m].copy_from_slice(&full[..m]);
    }
    let mut mixed = vec![zero; w * m];
    let weights = params.spectral_weight(layer);
    for c in 0..w {
        let v = &spectra[c * m..(c + 1) * m];
        for o in 0..w {
            let r = &weights[2 * (c * w + o) * m..2 * (c * w + o + 1) * m];
            let y = &mut mixed[o * m..(o + 1) * m];
            for k in 0..m {
                y[k] += Complex64::new(r[2 * k], r[2 * k + 1]) * v[k];
            }
        }
    }
    let mut out = vec![0.0; w * n];
    for (o, row) in out.chunks_exact_mut(n).enumerate() {
        full.iter_mut().for_each(|c| *c = zero);
        full[..m].copy_from_slice(&mixed[o * m..(o + 1) * m]);
        fft.inverse(&full, row);
    }
    (out, spectra)
}

/// The spectral branch of one Fourier layer in isolation, on a
/// `[width][n]` input. Exposed for checking truncation behaviour.
pub fn spectral_branch(params: &FnoParams, layer: usize, input: &[f64], grid: PeriodicGrid) -> Result<Vec<f64>> {
    params.cfg.check_grid(grid)?;
    if layer >= params.cfg.layers {
        return Err(Error::InvalidArgument(format!("layer {layer} out of range")));
    }
    if input.len() != params.cfg.width * grid.len() {
        return Err(Error::LengthMismatch {
            expected: params.cfg.width * grid.len(),
            got: input.len(),
        });
    }
    Ok(spectral_conv(params, layer, input, &grid.fft()).0)
}

/// Evaluates the operator on `u0`, recording a tape for [`backward`].
///
/// Non-finite intermediates are reported with their stage: 0 is the lift,
/// `1..=layers` the Fourier layers and `layers + 1` the head.
pub fn forward_tape(params: &FnoParams, u0: &RealField) -> Result<(RealField, Tape)> {
    check_input(params, u0)?;
    let cfg = params.cfg;
    let grid = u0.grid();
    let n = grid.len();
    let w = cfg.width;
    let fft = grid.fft();
    let feats = features(&cfg, u0);

    let mut v = vec![0.0; w * n];
    let lift_w = params.lift_weight();
    for (c, (row, &b)) in v.chunks_exact_mut(n).zip(params.lift_bias()).enumerate() {
        row.iter_mut().for_each(|x| *x = b);
        for (f, feat) in feats.chunks_exact(n).enumerate() {
            axpy(lift_w[c * cfg.in_channels + f], feat, row);
        }
    }
    check_finite(&v, 0)?;

    let mut layer_inputs = Vec::with_capacity(cfg.layers);
    let mut layer_spectra = Vec::with_capacity(cfg.layers);
    let mut layer_pre = Vec::with_capacity(cfg.layers);
    for l in 0..cfg.layers {
        let (mut z, spectra) = spectral_conv(params, l, &v, &fft);
        let weight = params.pointwise_weight(l);
        for (o, (row, &b)) in z.chunks_exact_mut(n).zip(params.pointwise_bias(l)).enumerate() {
            row.iter_mut().for_each(|x| *x += b);
            for (c, vin) in v.chunks_exact(n).enumerate() {
                axpy(weight[o * w + c], vin, row);
            }
        }
        check_finite(&z, l + 1)?;
        let next = if l + 1 < cfg.layers {
            z.iter().map(|&x| cfg.activation.apply(x)).collect()
        } else {
            z.clone()
        };
        layer_inputs.push(core::mem::replace(&mut v, next));
        layer_spectra.push(spectra);
        layer_pre.push(z);
    }

    let hdim = cfg.fc_hidden;
    let mut head_pre = vec![0.0; hdim * n];
    let h1w = params.head1_weight();
    for (p, (row, &b)) in head_pre.chunks_exact_mut(n).zip(params.head1_bias()).enumerate() {
        row.iter_mut().for_each(|x| *x = b);
        for (c, vin) in v.chunks_exact(n).enumerate() {
            axpy(h1w[p * w + c], vin, row);
        }
    }
    let head_act: Vec<f64> = head_pre.iter().map(|&x| cfg.activation.apply(x)).collect();
    let mut output = vec![0.0; n];
    head2(params, &head_act, n, &mut output);
    check_finite(&output, cfg.layers + 1)?;

    let field = RealField::new(grid, output.clone())?;
    Ok((
        field,
        Tape {
            cfg,
            n,
            features: feats,
            layer_inputs,
            layer_spectra,
            layer_pre,
            head_pre,
            head_act,
            output,
        },
    ))
}

pub fn forward(params: &FnoParams, u0: &RealField) -> Result<RealField> {
    forward_tape(params, u0).map(|(out, _)| out)
}

/// Gradient of `sum_i cotangent[i] * output[i]` with respect to every
/// parameter, in the [`FnoParams`] layout.
pub fn backward(params: &FnoParams, tape: &Tape, cotangent: &[f64]) -> Result<FnoParams> {
    let mut grad = FnoParams::zeros(&params.cfg)?;
    backward_into(params, tape, cotangent, grad.as_mut_slice())?;
    Ok(grad)
}

/// Like [`backward`] but adds the gradient into `grad`.
pub fn backward_into(params: &FnoParams, tape: &Tape, cotangent: &[f64], grad: &mut [f64]) -> Result<()> {
    if params.cfg != tape.cfg || grad.len() != params.len() {
        return Err(Error::TapeMismatch);
    }
    let n = tape.n;
    if cotangent.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: cotangent.len(),
        });
    }
    let cfg = params.cfg;
    let layout = &params.layout;
    let (w, m, hdim) = (cfg.width, cfg.modes, cfg.fc_hidden);
    let act = cfg.activation;

    // head2
    grad[layout.head2_bias.start] += cotangent.iter().sum::<f64>();
    let head2_w = params.head2_weight();
    let mut g_head = vec![0.0; hdim * n];
    for (p, row) in tape.head_act.chunks_exact(n).enumerate() {
        grad[layout.head2_weight.start + p] += dot(cotangent, row);
        let gp = &mut g_head[p * n..(p + 1) * n];
        for ((g, &c), &pre) in gp.iter_mut().zip(cotangent).zip(&tape.head_pre[p * n..(p + 1) * n]) {
            *g = head2_w[p] * c * act.derivative(pre);
        }
    }

    // head1
    let trunk = tape.trunk_output();
    let h1w = params.head1_weight();
    let mut gv = vec![0.0; w * n];
    for (p, gp) in g_head.chunks_exact(n).enumerate() {
        grad[layout.head1_bias.start + p] += gp.iter().sum::<f64>();
        for c in 0..w {
            let vin = &trunk[c * n..(c + 1) * n];
            grad[layout.head1_weight.start + p * w + c] += dot(gp, vin);
            axpy(h1w[p * w + c], gp, &mut gv[c * n..(c + 1) * n]);
        }
    }

    let fft = RealFft::new(n);
    let zero = Complex64::new(0.0, 0.0);
    let mut full = vec![zero; fft.spectrum_len()];
    let inv_n = 1.0 / n as f64;
    for l in (0..cfg.layers).rev() {
        let slots = &layout.layers[l];
        // through the activation that produced the next layer's input
        let mut gz = gv;
        if l + 1 < cfg.layers {
            for (g, &z) in gz.iter_mut().zip(&tape.layer_pre[l]) {
                *g *= act.derivative(z);
            }
        }
        let vin = &tape.layer_inputs[l];
        let weight = params.pointwise_weight(l);
        let mut gprev = vec![0.0; w * n];
        for (o, go) in gz.chunks_exact(n).enumerate() {
            grad[slots.bias.start + o] += go.iter().sum::<f64>();
            for c in 0..w {
                grad[slots.weight.start + o * w + c] += dot(go, &vin[c * n..(c + 1) * n]);
                axpy(weight[o * w + c], go, &mut gprev[c * n..(c + 1) * n]);
            }
        }

        // spectral branch: out_o = Re sum_k alpha_k Y_ok e^{2 pi i k x}, alpha_0 = 1, alpha_k = 2
        let mut g_y = vec![zero; w * m];
        for (o, go) in gz.chunks_exact(n).enumerate() {
            fft.forward(go, &mut full);
            for k in 0..m {
                let alpha = if k == 0 { 1.0 } else { 2.0 };
                g_y[o * m + k] = full[k] * (alpha * n as f64);
            }
        }
        let spectra = &tape.layer_spectra[l];
        let mut g_v = vec![zero; w * m];
        for c in 0..w {
            let v = &spectra[c * m..(c + 1) * m];
            for o in 0..w {
                let base = slots.spectral.start + 2 * (c * w + o) * m;
                for k in 0..m {
                    let gy = g_y[o * m + k];
                    let gr = gy * v[k].conj();
                    grad[base + 2 * k] += gr.re;
                    grad[base + 2 * k + 1] += gr.im;
                    g_v[c * m + k] += params.spectral_at(l, c, o, k).conj() * gy;
                }
            }
        }
        // adjoint of the scaled, truncated forward transform
        for c in 0..w {
            full.iter_mut().for_each(|x| *x = zero);
            for k in 0..m {
                let alpha = if k == 0 { 1.0 } else { 2.0 };
                full[k] = g_v[c * m + k] * (inv_n / alpha);
            }
            let mut row = vec![0.0; n];
            fft.inverse(&full, &mut row);
            axpy(1.0, &row, &mut gprev[c * n..(c + 1) * n]);
        }
        gv = gprev;
    }

    // lift
    for (c, gc) in gv.chunks_exact(n).enumerate() {
        grad[layout.lift_bias.start + c] += gc.iter().sum::<f64>();
        for (f, feat) in tape.features.chunks_exact(n).enumerate() {
            grad[layout.lift_weight.start + c * cfg.in_channels + f] += dot(gc, feat);
        }
    }
    if let Some(index) = grad.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFiniteGradient { index });
    }
    Ok(())
}

/// Worst relative discrepancy between [`backward`] and central differences
/// of `J = sum_b sum_i g_bi * output_bi` over a fixed random batch.
///
/// Checks every bias plus a random subset of at least 200 other parameters
/// (all of them when fewer exist). The discrepancy of one entry is
/// `|analytic - fd| / max(|analytic|, |fd|, 1e-3 * max_j |analytic_j|)`, the
/// floor keeping round-off on near-zero entries from dominating.
pub fn gradient_check(cfg: &FnoConfig, seed: u64, n: usize, eps: f64) -> Result<f64> {
    const BATCH: usize = 2;
    const SUBSET: usize = 200;
    let grid = PeriodicGrid::new(n)?;
    cfg.check_grid(grid)?;
    let mut params = init_params(cfg, seed)?;
    let mut rng = keyed_rng(seed, Domain::GradientCheck, 0);
    for i in params.bias_indices() {
        params.as_mut_slice()[i] = rng.random_range(-0.2..0.2);
    }
    let mut inputs = Vec::with_capacity(BATCH);
    let mut cotangents = Vec::with_capacity(BATCH);
    for _ in 0..BATCH {
        let amps: Vec<(f64, f64)> = (0..3).map(|_| (rng.random_range(-1.0..1.0), rng.random_range(0.0..2.0 * PI))).collect();
        let u0 = RealField::from_fn(grid, |x| {
            amps.iter()
                .enumerate()
                .map(|(k, (a, ph))| a * libm::sin(2.0 * PI * (k + 1) as f64 * x + ph))
                .sum()
        })?;
        inputs.push(u0);
        cotangents.push((0..n).map(|_| rng.random_range(-1.0..1.0) / n as f64).collect::<Vec<f64>>());
    }

    let objective = |p: &FnoParams| -> Result<f64> {
        let mut j = 0.0;
        for (u0, g) in inputs.iter().zip(&cotangents) {
            j += dot(forward(p, u0)?.values(), g);
        }
        Ok(j)
    };
    let mut analytic = vec![0.0; params.len()];
    for (u0, g) in inputs.iter().zip(&cotangents) {
        let (_, tape) = forward_tape(&params, u0)?;
        backward_into(&params, &tape, g, &mut analytic)?;
    }

    let mut indices = params.bias_indices();
    let others: Vec<usize> = (0..params.len()).filter(|i| !indices.contains(i)).collect();
    if others.len() <= SUBSET {
        indices.extend(others);
    } else {
        let mut pool = others;
        for _ in 0..SUBSET {
            let pick = rng.random_range(0..pool.len());
            indices.push(pool.swap_remove(pick));
        }
    }

    let mut fd = Vec::with_capacity(indices.len());
    for &i in &indices {
        let orig = params.as_slice()[i];
        params.as_mut_slice()[i] = orig + eps;
        let plus = objective(&params)?;
        params.as_mut_slice()[i] = orig - eps;
        let minus = objective(&params)?;
        params.as_mut_slice()[i] = orig;
        fd.push((plus - minus) / (2.0 * eps));
    }
    let scale = indices.iter().fold(0.0, |m: f64, &i| m.max(analytic[i].abs()));
    let floor = 1e-3 * scale;
    Ok(indices
        .iter()
        .zip(&fd)
        .map(|(&i, &f)| {
            let a = analytic[i];
            let denom = a.abs().max(f.abs()).max(floor);
            if denom == 0.0 {
                0.0
            } else {
                (a - f).abs() / denom
            }
        })
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> PeriodicGrid {
        PeriodicGrid::new(n).unwrap()
    }

    fn smooth_input(n: usize) -> RealField {
        RealField::from_fn(grid(n), |x| {
            0.05 * libm::sin(2.0 * PI * x) - 0.02 * libm::cos(6.0 * PI * x + 0.3) + 0.01 * libm::sin(16.0 * PI * x)
        })
        .unwrap()
    }

    #[test]
    fn parameter_counts() {
        let want = [74_209, 237_137, 549_569, 1_819_553];
        for (cfg, n) in FnoConfig::sweep_defaults().iter().zip(want) {
            assert_eq!(param_count(cfg), n);
            assert_eq!(FnoParams::zeros(cfg).unwrap().len(), n);
        }
        assert_eq!(param_count(&FnoConfig::new(1, 1)), 404);
    }

    #[test]
    fn only_two_input_channels_reproduce_the_counts() {
        let want = [74_209, 237_137, 549_569, 1_819_553];
        let matching: Vec<usize> = (1..6)
            .filter(|&c| {
                FnoConfig::sweep_defaults()
                    .iter()
                    .zip(want)
                    .all(|(cfg, n)| param_count(&FnoConfig { in_channels: c, ..*cfg }) == n)
            })
            .collect();
        assert_eq!(matching, [2]);
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let cfg = FnoConfig::new(4, 8);
        let a = init_params(&cfg, 5).unwrap();
        assert_eq!(a, init_params(&cfg, 5).unwrap());
        assert_ne!(a, init_params(&cfg, 6).unwrap());
        assert_eq!(a.len(), param_count(&cfg));
        let bound = 1.0 / 64.0;
        for l in 0..cfg.layers {
            assert!(a.spectral_weight(l).iter().all(|v| v.abs() < bound));
        }
        for i in a.bias_indices() {
            assert_eq!(a.as_slice()[i], 0.0);
        }
        assert!(a.head1_weight().iter().all(|v| v.abs() <= 1.0 / libm::sqrt(8.0)));
    }

    #[test]
    fn config_validation() {
        assert!(FnoConfig { in_channels: 3, ..FnoConfig::new(2, 2) }.validate().is_err());
        assert!(FnoConfig { layers: 0, ..FnoConfig::new(2, 2) }.validate().is_err());
        assert!(FnoConfig { out_channels: 2, ..FnoConfig::new(2, 2) }.validate().is_err());
        let p = init_params(&FnoConfig::new(9, 2), 0).unwrap();
        assert!(matches!(
            forward(&p, &smooth_input(16)),
            Err(Error::TooManyModes { modes: 9, limit: 8 })
        ));
        assert!(forward(&init_params(&FnoConfig::new(8, 2), 0).unwrap(), &smooth_input(16)).is_ok());
    }

    #[test]
    fn collapses_to_final_bias() {
        let cfg = FnoConfig::new(3, 4);
        let mut p = FnoParams::zeros(&cfg).unwrap();
        p.head2_bias_mut()[0] = 0.625;
        let out = forward(&p, &smooth_input(32)).unwrap();
        assert!(out.values().iter().all(|&v| v == 0.625));
    }

    #[test]
    fn forward_is_deterministic_and_tape_replays() {
        let cfg = FnoConfig::new(4, 6);
        let p = init_params(&cfg, 1).unwrap();
        let u0 = smooth_input(64);
        let a = forward(&p, &u0).unwrap();
        let (b, tape) = forward_tape(&p, &u0).unwrap();
        assert_eq!(a, b);
        let replay = tape.replay_head(&p).unwrap();
        assert!(replay.iter().zip(a.values()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn head_is_linear_on_frozen_activations() {
        let cfg = FnoConfig::new(4, 6);
        let p = init_params(&cfg, 2).unwrap();
        let (out, tape) = forward_tape(&p, &smooth_input(32)).unwrap();
        let lambda = -2.5;
        let mut scaled = p.clone();
        scaled.head2_weight_mut().iter_mut().for_each(|v| *v *= lambda);
        scaled.head2_bias_mut().iter_mut().for_each(|v| *v *= lambda);
        let replay = tape.replay_head(&scaled).unwrap();
        for (r, o) in replay.iter().zip(out.values()) {
            assert!((r - lambda * o).abs() <= 1e-14 * (1.0 + o.abs()));
        }
    }

    #[test]
    fn spectral_branch_ignores_modes_above_cutoff() {
        let cfg = FnoConfig::new(4, 3);
        let p = init_params(&cfg, 3).unwrap();
        let g = grid(32);
        let low: Vec<f64> = (0..3)
            .flat_map(|c| g.points().map(move |x| libm::sin(2.0 * PI * x + c as f64) + 0.3 * libm::cos(6.0 * PI * x)))
            .collect();
        let high: Vec<f64> = low
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let x = g.point(i % 32);
                v + 0.7 * libm::sin(2.0 * PI * 5.0 * x) - 0.4 * libm::cos(2.0 * PI * 11.0 * x)
            })
            .collect();
        let a = spectral_branch(&p, 1, &low, g).unwrap();
        let b = spectral_branch(&p, 1, &high, g).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-15, "{x} {y}");
        }
    }

    #[test]
    fn zero_cotangent_gives_zero_gradient() {
        let cfg = FnoConfig::new(2, 3);
        let p = init_params(&cfg, 4).unwrap();
        let (_, tape) = forward_tape(&p, &smooth_input(16)).unwrap();
        let g = backward(&p, &tape, &[0.0; 16]).unwrap();
        assert!(g.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn head_bias_gradient_is_cotangent_sum() {
        let cfg = FnoConfig::new(2, 3);
        let p = init_params(&cfg, 4).unwrap();
        let u0 = smooth_input(16);
        let (_, tape) = forward_tape(&p, &u0).unwrap();
        let cot: Vec<f64> = (0..16).map(|i| 0.1 * i as f64 - 0.4).collect();
        let g = backward(&p, &tape, &cot).unwrap();
        let want: f64 = cot.iter().sum();
        assert!((g.head2_bias()[0] - want).abs() < 1e-14);
        // the output shifts one-for-one with the bias, so finite differences agree
        let mut q = p.clone();
        q.head2_bias_mut()[0] += 1e-3;
        let shifted = forward(&q, &u0).unwrap();
        let fd: f64 = shifted
            .values()
            .iter()
            .zip(tape.output())
            .zip(&cot)
            .map(|((a, b), c)| (a - b) / 1e-3 * c)
            .sum();
        assert!((fd - want).abs() < 1e-9);
    }

    #[test]
    fn backward_rejects_mismatched_tape() {
        let p = init_params(&FnoConfig::new(2, 3), 0).unwrap();
        let q = init_params(&FnoConfig::new(2, 4), 0).unwrap();
        let (_, tape) = forward_tape(&p, &smooth_input(16)).unwrap();
        assert_eq!(backward(&q, &tape, &[0.0; 16]).unwrap_err(), Error::TapeMismatch);
        assert!(backward(&p, &tape, &[0.0; 8]).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let small = gradient_check(&FnoConfig::new(2, 4), 0, 32, 1e-6).unwrap();
        assert!(small <= 1e-5, "{small}");
        let tiny = gradient_check(&FnoConfig::new(1, 1), 0, 8, 1e-6).unwrap();
        assert!(tiny <= 1e-6, "{tiny}");
    }

    #[test]
    fn relu_gradients_match_away_from_kinks() {
        let cfg = FnoConfig { activation: Activation::Relu, ..FnoConfig::new(2, 3) };
        let d = gradient_check(&cfg, 1, 16, 1e-7).unwrap();
        assert!(d <= 1e-4, "{d}");
    }

    #[test]
    fn finite_difference_error_is_second_order() {
        let cfg = FnoConfig::new(2, 4);
        let eps = [1e-3, 2e-3, 4e-3, 8e-3];
        let xs: Vec<f64> = eps.iter().map(|e| libm::log(*e)).collect();
        let ys: Vec<f64> = eps
            .iter()
            .map(|&e| libm::log(gradient_check(&cfg, 0, 32, e).unwrap()))
            .collect();
        let slope = crate::regression::ols(&xs, &ys).slope;
        assert!((1.7..=2.3).contains(&slope), "{slope} {ys:?}");
    }

    #[test]
    fn resolution_invariance_on_bandlimited_input() {
        for cfg in FnoConfig::sweep_defaults() {
            let p = init_params(&cfg, 7).unwrap();
            let f = |x: f64| 0.04 * libm::sin(2.0 * PI * x) + 0.01 * libm::cos(2.0 * PI * 8.0 * x + 0.2);
            let coarse = forward(&p, &RealField::from_fn(grid(256), f).unwrap()).unwrap();
            let fine = forward(&p, &RealField::from_fn(grid(512), f).unwrap()).unwrap();
            let worst = coarse
                .values()
                .iter()
                .enumerate()
                .map(|(i, v)| (v - fine.values()[2 * i]).abs())
                .fold(0.0, f64::max);
            assert!(worst <= 1e-6, "{cfg:?}: {worst}");
        }
    }
}
