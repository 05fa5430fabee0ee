//! H1 training: loss and its exact cotangent, Adam, the epoch loop and
//! split evaluation.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::datagen::{Dataset, Sample};
use crate::error::{Error, Result};
use crate::fno::{backward_into, forward, forward_tape, init_params, FnoConfig, FnoParams};
use crate::rng::{keyed_rng, Domain};
use crate::spectral::{differentiate, h1_fd_norm_sq_slice, FdStencil, RealField};

/// A test loss more than this factor above the previous epoch's is flagged.
pub const INSTABILITY_RATIO: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Seeds parameter initialization and mini-batch shuffling.
    pub seed: u64,
    /// Checkpoint every this many epochs; 0 disables periodic checkpoints.
    pub checkpoint_every: usize,
    pub stencil: FdStencil,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 16,
            adam: AdamConfig::default(),
            seed: 0,
            checkpoint_every: 0,
            stencil: FdStencil::Central,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, n_train: usize) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidArgument("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 || self.batch_size > n_train {
            return Err(Error::InvalidArgument(format!(
                "batch size must lie in 1..={n_train}, got {}",
                self.batch_size
            )));
        }
        let a = &self.adam;
        if !(a.lr >= 0.0 && a.lr.is_finite()) {
            return Err(Error::InvalidArgument(format!("learning rate must be nonnegative, got {}", a.lr)));
        }
        if !((0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.eps > 0.0) {
            return Err(Error::InvalidArgument("Adam needs beta1, beta2 in [0, 1) and eps > 0".into()));
        }
        Ok(())
    }
}

fn check_pairs(pred: &[RealField], target: &[RealField]) -> Result<()> {
    if pred.len() != target.len() {
        return Err(Error::LengthMismatch {
            expected: target.len(),
            got: pred.len(),
        });
    }
    if pred.is_empty() {
        return Err(Error::EmptySplit);
    }
    for (p, t) in pred.iter().zip(target) {
        p.check_grid(t)?;
    }
    Ok(())
}

/// Mean over the batch of the discrete H1 norm squared of `pred - target`.
pub fn h1_loss(pred: &[RealField], target: &[RealField]) -> Result<f64> {
    h1_loss_with(pred, target, FdStencil::Central)
}

pub fn h1_loss_with(pred: &[RealField], target: &[RealField], stencil: FdStencil) -> Result<f64> {
    check_pairs(pred, target)?;
    let mut total = 0.0;
    for (p, t) in pred.iter().zip(target) {
        total += sample_loss(p.values(), t.values(), p.grid().spacing(), stencil);
    }
    Ok(total / pred.len() as f64)
}

fn sample_loss(pred: &[f64], target: &[f64], h: f64, stencil: FdStencil) -> f64 {
    let diff: Vec<f64> = pred.iter().zip(target).map(|(a, b)| a - b).collect();
    let mut scratch = vec![0.0; diff.len()];
    h1_fd_norm_sq_slice(&diff, h, stencil, &mut scratch)
}

/// Writes `d(loss)/d(pred)` for one sample of a batch of `batch` samples:
/// `(2h / batch) (e + D^T D e)` with `e = pred - target`.
fn sample_cotangent(pred: &[f64], target: &[f64], h: f64, batch: usize, stencil: FdStencil, out: &mut [f64]) {
    let n = pred.len();
    let e: Vec<f64> = pred.iter().zip(target).map(|(a, b)| a - b).collect();
    let mut de = vec![0.0; n];
    stencil.apply(&e, h, &mut de);
    stencil.apply_adjoint(&de, h, out);
    let scale = 2.0 * h / batch as f64;
    for (o, ei) in out.iter_mut().zip(&e) {
        *o = scale * (ei + *o);
    }
}

/// Exact gradient of [`h1_loss`] with respect to each prediction.
pub fn h1_loss_gradient(pred: &[RealField], target: &[RealField]) -> Result<Vec<RealField>> {
    h1_loss_gradient_with(pred, target, FdStencil::Central)
}

pub fn h1_loss_gradient_with(pred: &[RealField], target: &[RealField], stencil: FdStencil) -> Result<Vec<RealField>> {
    check_pairs(pred, target)?;
    pred.iter()
        .zip(target)
        .map(|(p, t)| {
            let mut out = vec![0.0; p.values().len()];
            sample_cotangent(p.values(), t.values(), p.grid().spacing(), pred.len(), stencil, &mut out);
            RealField::new(p.grid(), out)
        })
        .collect()
}

/// First and second moment estimates in the parameter layout.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }
}

/// One bias-corrected Adam update. Leaves everything untouched when a
/// gradient entry is not finite.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, cfg: &AdamConfig) -> Result<()> {
    if grads.len() != params.len() || state.m.len() != params.len() || state.v.len() != params.len() {
        return Err(Error::LengthMismatch {
            expected: params.len(),
            got: grads.len(),
        });
    }
    if let Some(index) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFiniteGradient { index });
    }
    state.t += 1;
    let t = state.t as f64;
    let c1 = 1.0 - libm::pow(cfg.beta1, t);
    let c2 = 1.0 - libm::pow(cfg.beta2, t);
    for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= cfg.lr * m_hat / (libm::sqrt(v_hat) + cfg.eps);
    }
    Ok(())
}

/// Loss statistics of a model on one split.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    /// Mean discrete H1 error squared.
    pub mean_loss: f64,
    /// `sqrt(sum ||pred - truth||^2 / sum ||truth||^2)` in the discrete H1 norm.
    pub relative_error: f64,
    /// Per-sample discrete H1 error squared.
    pub per_sample: Vec<f64>,
}

pub fn evaluate(params: &FnoParams, samples: &[Sample]) -> Result<Evaluation> {
    evaluate_with(params, samples, FdStencil::Central)
}

pub fn evaluate_with(params: &FnoParams, samples: &[Sample], stencil: FdStencil) -> Result<Evaluation> {
    if samples.is_empty() {
        return Err(Error::EmptySplit);
    }
    let mut per_sample = Vec::with_capacity(samples.len());
    let mut truth_sq = 0.0;
    for s in samples {
        let pred = forward(params, &s.u0)?;
        s.target.check_grid(&pred)?;
        let h = pred.grid().spacing();
        per_sample.push(sample_loss(pred.values(), s.target.values(), h, stencil));
        let mut scratch = vec![0.0; pred.values().len()];
        truth_sq += h1_fd_norm_sq_slice(s.target.values(), h, stencil, &mut scratch);
    }
    let err_sq: f64 = per_sample.iter().sum();
    let relative_error = if truth_sq > 0.0 { libm::sqrt(err_sq / truth_sq) } else { 0.0 };
    Ok(Evaluation {
        mean_loss: err_sq / samples.len() as f64,
        relative_error,
        per_sample,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub test_loss: f64,
    pub test_relative_error: f64,
    /// Seconds since training started, as reported by the observer.
    pub wall_clock: f64,
    /// Test loss jumped by more than [`INSTABILITY_RATIO`] from the previous epoch.
    pub unstable: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Abort {
    pub epoch: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LearningCurve {
    pub records: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_test_loss: f64,
    pub aborted: Option<Abort>,
}

impl LearningCurve {
    pub fn final_record(&self) -> Option<&EpochRecord> {
        self.records.last()
    }

    pub fn best_record(&self) -> Option<&EpochRecord> {
        self.records.iter().find(|r| r.epoch == self.best_epoch)
    }

    pub fn unstable_epochs(&self) -> impl Iterator<Item = usize> + '_ {
        self.records.iter().filter(|r| r.unstable).map(|r| r.epoch)
    }

    fn push(&mut self, mut record: EpochRecord) -> bool {
        if let Some(prev) = self.records.last() {
            record.unstable = record.test_loss > INSTABILITY_RATIO * prev.test_loss;
        }
        let improved = self.records.is_empty() || record.test_loss < self.best_test_loss;
        if improved {
            self.best_epoch = record.epoch;
            self.best_test_loss = record.test_loss;
        }
        self.records.push(record);
        improved
    }
}

/// Hooks into the training loop. The loop itself performs no IO.
pub trait TrainObserver {
    /// Seconds elapsed since training began.
    fn elapsed_seconds(&mut self) -> f64 {
        0.0
    }

    /// Called after every completed epoch. `checkpoint_due` follows the
    /// configured cadence; `is_best` marks a new best test loss.
    fn on_epoch(&mut self, _record: &EpochRecord, _params: &FnoParams, _is_best: bool, _checkpoint_due: bool) {}
}

/// Observer that ignores everything.
#[derive(Debug, Default, Clone, Copy)]
pub struct Silent;

impl TrainObserver for Silent {}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub final_params: FnoParams,
    pub best_params: FnoParams,
    pub curve: LearningCurve,
}

/// Trains from a seeded initialization.
pub fn train(dataset: &Dataset, fno: &FnoConfig, cfg: &TrainConfig, observer: &mut impl TrainObserver) -> Result<TrainOutcome> {
    let init = init_params(fno, cfg.seed)?;
    train_from(dataset, init, cfg, observer)
}

/// Trains starting from `params`. Numerical failures (non-finite gradients
/// or losses) end the run early and are recorded in `curve.aborted`.
pub fn train_from(
    dataset: &Dataset,
    params: FnoParams,
    cfg: &TrainConfig,
    observer: &mut impl TrainObserver,
) -> Result<TrainOutcome> {
    params.config().check_grid(dataset.grid())?;
    cfg.validate(dataset.train.len())?;
    if dataset.test.is_empty() {
        return Err(Error::EmptySplit);
    }
    let mut params = params;
    let mut best = params.clone();
    let mut state = AdamState::new(params.len());
    let mut curve = LearningCurve::default();
    let mut grad = vec![0.0; params.len()];
    let n = dataset.grid().len();
    let h = dataset.grid().spacing();
    let mut cot = vec![0.0; n];
    let mut order: Vec<usize> = (0..dataset.train.len()).collect();

    'epochs: for epoch in 1..=cfg.epochs {
        order.sort_unstable();
        order.shuffle(&mut keyed_rng(cfg.seed, Domain::Shuffle, epoch as u64));
        for batch in order.chunks(cfg.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for &i in batch {
                let sample = &dataset.train[i];
                let step = forward_tape(&params, &sample.u0).and_then(|(pred, tape)| {
                    sample_cotangent(pred.values(), sample.target.values(), h, batch.len(), cfg.stencil, &mut cot);
                    backward_into(&params, &tape, &cot, &mut grad)
                });
                if let Err(e) = step {
                    curve.aborted = Some(Abort {
                        epoch,
                        reason: format!("{e}"),
                    });
                    break 'epochs;
                }
            }
            if let Err(e) = adam_step(params.as_mut_slice(), &grad, &mut state, &cfg.adam) {
                curve.aborted = Some(Abort {
                    epoch,
                    reason: format!("{e}"),
                });
                break 'epochs;
            }
        }

        let evals = evaluate_with(&params, &dataset.train, cfg.stencil)
            .and_then(|tr| evaluate_with(&params, &dataset.test, cfg.stencil).map(|te| (tr, te)));
        let (train_eval, test_eval) = match evals {
            Ok(v) if v.0.mean_loss.is_finite() && v.1.mean_loss.is_finite() => v,
            Ok(_) => {
                curve.aborted = Some(Abort {
                    epoch,
                    reason: "non-finite loss".into(),
                });
                break;
            }
            Err(e) => {
                curve.aborted = Some(Abort {
                    epoch,
                    reason: format!("{e}"),
                });
                break;
            }
        };
        let record = EpochRecord {
            epoch,
            train_loss: train_eval.mean_loss,
            test_loss: test_eval.mean_loss,
            test_relative_error: test_eval.relative_error,
            wall_clock: observer.elapsed_seconds(),
            unstable: false,
        };
        let is_best = curve.push(record);
        if is_best {
            best.as_mut_slice().copy_from_slice(params.as_slice());
        }
        let due = cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0;
        observer.on_epoch(curve.records.last().expect("just pushed"), &params, is_best, due);
    }

    Ok(TrainOutcome {
        final_params: params,
        best_params: best,
        curve,
    })
}

/// Columns for the value/derivative comparison plot of one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Qualitative {
    pub x: Vec<f64>,
    pub u0: Vec<f64>,
    pub u_true: Vec<f64>,
    pub u_pred: Vec<f64>,
    pub du_true: Vec<f64>,
    pub du_pred: Vec<f64>,
}

impl Qualitative {
    /// `(||u_pred - u_true|| / ||u_true||, ||du_pred - du_true|| / ||du_true||)`
    /// in discrete L2.
    pub fn relative_errors(&self) -> (f64, f64) {
        let rel = |a: &[f64], b: &[f64]| {
            let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
            let den: f64 = b.iter().map(|y| y * y).sum();
            libm::sqrt(num / den)
        };
        (rel(&self.u_pred, &self.u_true), rel(&self.du_pred, &self.du_true))
    }
}

/// Prediction and spectral derivatives for one sample.
pub fn qualitative(params: &FnoParams, sample: &Sample) -> Result<Qualitative> {
    let pred = forward(params, &sample.u0)?;
    let du_true = differentiate(&sample.target, 1)?;
    let du_pred = differentiate(&pred, 1)?;
    Ok(Qualitative {
        x: sample.u0.grid().points().collect(),
        u0: sample.u0.values().to_vec(),
        u_true: sample.target.values().to_vec(),
        u_pred: pred.into_values(),
        du_true: du_true.into_values(),
        du_pred: du_pred.into_values(),
    })
}
