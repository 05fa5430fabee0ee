use alloc::string::String;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid grid size {0}: need an even number of points, at least 4")]
    InvalidGrid(usize),
    #[error("expected {expected} samples, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("grid mismatch: {0} points vs {1} points")]
    GridMismatch(usize, usize),
    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },
    #[error("spectrum violates real-input symmetry: bin {bin} has imaginary part {imag:e}")]
    NotHermitian { bin: usize, imag: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("mode count {modes} exceeds the grid's {limit} available modes")]
    TooManyModes { modes: usize, limit: usize },
    #[error("solver blew up at t = {time}")]
    BlowUp { time: f64 },
    #[error("solver failed on sample {index}: {source}")]
    SampleFailed {
        index: usize,
        #[source]
        source: alloc::boxed::Box<Error>,
    },
    #[error("non-finite activation in layer {layer}")]
    NonFiniteActivation { layer: usize },
    #[error("non-finite gradient entry at parameter {index}")]
    NonFiniteGradient { index: usize },
    #[error("tape was recorded for a different parameter configuration")]
    TapeMismatch,
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
    #[error("benchmark exponent requires s > d/2 (got s = {s}, d = {d})")]
    BelowSobolevEmbedding { s: f64, d: u32 },
    #[error("empty split")]
    EmptySplit,
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
