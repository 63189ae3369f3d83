use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid oscillator parameters: gamma={gamma}, omega0={omega0}")]
    InvalidParams { gamma: f64, omega0: f64 },

    #[error("time instants must be strictly increasing (index {index})")]
    Ordering { index: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid range: lo={lo} must be < hi={hi}")]
    Range { lo: f64, hi: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("matrix exponential overflow: norm(A t) = {0}")]
    Magnitude(f64),

    #[error("undamped resonance: drive frequency {freq} equals natural frequency with zero damping")]
    Resonance { freq: f64 },

    #[error("evaluation time {t} precedes anchor {anchor}")]
    Causality { t: f64, anchor: f64 },

    #[error("averaging window must be positive: [{start}, {end}]")]
    Window { start: f64, end: f64 },

    #[error("normal matrix is singular; raise the ridge parameter")]
    RankDeficient,

    #[error("softmax row has no valid entries")]
    Mask,

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("bank has {have} modes but polynomial degree is {need}")]
    Capacity { have: usize, need: usize },

    #[error("non-finite value in forward pass; gradient is poisoned")]
    PoisonedGradient,

    #[error("training diverged at epoch {epoch} (seed {seed})")]
    Diverged { epoch: usize, seed: u64 },

    #[error("i/o failure: {0}")]
    Io(String),

    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
