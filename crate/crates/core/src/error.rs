use thiserror::Error;

/// Errors shared by every module in the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("alpha {0} is outside [0, 1]")]
    AlphaOutOfRange(f64),

    #[error("base constant {name} must be nonnegative, got {value}")]
    NegativeConstant { name: &'static str, value: f64 },

    #[error("sequence must contain at least one frame")]
    EmptySequence,

    #[error("dimension {name} must be at least 1")]
    ZeroDimension { name: &'static str },

    #[error("data length {got} does not match T*H*W*d = {expected}")]
    DataLength { expected: usize, got: usize },

    #[error("frame count mismatch: features have T={features}, masks have T={masks}")]
    FrameCountMismatch { features: usize, masks: usize },

    #[error("spatial mismatch on {axis}: features have {features}, masks have {masks}")]
    SpatialMismatch {
        axis: &'static str,
        features: usize,
        masks: usize,
    },

    #[error("mask frame {frame} holds non-binary value {value} at flat index {index}")]
    NonBinaryMask {
        frame: usize,
        index: usize,
        value: f64,
    },

    #[error("non-finite feature value in frame {frame} at flat index {index}")]
    NonFiniteFeature { frame: usize, index: usize },

    #[error("grid shape mismatch: expected {expected:?}, got {got:?}")]
    GridShapeMismatch {
        expected: (usize, usize, usize),
        got: (usize, usize, usize),
    },

    #[error("prior '{prior}' needs the previous time level but none was supplied")]
    MissingPrevState { prior: &'static str },

    #[error("noise is enabled (sigma_s or sigma_b > 0) but no rng was supplied")]
    MissingRng,

    #[error("prior '{prior}' produced a non-finite value at iteration {iteration}")]
    NumericOverflow { prior: &'static str, iteration: usize },

    #[error("attention logits became non-finite in frame {frame}")]
    NonFiniteLogits { frame: usize },

    #[error("attention window is empty")]
    EmptyWindow,

    #[error("otsu needs at least 2 histogram bins, got {0}")]
    BadBins(usize),

    #[error("saliency grid holds a non-finite value at flat index {0}")]
    NonFiniteSaliency(usize),

    #[error("metric needs at least {needed} frames, got {got}")]
    TooFewFrames { needed: usize, got: usize },

    #[error("frame {0} has zero norm; cosine similarity is undefined")]
    ZeroNormFrame(usize),

    #[error("projection matrices must be d*d with d={d}, got length {got}")]
    BadProjection { d: usize, got: usize },

    #[error("subject region of frame {0} is empty")]
    EmptyRegion(usize),

    #[error("id bank is empty")]
    EmptyBank,

    #[error("schedule is invalid: {0}")]
    BadSchedule(&'static str),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// Re-tags an overflow with the virtual-time iteration it surfaced at.
    pub(crate) fn at_iteration(self, iteration: usize) -> Self {
        match self {
            Error::NumericOverflow { prior, .. } => Error::NumericOverflow { prior, iteration },
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
