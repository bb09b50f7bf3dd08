use std::fmt;

/// Processing stage of the constellation sanitizer, used to tag errors that
/// escape [`crate::sanitizer::sanitize_window`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Filter,
    BiasCorrection,
    OriginDiscard,
    OutlierRemoval,
    Projection,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Stage::Filter => "filter",
            Stage::BiasCorrection => "bias-correction",
            Stage::OriginDiscard => "origin-discard",
            Stage::OutlierRemoval => "outlier-removal",
            Stage::Projection => "projection",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("subcarrier set is empty")]
    EmptySubcarrierSet,
    #[error("sample rate {sample_rate_hz} Hz is below the required {required_hz} Hz")]
    SampleRateTooLow { sample_rate_hz: f64, required_hz: f64 },
    #[error("trajectory is not defined at t = {t_s} s")]
    TrajectoryOutOfRange { t_s: f64 },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("sample rate or start time mismatch between signals")]
    RateMismatch,
    #[error("cutoff {cutoff_hz} Hz must lie in (0, {nyquist_hz}) Hz")]
    CutoffAboveNyquist { cutoff_hz: f64, nyquist_hz: f64 },
    #[error("filter order must be at least 1")]
    OrderZero,
    #[error("sample {index} has zero magnitude; its phase is undefined")]
    ZeroMagnitudeSample { index: usize },
    #[error("sequence of {len} samples is too short; need more than {needed}")]
    SequenceTooShort { len: usize, needed: usize },
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("frame is empty")]
    EmptyFrame,
    #[error("{channels} channels but {antennas} receive antennas")]
    ChannelGeometryMismatch { channels: usize, antennas: usize },
    #[error("timestamp {t_s} s is outside the stream span [{start_s}, {end_s}]")]
    TimestampOutOfRange { t_s: f64, start_s: f64, end_s: f64 },
    #[error("patch size {patch} does not divide {height}x{width}")]
    PatchSizeIndivisible { patch: usize, height: usize, width: usize },
    #[error("dimensions are not divisible: {0}")]
    IndivisibleDims(String),
    #[error("target contains a non-binary value at index {index}")]
    NonBinaryTarget { index: usize },
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("person list is empty")]
    EmptyPersonList,
    #[error("raster dimensions differ: {pred:?} vs {gt:?}")]
    RasterMismatch { pred: (usize, usize), gt: (usize, usize) },
    #[error("score list is empty")]
    EmptyScoreList,
    #[error("no visible keypoints")]
    NoVisibleKeypoints,
    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn at(self, stage: Stage) -> Error {
        Error::Stage { stage, source: Box::new(self) }
    }

    /// The innermost error, with any stage tags peeled off.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
