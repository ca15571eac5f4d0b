use std::path::PathBuf;

/// Pipeline stage tags used to locate failures in [`Error::Stage`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Classification,
    Segmentation,
    Refinement,
    Unmixing,
    ObjectResidual,
    PixelResidual,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Stage::Classification => "classification",
            Stage::Segmentation => "segmentation",
            Stage::Refinement => "class map refinement",
            Stage::Unmixing => "object-level unmixing",
            Stage::ObjectResidual => "object-level residual compensation",
            Stage::PixelResidual => "pixel-level residual compensation",
        };
        f.write_str(name)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed header {path}: {reason}")]
    MalformedHeader { path: PathBuf, reason: String },

    #[error("payload length mismatch: expected {expected} values, found {found}")]
    PayloadLengthMismatch { expected: usize, found: usize },

    #[error("non-finite value at index {index} without a nodata declaration")]
    NonFinite { index: usize },

    #[error("invalid raster: {0}")]
    InvalidRaster(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("only {found} distinct spectra available for {requested} classes")]
    TooFewSpectra { requested: usize, found: usize },

    #[error("window centered at coarse pixel ({row}, {col}) has no valid coarse pixels")]
    FullyMaskedWindow { row: usize, col: usize },

    #[error("every coarse pixel is masked")]
    FullyMaskedImage,

    #[error("bounded least squares did not converge after {iterations} iterations")]
    SolverNonConvergence { iterations: usize },

    #[error("no valid pixels to evaluate")]
    NoValidPixels,

    #[error("image {width}x{height} is smaller than the {window}x{window} window")]
    ImageTooSmall {
        width: usize,
        height: usize,
        window: usize,
    },

    #[error("infeasible scene: {0}")]
    InfeasibleScene(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("{stage} failed: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn at(self, stage: Stage) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// True for failures caused by the inputs rather than by the numerics.
    pub fn is_input_error(&self) -> bool {
        match self {
            Error::SolverNonConvergence { .. } => false,
            Error::Stage { source, .. } => source.is_input_error(),
            _ => true,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
