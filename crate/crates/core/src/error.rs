use crate::vdna::SpecId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("calibration source yielded no images")]
    CalibrationEmpty,

    #[error("invalid activation for neuron {neuron} in image {image}")]
    InvalidActivation { neuron: usize, image: usize },

    #[error("histogram spec mismatch: expected {expected}, found {found}")]
    SpecMismatch { expected: SpecId, found: SpecId },

    #[error("shape error: {0}")]
    Shape(String),

    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("graph error: {0}")]
    Graph(String),

    #[error("training data error: {0}")]
    TrainingData(String),

    #[error("selection error: {0}")]
    Selection(String),

    #[error("descriptor database is empty")]
    EmptyDatabase,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable category name, used by the CLI when reporting failures.
    pub fn name(&self) -> &'static str {
        match self {
            Error::CalibrationEmpty => "CalibrationEmpty",
            Error::InvalidActivation { .. } => "InvalidActivation",
            Error::SpecMismatch { .. } => "SpecMismatch",
            Error::Shape(_) => "ShapeError",
            Error::Format { .. } => "FormatError",
            Error::Graph(_) => "GraphError",
            Error::TrainingData(_) => "TrainingDataError",
            Error::Selection(_) => "SelectionError",
            Error::EmptyDatabase => "EmptyDatabase",
            Error::Config(_) => "ConfigError",
            Error::Io(_) => "IoError",
        }
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn format(offset: u64, msg: impl Into<String>) -> Self {
        Error::Format { offset, message: msg.into() }
    }
}
