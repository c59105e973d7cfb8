use std::path::PathBuf;

use crate::volume::{Role, Shape};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("header is missing required key `{0}`")]
    MissingHeaderKey(String),
    #[error("malformed header value for `{key}`: {value}")]
    InvalidHeader { key: String, value: String },
    #[error("unsupported element type `{0}`")]
    UnsupportedElementType(String),
    #[error("raw payload holds {actual} bytes, header declares {expected}")]
    SizeMismatch { expected: usize, actual: usize },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("voxel {index:?} is outside shape {shape:?}")]
    IndexOutOfBounds { index: [usize; 3], shape: Shape },
    #[error("expected a {expected} volume, found {found}")]
    RoleMismatch { expected: String, found: Role },
    #[error("shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch { left: Shape, right: Shape },
    #[error("invalid volume: {0}")]
    InvalidVolume(String),
    #[error("rotation plane {0}x{1} is not square")]
    NonSquarePlane(usize, usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("mask has no foreground voxels")]
    EmptyMask,
    #[error("skeleton graph has no nodes")]
    EmptyGraph,
    #[error("skeleton contains a cycle near voxel {0:?}")]
    CyclicSkeleton([usize; 3]),
    #[error("branch table is empty")]
    EmptyTable,
    #[error("skeleton has no foreground voxels")]
    EmptySkeleton,
    #[error("label volume holds no branches")]
    NoBranches,
    #[error("unknown branch id {0}")]
    UnknownBranch(u32),

    #[error("non-finite loss component `{0}`")]
    NonFiniteInput(&'static str),
    #[error("retain probability {0} is not in (0, 1]")]
    InvalidProbability(f64),
    #[error("dilation rates must be positive, got {0}")]
    NonPositiveDilation(i64),

    #[error("prediction stack is empty")]
    EmptyStack,
    #[error("predictor failed on iteration {iteration}: {message}")]
    PredictorFailure { iteration: usize, message: String },

    #[error("report list is empty")]
    EmptyList,

    #[error("tree does not fit: {0}")]
    DoesNotFit(String),
    #[error("point {point:?} is outside shape {shape:?}")]
    OutOfBounds { point: [i64; 3], shape: Shape },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Errors caused by the data itself rather than by I/O or bad arguments.
    pub fn is_domain(&self) -> bool {
        matches!(
            self,
            Error::EmptyMask
                | Error::EmptyGraph
                | Error::CyclicSkeleton(_)
                | Error::EmptyTable
                | Error::EmptySkeleton
                | Error::NoBranches
                | Error::UnknownBranch(_)
                | Error::EmptyStack
                | Error::PredictorFailure { .. }
                | Error::DoesNotFit(_)
        )
    }

    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}
