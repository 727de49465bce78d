//! Crate-wide error and result types.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    // --- NIfTI parsing/writing ---
    #[error("malformed NIfTI header: {0}")]
    MalformedHeader(String),
    #[error("unsupported NIfTI datatype code {0}")]
    UnsupportedDatatype(i16),
    #[error("expected a 3-D volume, header declares dim[0] = {0}")]
    NotThreeDimensional(i16),
    #[error("float voxel value {0} is not an integral label")]
    NonIntegralLabel(f64),
    #[error("negative voxel value {0} cannot be a label")]
    NegativeLabel(i64),
    #[error("data section truncated: need {expected} bytes, found {found}")]
    TruncatedData { expected: usize, found: usize },
    #[error("label value {0} exceeds the representable range")]
    LabelOverflow(u64),
    #[error("gzip stream is corrupt: {0}")]
    CorruptGzip(String),

    // --- volume geometry ---
    #[error("affine is not axis-dominant; refusing to reorient")]
    NotAxisDominant,
    #[error("affine upper-left 3x3 block is singular")]
    SingularAffine,
    #[error("data length {got} does not match dims product {expected}")]
    DataLengthMismatch { expected: usize, got: usize },
    #[error("voxel coordinate ({i}, {j}, {k}) outside dims ({d0}, {d1}, {d2})")]
    OutOfBounds {
        i: i64,
        j: i64,
        k: i64,
        d0: usize,
        d1: usize,
        d2: usize,
    },
    #[error("volumes are on different grids: {0}")]
    GridMismatch(String),

    // --- masks and instances ---
    #[error("mask is empty")]
    EmptyMask,
    #[error("mask contains labels other than 0 and 1")]
    NotBinary,
    #[error("requested labels not present in volume")]
    LabelsAbsent,
    #[error("rib centroid lies on the vertebra midplane; side is undefined")]
    AmbiguousSide,

    // --- rib measurement ---
    #[error("negative length {0} mm")]
    NegativeLength(f64),

    // --- features ---
    #[error("path has {got} points, need at least {needed}")]
    InsufficientPath { needed: usize, got: usize },

    // --- statistics ---
    #[error("all paired differences are zero")]
    AllDifferencesZero,
    #[error("sample is empty")]
    EmptySample,

    // --- classification ---
    #[error("training data contains a single class")]
    SingleClass,
    #[error("prediction and truth lengths differ: {pred} vs {truth}")]
    LengthMismatch { pred: usize, truth: usize },
    #[error("feature count mismatch: model expects {expected}, input has {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("need at least {needed} subjects, got {got}")]
    TooFewSubjects { needed: usize, got: usize },

    // --- phantoms ---
    #[error("structure does not fit in the grid with a one-voxel margin")]
    ExceedsGrid,
    #[error("generated structures overlap at voxel ({0}, {1}, {2})")]
    SceneOverlap(usize, usize, usize),

    // --- io / reports ---
    #[error("invalid projection plane {0:?} (expected coronal or sagittal)")]
    InvalidPlane(String),
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
