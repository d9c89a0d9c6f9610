//! Error type shared by the algorithmic core.

use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// Affine upper-left 3x3 block is not invertible.
    #[error("affine is singular (|det| = {det:e})")]
    SingularAffine { det: f64 },

    /// Affine bottom row must be (0, 0, 0, 1).
    #[error("affine bottom row is not (0, 0, 0, 1)")]
    BadAffineBottomRow,

    /// Grid dimensions must all be positive.
    #[error("grid dimensions {dims:?} contain a zero extent")]
    EmptyGrid { dims: [usize; 3] },

    /// Flat data length does not match the grid.
    #[error("data length {got} does not match grid with {expected} voxels")]
    DataLengthMismatch { got: usize, expected: usize },

    /// A label has no voxels in the volume.
    #[error("label {label} has no voxels in the volume")]
    LabelMissing { label: u32 },

    /// Streamlines need at least two points.
    #[error("streamline has {count} points; at least 2 are required")]
    TooFewPoints { count: usize },

    /// Streamline points must be finite.
    #[error("streamline point {index} is not finite")]
    NonFinitePoint { index: usize },

    /// Spacing and step arguments must be positive and finite.
    #[error("{what} must be positive and finite, got {value}")]
    NonPositiveParam { what: &'static str, value: f64 },

    /// Direction vectors must be unit-norm or exactly zero.
    #[error("direction vector at linear index {index} has norm {norm}, expected 1 or 0")]
    NonUnitVector { index: usize, norm: f64 },

    /// Retry cap was exhausted before enough streamlines were generated.
    #[error("retry cap exhausted: generated {generated} of {requested} streamlines")]
    AttemptCapExhausted { generated: u64, requested: u64 },

    /// Accumulating from an empty tractogram is a caller bug.
    #[error("tractogram contains no streamlines")]
    EmptyTractogram,

    /// Run parameters are inconsistent with the requested algorithm.
    #[error("invalid run parameters: {reason}")]
    BadRunParams { reason: &'static str },

    /// Slice index is outside the volume.
    #[error("slice {index} is out of range for axis extent {extent}")]
    SliceOutOfRange { index: usize, extent: usize },

    /// Matrices must share row order and column labels to be combined.
    #[error("matrices are not conformable: {reason}")]
    NotConformable { reason: &'static str },

    /// Matrix rows do not match the given source volume.
    #[error("matrix row {row} maps to voxel {voxel:?} which is not a source voxel")]
    RowNotInSource { row: usize, voxel: [i32; 3] },

    /// Raw matrix parts are mutually inconsistent.
    #[error("inconsistent matrix parts: {reason}")]
    BadMatrixParts { reason: &'static str },

    /// Column labels must be sorted, distinct, and non-zero.
    #[error("column labels {labels:?} are not sorted distinct non-zero labels")]
    BadColumnLabels { labels: Vec<u32> },

    /// Phantom geometry must align with every grid it is rendered on.
    #[error("bad phantom geometry: {reason}")]
    BadPhantom { reason: String },
}
