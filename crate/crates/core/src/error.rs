use alloc::string::String;

/// Errors reported by the solver.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// A grid is smaller than the minimal 3x3 raster.
    #[error("grid {width}x{height} is too small, both sides must be at least 3")]
    GridTooSmall {
        /// Requested width.
        width: usize,
        /// Requested height.
        height: usize,
    },
    /// Two operands live on different grids.
    #[error("grid mismatch: {expected:?} vs {found:?}")]
    DimsMismatch {
        /// Dimensions the operation expected.
        expected: (usize, usize),
        /// Dimensions it received.
        found: (usize, usize),
    },
    /// A buffer does not hold the number of values its grid requires.
    #[error("expected {expected} values, found {found}")]
    LengthMismatch {
        /// Required length.
        expected: usize,
        /// Supplied length.
        found: usize,
    },
    /// Feature maps with different channel counts were combined.
    #[error("channel count mismatch: {expected} vs {found}")]
    ChannelMismatch {
        /// Expected channel count.
        expected: usize,
        /// Supplied channel count.
        found: usize,
    },
    /// A scalar parameter violates its domain.
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter {
        /// Parameter name.
        name: &'static str,
        /// What is wrong with it.
        reason: &'static str,
    },
    /// A Jacobian with non-positive determinant was met where a gradient is required.
    #[error("deformation is not admissible: det = {det} at pixel ({x}, {y})")]
    NotAdmissible {
        /// Column of the offending pixel.
        x: usize,
        /// Row of the offending pixel.
        y: usize,
        /// The determinant found there.
        det: f64,
    },
    /// A time index outside the admissible range was requested.
    #[error("time index {index} outside {lo}..={hi}")]
    IndexOutOfRange {
        /// Requested index.
        index: usize,
        /// Smallest admissible index.
        lo: usize,
        /// Largest admissible index.
        hi: usize,
    },
    /// Invalid multilevel or path configuration.
    #[error("configuration error: {0}")]
    Config(String),
}

/// Result alias for this crate.
pub type Result<T> = core::result::Result<T, Error>;
