//! Crate-wide error type. Guard violations carry the admissible value so callers
//! (and the CLI) can surface a remediation hint instead of a bare failure.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("unknown catalog entry '{0}'")]
    UnknownCatalog(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    /// Resolution guard: the requested radius is too small for the grid.
    /// `needed` is the minimum admissible radius at the current spacing.
    #[error("resolution too coarse for {quantity}: radius {got} below admissible minimum {needed}; refine the grid or enlarge the schedule")]
    ResolutionTooCoarse {
        quantity: &'static str,
        needed: f64,
        got: f64,
    },

    #[error("empty stencil: ball of radius {rho} at ({x}, {y}, {z}) contains no usable cells")]
    EmptyStencil { x: f64, y: f64, z: f64, rho: f64 },

    #[error("degenerate half-ball split for normal ({0}, {1}, {2})")]
    DegenerateHalfBall(f64, f64, f64),

    #[error("pairwise cost cap exceeded: {pairs} pairs over cap {cap}; restrict to a subdomain or coarsen the grid")]
    CostCapExceeded { pairs: u128, cap: u128 },

    #[error("field is not flagged compact-support; zero extension outside the box would be unjustified")]
    NotCompactSupport,

    #[error("{0} does not support masked fields")]
    MaskedUnsupported(&'static str),

    #[error("field has no analytic formula; cannot re-sample at a new resolution")]
    NotAnalytic,

    #[error("Holder constant {given} is below the measured constant {measured} on the agreement set")]
    HolderConstantTooSmall { given: f64, measured: f64 },

    #[error("no filtration level removes less than {target}: best achieved {best}")]
    NoAdmissibleLevel { target: f64, best: f64 },

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed field file: {0}")]
    MalformedField(String),
}
