//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Quadrature grid too coarse to resolve the kernel's core radius.
    #[error("quadrature-underresolved: resolution {resolution} cannot resolve r0={r0} over cutoff {cutoff}")]
    QuadratureUnderresolved {
        resolution: usize,
        r0: f64,
        cutoff: f64,
    },

    /// A kernel parameter is outside its admissible range.
    #[error("kernel-invalid: {0}")]
    KernelInvalid(String),

    /// Perforated environments are not defined in one dimension (any hole
    /// disconnects the line).
    #[error("perforation-disconnects: perforation in d=1 always disconnects the domain")]
    PerforationDisconnects,

    /// Every redraw of a perforated realization failed the geometry check.
    #[error("perforation-rejected: seed {seed} produced no connected realization in {attempts} attempts")]
    PerforationRejected { seed: u64, attempts: usize },

    /// A coefficient query left the box the realization was materialized on.
    #[error("outside-realization: query point {point:?} not covered by the realization box")]
    OutsideRealization { point: Vec<f64> },

    /// An environment parameter is outside its admissible range.
    #[error("environment-invalid: {0}")]
    EnvironmentInvalid(String),

    /// The pinned collar swallowed the whole box: no unknowns remain.
    #[error("no-free-sites: R={r} leaves no free interior at K={k}")]
    NoFreeSites { r: f64, k: f64 },

    /// Box edges are not aligned with the lattice spacing.
    #[error("incommensurate: {0}")]
    Incommensurate(String),

    /// The margin box does not cover the interaction range.
    #[error("margin-underflow: margin {margin} is smaller than the interaction reach {reach}")]
    MarginUnderflow { margin: f64, reach: f64 },

    /// A site field does not match the problem it is evaluated on.
    #[error("field-incomplete: field has {got} values, problem has {want} sites")]
    FieldIncomplete { got: usize, want: usize },

    /// Iterative solve did not reach the requested tolerance.
    #[error("no-convergence: relative residual {residual:.3e} after {iterations} iterations")]
    NoConvergence {
        residual: f64,
        iterations: usize,
        /// Best iterate found, usable for diagnostics.
        best: Vec<f64>,
    },

    /// The dense reference solver is restricted to small systems.
    #[error("oracle-too-large: {free} free sites exceed the dense-oracle limit {limit}")]
    OracleTooLarge { free: usize, limit: usize },

    /// Subadditivity probe requires disjoint cell sets.
    #[error("boxes-overlap: the two domains share cells")]
    BoxesOverlap,

    /// An averaging/difference stencil does not fit inside the domain.
    #[error("stencil-overflow: {0}")]
    StencilOverflow(String),

    /// Boundary values violate the precondition of the check.
    #[error("bad-boundary-data: {0}")]
    BadBoundaryData(String),

    /// The lattice spacing cannot resolve the requested interaction scale.
    #[error(
        "epsilon-underresolved: eps={eps} with spacing h={h} leaves no offsets in the kernel core"
    )]
    EpsilonUnderresolved { eps: f64, h: f64 },

    /// A tensor handed to the harness is not symmetric positive definite.
    #[error("invalid-tensor: {0}")]
    InvalidTensor(String),

    /// Config file declares a schema this build does not understand.
    #[error("unsupported-schema: config declares schema_version {got}, supported: {supported}")]
    UnsupportedSchema { got: u32, supported: u32 },

    /// Config file is structurally valid but semantically broken.
    #[error("config-invalid: {path}: {reason}")]
    ConfigInvalid { path: String, reason: String },

    /// A plot/table request needs more records than the results file has.
    #[error("insufficient-data: {0}")]
    InsufficientData(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("config-parse: {0}")]
    ConfigParse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
