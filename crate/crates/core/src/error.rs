use thiserror::Error;

/// Errors reported by lattice construction, pattern algebra, exact
/// enumeration, sampling and the statistics layer.
#[derive(Debug, Error)]
#[non_exhaustive]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Neighbor offsets must stay distinct mod n, which needs n > 2*rho.
    #[error("torus of size {n} is too small for range rho = {rho} (need n > 2*rho)")]
    LatticeTooSmall { n: usize, rho: usize },

    /// Balls of radius r self-overlap unless n > 2*rho*r.
    #[error("radius-{radius} ball self-overlaps on a torus of size {n} (need n > {min})")]
    BallTooLarge { n: usize, radius: usize, min: usize },

    #[error("offset {offset:?} lies outside the radius-{radius} ball")]
    OffsetOutsideBall { offset: Vec<i64>, radius: usize },

    #[error("duplicate offset {offset:?}")]
    DuplicateOffset { offset: Vec<i64> },

    #[error("pattern does not match the lattice: {0}")]
    LatticeMismatch(String),

    #[error("pair potential must be nonnegative, got b = {0}")]
    NegativePairPotential(f64),

    #[error("potentials must be finite, got a = {a}, b = {b}")]
    NonFinitePotentials { a: f64, b: f64 },

    #[error("supports overlap at vertex {vertex}")]
    OverlappingSupports { vertex: usize },

    /// Hard guard on exhaustive enumerations; never silently truncated.
    #[error("enumeration over {bits} binary sites exceeds the {limit}-site guard")]
    EnumerationGuard { bits: usize, limit: usize },

    #[error("positive set covers the whole ball: no strict superset exists")]
    FullBall,

    #[error("assignment incomplete: vertex {vertex} of the closure is unset")]
    IncompleteAssignment { vertex: usize },

    #[error("invalid chain config: {0}")]
    InvalidChainConfig(String),

    #[error("pattern file: {0}")]
    PatternFile(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("no in-regime sizes in the grid")]
    EmptyRegime,

    #[error("mean must be positive, got {0}")]
    NonPositiveMean(f64),
}

pub type Result<T> = std::result::Result<T, Error>;
