//! Ferromagnetic Ising model on d-dimensional lattice tori, built around
//! the counting of local spin patterns: exact Gibbs-measure oracles by
//! full-state enumeration on tiny lattices, a Glauber (heat-bath) sampler
//! for larger ones, potential schedules calibrated by the homogeneity
//! relation `n^d * W = lambda`, and total-variation diagnostics comparing
//! pattern-count laws to Poisson limits.

pub mod asymptotics;
pub mod error;
pub mod gibbs_exact;
pub mod lattice;
pub mod patterns;
pub mod sampler;
pub mod stats;
pub mod verify;

pub use error::{Error, Result};
pub use gibbs_exact::{CountMode, ExactLaw, SpinState};
pub use lattice::{Ball, BallGeometry, Norm, TorusLattice};
pub use patterns::{LocalPattern, PatternReport, Potentials, SubConfig};
pub use sampler::{ChainConfig, InitState};
pub use stats::{CountDistribution, Engine};
