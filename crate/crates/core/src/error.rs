use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid lattice: {0}")]
    InvalidLattice(String),
    #[error("scale h = {h} is below the resolvability floor; minimum admissible h is {min}")]
    BelowFloor { h: f64, min: f64 },
    #[error("support radius {radius} wraps the torus (must be < {limit})")]
    Wrap { radius: f64, limit: f64 },
    #[error("kernels live on different lattices")]
    LatticeMismatch,
    #[error("twist component {0} is an integer; the twisted Laplacian has a zero mode")]
    IntegerTwist(f64),
    #[error("band {band} too large for N = {n} (need band < N/2)")]
    BandTooLarge { band: usize, n: usize },
    #[error("order n = {n} exceeds the allowed maximum {max}; estimated cost {cost:.3e} operations")]
    OrderTooLarge { n: usize, max: usize, cost: f64 },
    #[error("generator universe of size {0} exceeds the cap of {1}")]
    UniverseTooLarge(usize, usize),
    #[error("integration order is not a permutation of the universe: {0}")]
    BadOrder(String),
    #[error("provenance mismatch: {0}")]
    Provenance(String),
    #[error("missing input: {0}")]
    Missing(String),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
