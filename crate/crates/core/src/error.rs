use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid lattice: {0}")]
    InvalidLattice(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("field length {got} does not match lattice site count {expected}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("non-finite value at site {site}")]
    NonFinite { site: usize },

    #[error("operands live on different lattices")]
    SpecMismatch,

    #[error("operands live on different time grids")]
    GridMismatch,

    #[error("spectral field violates Hermitian symmetry (relative deviation {deviation:e})")]
    NonHermitian { deviation: f64 },

    #[error("Picard iteration did not converge after {iterations} iterations (last sup-distance {last_delta:e})")]
    NonConvergence { iterations: usize, last_delta: f64 },

    #[error("multinomial coefficient overflows 64 bits (p = {power}, order = {order})")]
    CoefficientOverflow { power: u32, order: usize },

    #[error("field blew up at step {step} (t = {time}): max |φ| = {max_abs:e}")]
    BlowUp { step: usize, time: f64, max_abs: f64 },
}
