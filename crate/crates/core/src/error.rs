use thiserror::Error;

use crate::register::PhotonTag;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("photon {0} is not in the register")]
    UnknownPhoton(PhotonTag),
    #[error("photon {0} appears more than once")]
    DuplicatePhoton(PhotonTag),
    #[error("parity check needs two distinct photons, got {0} twice")]
    SamePhoton(PhotonTag),
    #[error("label {0} is not canonical: the first photon must be H")]
    NonCanonicalLabel(String),
    #[error("invalid photon count {count}: {reason}")]
    PhotonCount { count: usize, reason: &'static str },
    #[error("weights must be nonnegative and sum to 1, total is {total}")]
    NotNormalized { total: String },
    #[error("negative weight {0}")]
    NegativeWeight(String),
    #[error("{what} = {value} is out of range {range}")]
    OutOfRange {
        what: &'static str,
        value: String,
        range: &'static str,
    },
    #[error("branch probability {0} has no square root in Q(√2)")]
    NotDyadic(String),
    #[error("amplitude sum is not a real weight")]
    IrrationalProbability,
    #[error("junction mismatch: {0}")]
    Junction(String),
    #[error("invalid parity pattern: {0}")]
    Pattern(String),
    #[error("n = {n} exceeds the enumeration budget of {max} photons for this pipeline")]
    Budget { n: usize, max: usize },
    #[error("ensemble has no weight to normalize")]
    EmptyEnsemble,
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("monte carlo: {0}")]
    MonteCarlo(String),
}

pub type Result<T> = std::result::Result<T, Error>;
