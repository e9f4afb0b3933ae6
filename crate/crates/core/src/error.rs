use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("division by zero in the field")]
    DivisionByZero,
    #[error("{0} is not a prime modulus")]
    NotPrime(u64),
    #[error("value {value} is not reduced modulo {modulus}")]
    OutOfField { value: u64, modulus: u64 },
    #[error("dimension mismatch: {0}")]
    Dim(String),
    #[error("matrix is singular")]
    Singular,
    #[error("field F_{modulus} has too few points for {servers} servers")]
    FieldTooSmall { servers: usize, modulus: u64 },
    #[error("bad server index set: {0}")]
    BadIndexSet(String),
    #[error("generator is not MDS")]
    NotMds,
    #[error("unsupported regime M={m}, N={n}, K={k}: the scheme needs N > K >= 1 and M >= 2")]
    UnsupportedRegime { m: usize, n: usize, k: usize },
    #[error("parameters overflow 64-bit arithmetic")]
    Overflow,
    #[error("bad call: {0}")]
    BadCall(String),
    #[error("internal invariant violated: {0}")]
    InternalInvariant(String),
    #[error("bad query: {0}")]
    BadQuery(String),
    #[error("undecodable: {0}")]
    Undecodable(String),
    #[error("enumeration of {0} permutation tuples exceeds the budget")]
    TooLarge(u128),
    #[error("wire encoding: {0}")]
    Encode(String),
    #[error("wire decoding: {0}")]
    Decode(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("cannot reach server {index} at {addr}: {source}")]
    Connect {
        index: usize,
        addr: String,
        #[source]
        source: std::io::Error,
    },
    #[error("remote server {index} reported: {message}")]
    Remote { index: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
