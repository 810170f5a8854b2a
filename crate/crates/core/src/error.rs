use thiserror::Error;

/// Errors raised by the cryptographic building blocks and the protocol state machines.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("invalid threshold: t = {t}, n = {n}")]
    InvalidThreshold { t: usize, n: usize },

    #[error("not enough shares: need {needed}, got {got}")]
    NotEnoughShares { needed: usize, got: usize },

    #[error("duplicate share index {0}")]
    DuplicateIndex(u32),

    #[error("share index must be nonzero")]
    ZeroIndex,

    #[error("public key is the group identity")]
    IdentityPublicKey,

    #[error("chunk {chunk} does not decode to a 16-bit value")]
    UndecodableChunk { chunk: usize },

    #[error("decoded chunks do not form a canonical scalar")]
    NonCanonicalScalar,

    #[error("value {value} out of range for {bits}-bit magnitude bound")]
    MagnitudeOverflow { value: i128, bits: u32 },

    #[error("threshold {threshold} does not fit in a {bits}-bit range statement")]
    ThresholdTooLarge { threshold: u128, bits: u32 },

    #[error("invalid quantization config: {0}")]
    InvalidConfig(String),

    #[error("value is outside the provable range [0, 2^{bits})")]
    OutOfRange { bits: u32 },

    #[error("malformed encoding: {0}")]
    Malformed(String),

    #[error("benign set is empty")]
    EmptyBenignSet,

    #[error("protocol error: {0}")]
    Protocol(String),
}

pub type Result<T> = std::result::Result<T, Error>;
