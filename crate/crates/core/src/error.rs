use std::io;

use thiserror::Error;

use crate::keyfile::Checkpoint;
use crate::primitives::Purpose;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("family key purpose mismatch: expected {expected:?}, got {found:?}")]
    PurposeMismatch { expected: Purpose, found: Purpose },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("entropy source unavailable")]
    EntropyUnavailable,

    #[error("key already used")]
    KeyAlreadyUsed,

    #[error("parameter mismatch: {0}")]
    ParamMismatch(String),

    #[error("streaming signer exhausted")]
    StreamExhausted,

    #[error("all tree leaves have been used")]
    TreeExhausted,

    #[error("malformed input: {0}")]
    Malformed(String),

    #[error("observation {0} does not verify under the public key")]
    InvalidObservation(usize),

    #[error("target digest is not forgeable from the revealed material")]
    NotForgeable,

    #[error("operation not allowed in session phase {0}")]
    PhaseViolation(&'static str),

    #[error("frame error: {0}")]
    FrameError(String),

    #[error("script error: {0}")]
    ScriptError(String),

    #[error("injected fault at {0:?}")]
    InjectedFault(Checkpoint),

    #[error(transparent)]
    Io(#[from] io::Error),
}
