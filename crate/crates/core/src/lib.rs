//! One-time and few-time hash-based signatures with transcript-authenticated
//! sessions.

mod codec;
pub mod attacks;
pub mod error;
pub mod keyfile;
pub mod lamport;
pub mod merkle;
pub mod params;
pub mod primitives;
pub mod session;

pub use error::{Error, Result};
