//! Client toolkit for the view gateway: key and token management, policy
//! administration, dataset generation, object transfer, and a benchmark
//! harness with client-side bandwidth shaping.

pub mod bench;
pub mod client;
pub mod datasets;
pub mod keyfiles;
pub mod policies;
pub mod ratelimit;
pub mod report;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("gateway returned {status}: {detail}")]
    Http { status: u16, detail: String },
    #[error("request failed: {0}")]
    Transport(#[from] reqwest::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("crypto failure: {0}")]
    Crypto(#[from] objectlens_core::crypto::CryptoError),
    #[error("bad JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Invalid(String),
}

impl CliError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        CliError::Invalid(msg.into())
    }
}
