// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(tag = "code", content = "message", rename_all = "snake_case")]
pub enum Error {
    #[error("not found: {0}")]
    NotFound(String),
    #[error("integrity check failed: {0}")]
    Integrity(String),
    #[error("tamper detected: {0}")]
    Tamper(String),
    #[error("identity rejected: {0}")]
    IdentityRejected(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("resource exhausted: {0}")]
    Resource(String),
    #[error("unknown chaincode: {0}")]
    UnknownChaincode(String),
    #[error("chaincode error: {0}")]
    Chaincode(String),
    #[error("ordering unavailable: {0}")]
    Unavailable(String),
    #[error("timed out: {0}")]
    Timeout(String),
    #[error("chain integrity violation: {0}")]
    ChainIntegrity(String),
    #[error("codec error: {0}")]
    Codec(String),
    #[error("{0}")]
    Io(String),
}

impl Error {
    /// Stable machine-readable code, also used as the `code` field of error bodies.
    pub fn code(&self) -> &'static str {
        match self {
            Error::NotFound(_) => "not_found",
            Error::Integrity(_) => "integrity",
            Error::Tamper(_) => "tamper",
            Error::IdentityRejected(_) => "identity_rejected",
            Error::InvalidRequest(_) => "invalid_request",
            Error::Resource(_) => "resource",
            Error::UnknownChaincode(_) => "unknown_chaincode",
            Error::Chaincode(_) => "chaincode",
            Error::Unavailable(_) => "unavailable",
            Error::Timeout(_) => "timeout",
            Error::ChainIntegrity(_) => "chain_integrity",
            Error::Codec(_) => "codec",
            Error::Io(_) => "io",
        }
    }

    pub fn message(&self) -> String {
        match self {
            Error::NotFound(m)
            | Error::Integrity(m)
            | Error::Tamper(m)
            | Error::IdentityRejected(m)
            | Error::InvalidRequest(m)
            | Error::Resource(m)
            | Error::UnknownChaincode(m)
            | Error::Chaincode(m)
            | Error::Unavailable(m)
            | Error::Timeout(m)
            | Error::ChainIntegrity(m)
            | Error::Codec(m)
            | Error::Io(m) => m.clone(),
        }
    }

    /// HTTP status an API layer should map this error onto.
    pub fn http_status(&self) -> u16 {
        match self {
            Error::NotFound(_) => 404,
            Error::IdentityRejected(_) => 403,
            Error::InvalidRequest(_) | Error::Codec(_) | Error::UnknownChaincode(_) => 400,
            Error::Chaincode(_) => 422,
            Error::Tamper(_) | Error::Integrity(_) | Error::ChainIntegrity(_) => 409,
            Error::Resource(_) => 507,
            Error::Unavailable(_) => 503,
            Error::Timeout(_) => 504,
            Error::Io(_) => 500,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

/// Error body shape shared by the HTTP API and the CLI: `{"code": .., "message": ..}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

impl From<&Error> for ErrorBody {
    fn from(e: &Error) -> Self {
        ErrorBody { code: e.code().to_string(), message: e.message() }
    }
}

impl ErrorBody {
    pub fn into_error(self) -> Error {
        let m = self.message;
        match self.code.as_str() {
            "not_found" => Error::NotFound(m),
            "integrity" => Error::Integrity(m),
            "tamper" => Error::Tamper(m),
            "identity_rejected" => Error::IdentityRejected(m),
            "invalid_request" => Error::InvalidRequest(m),
            "resource" => Error::Resource(m),
            "unknown_chaincode" => Error::UnknownChaincode(m),
            "chaincode" => Error::Chaincode(m),
            "unavailable" => Error::Unavailable(m),
            "timeout" => Error::Timeout(m),
            "chain_integrity" => Error::ChainIntegrity(m),
            "codec" => Error::Codec(m),
            _ => Error::Io(m),
        }
    }
}
