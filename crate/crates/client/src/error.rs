use std::time::Duration;

use floorctl_wire::{EncodeError, ErrorCode, Primitive};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("no {what} within {after:?}")]
    Timeout { what: String, after: Duration },

    /// The server answered with an Error message.
    #[error("server error {} ({code:?}){}", code.code(), info.as_deref().map(|i| format!(": {i}")).unwrap_or_default())]
    Server { code: ErrorCode, info: Option<String> },

    #[error("unexpected {got} in reply to {sent}")]
    UnexpectedReply { sent: Primitive, got: Primitive },

    #[error("malformed reply: {0}")]
    Protocol(String),

    #[error("connection closed")]
    Closed,

    #[error("too many outstanding transactions")]
    Busy,

    #[error(transparent)]
    Encode(#[from] EncodeError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    /// The HTTP gateway refused a call.
    #[error("HTTP {status}: {error}: {message}")]
    Http { status: u16, error: String, message: String },

    #[error("HTTP transport: {0}")]
    Transport(#[from] reqwest::Error),
}
