use thiserror::Error;

/// Failure to turn octets into a [`BfcpMessage`](crate::BfcpMessage).
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("truncated message: need {needed} octets, have {available}")]
    Truncated { needed: usize, available: usize },

    #[error("unsupported protocol version {0}")]
    BadVersion(u8),

    #[error("declared payload of {declared} octets exceeds the {limit} octet limit")]
    Oversized { declared: usize, limit: usize },

    #[error("{extra} octets follow the declared payload")]
    TrailingBytes { extra: usize },

    #[error("unknown primitive {0}")]
    UnknownPrimitive(u8),

    #[error("malformed attribute (type {kind}): {reason}")]
    MalformedAttribute { kind: u8, reason: &'static str },

    /// An attribute we do not understand carried the mandatory bit. Kept apart
    /// from `MalformedAttribute` so a server can answer with the matching
    /// error code.
    #[error("unknown mandatory attribute type {kind}")]
    UnknownMandatoryAttribute { kind: u8 },

    #[error("attribute type {kind} is not allowed in {context}")]
    IllegalAttribute { kind: u8, context: &'static str },
}

impl DecodeError {
    /// Errors after which the stream can no longer be split on frame
    /// boundaries.
    pub fn is_framing_error(&self) -> bool {
        matches!(self, DecodeError::Truncated { .. } | DecodeError::BadVersion(_) | DecodeError::Oversized { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EncodeError {
    #[error("invalid message: {0}")]
    InvalidMessage(String),
}

/// Errors surfaced by [`FrameReader`](crate::FrameReader).
#[derive(Debug, Error)]
pub enum FrameError {
    #[error(transparent)]
    Decode(#[from] DecodeError),

    #[error("stream closed")]
    StreamClosed,

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
