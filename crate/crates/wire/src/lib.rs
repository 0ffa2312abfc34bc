//! Encoder, decoder and stream framing for the binary floor control protocol
//! (TCP layout).
//!
//! Messages are a 12-octet common header followed by a block of TLV
//! attributes, each padded to a 4-octet boundary. All multi-octet fields are
//! big-endian. [`encode`] always produces the canonical form, so for anything
//! it emits `encode(decode(b)) == b`.

mod attribute;
mod error;
mod frame;
mod header;
mod message;

pub use attribute::{Attribute, AttributeKind, AttributeValue, ErrorCode, PriorityLevel, RequestStatus, StatusCode};
pub use error::{DecodeError, EncodeError, FrameError};
pub use frame::{FrameBuffer, FrameReader};
pub use header::{CommonHeader, Primitive, RawHeader, HEADER_LEN, MAX_PAYLOAD_LEN, VERSION};
pub use message::{decode, encode, request_status_in, BfcpMessage};

#[cfg(feature = "strategy")]
pub mod strategy;
