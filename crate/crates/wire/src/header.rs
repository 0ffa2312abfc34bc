//! The 12-octet common header.
//!
//! ```text
//!  0                   1                   2                   3
//!  0 1 2 3 4 5 6 7 8 9 0 1 2 3 4 5 6 7 8 9 0 1 2 3 4 5 6 7 8 9 0 1
//! +-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+
//! | Ver | Reserved|  Primitive    |        Payload Length         |
//! +-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+
//! |                         Conference ID                         |
//! +-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+
//! |         Transaction ID        |            User ID            |
//! +-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+
//! ```

use std::fmt;

use crate::error::DecodeError;

pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 12;
/// Largest attribute block accepted from the wire, in octets.
pub const MAX_PAYLOAD_LEN: usize = 16 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum Primitive {
    FloorRequest = 1,
    FloorRelease = 2,
    FloorRequestQuery = 3,
    FloorRequestStatus = 4,
    UserQuery = 5,
    UserStatus = 6,
    FloorQuery = 7,
    FloorStatus = 8,
    ChairAction = 9,
    ChairActionAck = 10,
    Hello = 11,
    HelloAck = 12,
    Error = 13,
}

impl Primitive {
    pub const ALL: [Primitive; 13] = [
        Primitive::FloorRequest,
        Primitive::FloorRelease,
        Primitive::FloorRequestQuery,
        Primitive::FloorRequestStatus,
        Primitive::UserQuery,
        Primitive::UserStatus,
        Primitive::FloorQuery,
        Primitive::FloorStatus,
        Primitive::ChairAction,
        Primitive::ChairActionAck,
        Primitive::Hello,
        Primitive::HelloAck,
        Primitive::Error,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn name(self) -> &'static str {
        match self {
            Primitive::FloorRequest => "FloorRequest",
            Primitive::FloorRelease => "FloorRelease",
            Primitive::FloorRequestQuery => "FloorRequestQuery",
            Primitive::FloorRequestStatus => "FloorRequestStatus",
            Primitive::UserQuery => "UserQuery",
            Primitive::UserStatus => "UserStatus",
            Primitive::FloorQuery => "FloorQuery",
            Primitive::FloorStatus => "FloorStatus",
            Primitive::ChairAction => "ChairAction",
            Primitive::ChairActionAck => "ChairActionAck",
            Primitive::Hello => "Hello",
            Primitive::HelloAck => "HelloAck",
            Primitive::Error => "Error",
        }
    }
}

impl TryFrom<u8> for Primitive {
    type Error = DecodeError;

    fn try_from(code: u8) -> Result<Self, DecodeError> {
        Primitive::ALL.get(usize::from(code).wrapping_sub(1)).copied().ok_or(DecodeError::UnknownPrimitive(code))
    }
}

impl fmt::Display for Primitive {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Header fields carried by a decoded message. The version is fixed and the
/// payload length is derived from the attributes at encode time, so neither is
/// stored here.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CommonHeader {
    pub primitive: Primitive,
    pub conference_id: u32,
    pub transaction_id: u16,
    pub user_id: u16,
}

/// Header octets as found on the wire, before any validation. Used for
/// framing and for addressing error replies to messages that failed to decode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RawHeader {
    pub version: u8,
    pub primitive: u8,
    /// In 4-octet words.
    pub payload_length: u16,
    pub conference_id: u32,
    pub transaction_id: u16,
    pub user_id: u16,
}

impl RawHeader {
    pub fn parse(bytes: &[u8]) -> Result<RawHeader, DecodeError> {
        let Some(h) = bytes.get(..HEADER_LEN) else {
            return Err(DecodeError::Truncated { needed: HEADER_LEN, available: bytes.len() });
        };
        Ok(RawHeader {
            version: h[0] >> 5,
            primitive: h[1],
            payload_length: u16::from_be_bytes([h[2], h[3]]),
            conference_id: u32::from_be_bytes([h[4], h[5], h[6], h[7]]),
            transaction_id: u16::from_be_bytes([h[8], h[9]]),
            user_id: u16::from_be_bytes([h[10], h[11]]),
        })
    }

    pub fn payload_octets(&self) -> usize {
        usize::from(self.payload_length) * 4
    }

    /// Version and size checks that must pass before the payload is awaited.
    pub fn check_frame(&self) -> Result<usize, DecodeError> {
        if self.version != VERSION {
            return Err(DecodeError::BadVersion(self.version));
        }
        let payload = self.payload_octets();
        if payload > MAX_PAYLOAD_LEN {
            return Err(DecodeError::Oversized { declared: payload, limit: MAX_PAYLOAD_LEN });
        }
        Ok(HEADER_LEN + payload)
    }

    pub(crate) fn write(&self, out: &mut Vec<u8>) {
        out.push(self.version << 5);
        out.push(self.primitive);
        out.extend_from_slice(&self.payload_length.to_be_bytes());
        out.extend_from_slice(&self.conference_id.to_be_bytes());
        out.extend_from_slice(&self.transaction_id.to_be_bytes());
        out.extend_from_slice(&self.user_id.to_be_bytes());
    }
}
