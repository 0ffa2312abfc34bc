//! TLV attributes.
//!
//! Each attribute starts with a 7-bit type and the mandatory bit, followed by
//! a one-octet length covering type, length and contents (not padding). The
//! encoded attribute is then zero-padded to a 4-octet boundary.

use std::fmt;

use crate::error::{DecodeError, EncodeError};

/// Attribute type codes understood by this codec.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum AttributeKind {
    BeneficiaryId = 1,
    FloorId = 2,
    FloorRequestId = 3,
    Priority = 4,
    RequestStatus = 5,
    ErrorCode = 6,
    ErrorInfo = 7,
    ParticipantProvidedInfo = 8,
    StatusInfo = 9,
    UserDisplayName = 12,
    FloorRequestInformation = 15,
    FloorRequestStatus = 17,
    OverallRequestStatus = 18,
}

impl AttributeKind {
    pub fn from_code(code: u8) -> Option<AttributeKind> {
        use AttributeKind::*;
        Some(match code {
            1 => BeneficiaryId,
            2 => FloorId,
            3 => FloorRequestId,
            4 => Priority,
            5 => RequestStatus,
            6 => ErrorCode,
            7 => ErrorInfo,
            8 => ParticipantProvidedInfo,
            9 => StatusInfo,
            12 => UserDisplayName,
            15 => FloorRequestInformation,
            17 => FloorRequestStatus,
            18 => OverallRequestStatus,
            _ => return None,
        })
    }

    pub fn code(self) -> u8 {
        self as u8
    }
}

/// Floor request status codes carried in REQUEST-STATUS.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum StatusCode {
    Pending = 1,
    Accepted = 2,
    Granted = 3,
    Denied = 4,
    Cancelled = 5,
    Released = 6,
    Revoked = 7,
}

impl StatusCode {
    pub const ALL: [StatusCode; 7] = [
        StatusCode::Pending,
        StatusCode::Accepted,
        StatusCode::Granted,
        StatusCode::Denied,
        StatusCode::Cancelled,
        StatusCode::Released,
        StatusCode::Revoked,
    ];

    pub fn from_code(code: u8) -> Option<StatusCode> {
        StatusCode::ALL.get(usize::from(code).wrapping_sub(1)).copied()
    }

    pub fn code(self) -> u8 {
        self as u8
    }
}

impl fmt::Display for StatusCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            StatusCode::Pending => "Pending",
            StatusCode::Accepted => "Accepted",
            StatusCode::Granted => "Granted",
            StatusCode::Denied => "Denied",
            StatusCode::Cancelled => "Cancelled",
            StatusCode::Released => "Released",
            StatusCode::Revoked => "Revoked",
        };
        f.write_str(s)
    }
}

/// REQUEST-STATUS contents: one status octet and one queue-position octet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RequestStatus {
    pub status: StatusCode,
    pub queue_position: u8,
}

/// PRIORITY values. Only the top three bits of the first octet are used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum PriorityLevel {
    Lowest = 0,
    Low = 1,
    Normal = 2,
    High = 3,
    Highest = 4,
}

impl PriorityLevel {
    pub const ALL: [PriorityLevel; 5] =
        [PriorityLevel::Lowest, PriorityLevel::Low, PriorityLevel::Normal, PriorityLevel::High, PriorityLevel::Highest];

    pub fn from_code(code: u8) -> Option<PriorityLevel> {
        PriorityLevel::ALL.get(usize::from(code)).copied()
    }
}

/// ERROR-CODE values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum ErrorCode {
    ConferenceDoesNotExist = 1,
    UserDoesNotExist = 2,
    UnknownPrimitive = 3,
    UnknownMandatoryAttribute = 4,
    UnauthorizedOperation = 5,
    InvalidFloorId = 6,
    FloorRequestIdDoesNotExist = 7,
    MaxFloorRequestsReached = 8,
    UseTls = 9,
    UnableToParseMessage = 10,
    UseDtls = 11,
    UnsupportedVersion = 12,
    IncorrectMessageLength = 13,
    GenericError = 14,
}

impl ErrorCode {
    pub fn from_code(code: u8) -> Option<ErrorCode> {
        use ErrorCode::*;
        Some(match code {
            1 => ConferenceDoesNotExist,
            2 => UserDoesNotExist,
            3 => UnknownPrimitive,
            4 => UnknownMandatoryAttribute,
            5 => UnauthorizedOperation,
            6 => InvalidFloorId,
            7 => FloorRequestIdDoesNotExist,
            8 => MaxFloorRequestsReached,
            9 => UseTls,
            10 => UnableToParseMessage,
            11 => UseDtls,
            12 => UnsupportedVersion,
            13 => IncorrectMessageLength,
            14 => GenericError,
            _ => return None,
        })
    }

    pub fn code(self) -> u8 {
        self as u8
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum AttributeValue {
    BeneficiaryId(u16),
    FloorId(u16),
    FloorRequestId(u16),
    Priority(PriorityLevel),
    RequestStatus(RequestStatus),
    ErrorCode {
        code: ErrorCode,
        details: Vec<u8>,
    },
    ErrorInfo(String),
    ParticipantProvidedInfo(String),
    StatusInfo(String),
    UserDisplayName(String),
    FloorRequestInformation {
        floor_request_id: u16,
        attributes: Vec<Attribute>,
    },
    FloorRequestStatus {
        floor_id: u16,
        attributes: Vec<Attribute>,
    },
    OverallRequestStatus {
        floor_request_id: u16,
        attributes: Vec<Attribute>,
    },
    /// A non-mandatory attribute of a type this codec does not implement,
    /// carried through untouched.
    Unknown {
        kind: u8,
        contents: Vec<u8>,
    },
}

impl AttributeValue {
    /// Raw 7-bit type code.
    pub fn kind_code(&self) -> u8 {
        match self {
            AttributeValue::BeneficiaryId(_) => AttributeKind::BeneficiaryId.code(),
            AttributeValue::FloorId(_) => AttributeKind::FloorId.code(),
            AttributeValue::FloorRequestId(_) => AttributeKind::FloorRequestId.code(),
            AttributeValue::Priority(_) => AttributeKind::Priority.code(),
            AttributeValue::RequestStatus(_) => AttributeKind::RequestStatus.code(),
            AttributeValue::ErrorCode { .. } => AttributeKind::ErrorCode.code(),
            AttributeValue::ErrorInfo(_) => AttributeKind::ErrorInfo.code(),
            AttributeValue::ParticipantProvidedInfo(_) => AttributeKind::ParticipantProvidedInfo.code(),
            AttributeValue::StatusInfo(_) => AttributeKind::StatusInfo.code(),
            AttributeValue::UserDisplayName(_) => AttributeKind::UserDisplayName.code(),
            AttributeValue::FloorRequestInformation { .. } => AttributeKind::FloorRequestInformation.code(),
            AttributeValue::FloorRequestStatus { .. } => AttributeKind::FloorRequestStatus.code(),
            AttributeValue::OverallRequestStatus { .. } => AttributeKind::OverallRequestStatus.code(),
            AttributeValue::Unknown { kind, .. } => *kind,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Attribute {
    pub mandatory: bool,
    pub value: AttributeValue,
}

impl Attribute {
    pub fn new(value: AttributeValue) -> Attribute {
        Attribute { mandatory: false, value }
    }

    pub fn mandatory(value: AttributeValue) -> Attribute {
        Attribute { mandatory: true, value }
    }
}

impl From<AttributeValue> for Attribute {
    fn from(value: AttributeValue) -> Attribute {
        Attribute::new(value)
    }
}

/// Where an attribute list appears; decides which attribute types are legal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Context {
    Message(crate::Primitive),
    FloorRequestInformation,
    FloorRequestStatus,
    OverallRequestStatus,
}

impl Context {
    pub(crate) fn name(self) -> &'static str {
        match self {
            Context::Message(p) => p.name(),
            Context::FloorRequestInformation => "FLOOR-REQUEST-INFORMATION",
            Context::FloorRequestStatus => "FLOOR-REQUEST-STATUS",
            Context::OverallRequestStatus => "OVERALL-REQUEST-STATUS",
        }
    }

    pub(crate) fn allows(self, kind: AttributeKind) -> bool {
        use crate::Primitive as P;
        use AttributeKind as K;
        match self {
            Context::Message(p) => match p {
                P::FloorRequest => matches!(
                    kind,
                    K::FloorId | K::BeneficiaryId | K::ParticipantProvidedInfo | K::Priority | K::UserDisplayName
                ),
                P::FloorRelease | P::FloorRequestQuery => kind == K::FloorRequestId,
                P::FloorRequestStatus => kind == K::FloorRequestInformation,
                P::UserQuery => kind == K::BeneficiaryId,
                P::UserStatus => matches!(kind, K::BeneficiaryId | K::FloorRequestInformation),
                P::FloorQuery => kind == K::FloorId,
                P::FloorStatus => matches!(kind, K::FloorId | K::FloorRequestInformation),
                P::ChairAction => kind == K::FloorRequestInformation,
                P::ChairActionAck | P::HelloAck => false,
                P::Hello => matches!(kind, K::UserDisplayName | K::ParticipantProvidedInfo),
                P::Error => matches!(kind, K::ErrorCode | K::ErrorInfo),
            },
            Context::FloorRequestInformation => matches!(
                kind,
                K::OverallRequestStatus
                    | K::FloorRequestStatus
                    | K::BeneficiaryId
                    | K::UserDisplayName
                    | K::Priority
                    | K::ParticipantProvidedInfo
            ),
            Context::FloorRequestStatus | Context::OverallRequestStatus => {
                matches!(kind, K::RequestStatus | K::StatusInfo)
            }
        }
    }
}

const MAX_ATTRIBUTE_LEN: usize = u8::MAX as usize;

fn invalid(msg: impl Into<String>) -> EncodeError {
    EncodeError::InvalidMessage(msg.into())
}

pub(crate) fn padded(len: usize) -> usize {
    (len + 3) & !3
}

pub(crate) fn encode_list(attrs: &[Attribute], ctx: Context, out: &mut Vec<u8>) -> Result<(), EncodeError> {
    for attr in attrs {
        encode_one(attr, ctx, out)?;
    }
    Ok(())
}

fn encode_one(attr: &Attribute, ctx: Context, out: &mut Vec<u8>) -> Result<(), EncodeError> {
    let code = attr.value.kind_code();
    if code > 0x7F {
        return Err(invalid(format!("attribute type {code} does not fit in 7 bits")));
    }
    match AttributeKind::from_code(code) {
        Some(kind) if !matches!(attr.value, AttributeValue::Unknown { .. }) => {
            if !ctx.allows(kind) {
                return Err(invalid(format!("attribute type {code} is not allowed in {}", ctx.name())));
            }
        }
        Some(_) => return Err(invalid(format!("opaque attribute uses known type {code}"))),
        None => {
            if attr.mandatory {
                return Err(invalid(format!("opaque attribute type {code} cannot be mandatory")));
            }
        }
    }

    let start = out.len();
    out.push((code << 1) | u8::from(attr.mandatory));
    out.push(0);
    match &attr.value {
        AttributeValue::BeneficiaryId(v) | AttributeValue::FloorId(v) | AttributeValue::FloorRequestId(v) => {
            out.extend_from_slice(&v.to_be_bytes());
        }
        AttributeValue::Priority(p) => {
            out.push((*p as u8) << 5);
            out.push(0);
        }
        AttributeValue::RequestStatus(rs) => {
            out.push(rs.status.code());
            out.push(rs.queue_position);
        }
        AttributeValue::ErrorCode { code, details } => {
            out.push(code.code());
            out.extend_from_slice(details);
        }
        AttributeValue::ErrorInfo(s)
        | AttributeValue::ParticipantProvidedInfo(s)
        | AttributeValue::StatusInfo(s)
        | AttributeValue::UserDisplayName(s) => out.extend_from_slice(s.as_bytes()),
        AttributeValue::FloorRequestInformation { floor_request_id, attributes } => {
            out.extend_from_slice(&floor_request_id.to_be_bytes());
            encode_list(attributes, Context::FloorRequestInformation, out)?;
        }
        AttributeValue::FloorRequestStatus { floor_id, attributes } => {
            out.extend_from_slice(&floor_id.to_be_bytes());
            encode_list(attributes, Context::FloorRequestStatus, out)?;
        }
        AttributeValue::OverallRequestStatus { floor_request_id, attributes } => {
            out.extend_from_slice(&floor_request_id.to_be_bytes());
            encode_list(attributes, Context::OverallRequestStatus, out)?;
        }
        AttributeValue::Unknown { contents, .. } => out.extend_from_slice(contents),
    }
    let len = out.len() - start;
    if len > MAX_ATTRIBUTE_LEN {
        return Err(invalid(format!("attribute type {code} is {len} octets, limit is {MAX_ATTRIBUTE_LEN}")));
    }
    out[start + 1] = len as u8;
    out.resize(start + padded(len), 0);
    Ok(())
}

pub(crate) fn decode_list(mut block: &[u8], ctx: Context) -> Result<Vec<Attribute>, DecodeError> {
    let mut attrs = Vec::new();
    while !block.is_empty() {
        let (attr, consumed) = decode_one(block, ctx)?;
        attrs.push(attr);
        block = &block[consumed..];
    }
    Ok(attrs)
}

fn malformed(kind: u8, reason: &'static str) -> DecodeError {
    DecodeError::MalformedAttribute { kind, reason }
}

fn text(kind: u8, contents: &[u8]) -> Result<String, DecodeError> {
    String::from_utf8(contents.to_vec()).map_err(|_| malformed(kind, "text is not valid UTF-8"))
}

fn fixed<const N: usize>(kind: u8, contents: &[u8]) -> Result<[u8; N], DecodeError> {
    contents.try_into().map_err(|_| malformed(kind, "wrong length for fixed-size attribute"))
}

fn grouped_header(kind: u8, contents: &[u8]) -> Result<(u16, &[u8]), DecodeError> {
    if contents.len() < 2 {
        return Err(malformed(kind, "grouped attribute shorter than its header"));
    }
    Ok((u16::from_be_bytes([contents[0], contents[1]]), &contents[2..]))
}

/// Decodes the attribute at the front of a non-empty `block`, returning it with
/// the number of octets consumed including padding.
fn decode_one(block: &[u8], ctx: Context) -> Result<(Attribute, usize), DecodeError> {
    if block.len() < 2 {
        return Err(malformed(block[0] >> 1, "attribute header overruns the block"));
    }
    let code = block[0] >> 1;
    let mandatory = block[0] & 1 == 1;
    let len = usize::from(block[1]);
    if len < 2 {
        return Err(malformed(code, "length shorter than the attribute header"));
    }
    if len > block.len() {
        return Err(malformed(code, "length overruns the block"));
    }
    let consumed = padded(len);
    if consumed > block.len() {
        return Err(malformed(code, "padding overruns the block"));
    }
    let contents = &block[2..len];

    let Some(kind) = AttributeKind::from_code(code) else {
        if mandatory {
            return Err(DecodeError::UnknownMandatoryAttribute { kind: code });
        }
        let value = AttributeValue::Unknown { kind: code, contents: contents.to_vec() };
        return Ok((Attribute { mandatory, value }, consumed));
    };
    if !ctx.allows(kind) {
        return Err(DecodeError::IllegalAttribute { kind: code, context: ctx.name() });
    }

    let value = match kind {
        AttributeKind::BeneficiaryId => AttributeValue::BeneficiaryId(u16::from_be_bytes(fixed(code, contents)?)),
        AttributeKind::FloorId => AttributeValue::FloorId(u16::from_be_bytes(fixed(code, contents)?)),
        AttributeKind::FloorRequestId => AttributeValue::FloorRequestId(u16::from_be_bytes(fixed(code, contents)?)),
        AttributeKind::Priority => {
            let [hi, _] = fixed::<2>(code, contents)?;
            let level = PriorityLevel::from_code(hi >> 5).ok_or(malformed(code, "priority out of range"))?;
            AttributeValue::Priority(level)
        }
        AttributeKind::RequestStatus => {
            let [status, queue_position] = fixed::<2>(code, contents)?;
            let status = StatusCode::from_code(status).ok_or(malformed(code, "unknown request status"))?;
            AttributeValue::RequestStatus(RequestStatus { status, queue_position })
        }
        AttributeKind::ErrorCode => {
            let (&first, details) = contents.split_first().ok_or(malformed(code, "empty error code"))?;
            let error = ErrorCode::from_code(first).ok_or(malformed(code, "unknown error code"))?;
            AttributeValue::ErrorCode { code: error, details: details.to_vec() }
        }
        AttributeKind::ErrorInfo => AttributeValue::ErrorInfo(text(code, contents)?),
        AttributeKind::ParticipantProvidedInfo => AttributeValue::ParticipantProvidedInfo(text(code, contents)?),
        AttributeKind::StatusInfo => AttributeValue::StatusInfo(text(code, contents)?),
        AttributeKind::UserDisplayName => AttributeValue::UserDisplayName(text(code, contents)?),
        AttributeKind::FloorRequestInformation => {
            let (floor_request_id, rest) = grouped_header(code, contents)?;
            let attributes = decode_list(rest, Context::FloorRequestInformation)?;
            AttributeValue::FloorRequestInformation { floor_request_id, attributes }
        }
        AttributeKind::FloorRequestStatus => {
            let (floor_id, rest) = grouped_header(code, contents)?;
            let attributes = decode_list(rest, Context::FloorRequestStatus)?;
            AttributeValue::FloorRequestStatus { floor_id, attributes }
        }
        AttributeKind::OverallRequestStatus => {
            let (floor_request_id, rest) = grouped_header(code, contents)?;
            let attributes = decode_list(rest, Context::OverallRequestStatus)?;
            AttributeValue::OverallRequestStatus { floor_request_id, attributes }
        }
    };
    Ok((Attribute { mandatory, value }, consumed))
}
