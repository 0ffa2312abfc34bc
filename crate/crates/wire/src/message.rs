use crate::attribute::{self, Attribute, AttributeValue, Context, RequestStatus};
use crate::error::{DecodeError, EncodeError};
use crate::header::{CommonHeader, Primitive, RawHeader, HEADER_LEN, MAX_PAYLOAD_LEN, VERSION};

/// A decoded wire unit: common header plus ordered attributes.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BfcpMessage {
    pub header: CommonHeader,
    pub attributes: Vec<Attribute>,
}

impl BfcpMessage {
    pub fn new(primitive: Primitive, conference_id: u32, transaction_id: u16, user_id: u16) -> BfcpMessage {
        BfcpMessage {
            header: CommonHeader { primitive, conference_id, transaction_id, user_id },
            attributes: Vec::new(),
        }
    }

    pub fn with(mut self, attr: impl Into<Attribute>) -> BfcpMessage {
        self.attributes.push(attr.into());
        self
    }

    /// A reply to `self` with the same conference, transaction and user.
    pub fn reply(&self, primitive: Primitive) -> BfcpMessage {
        let h = &self.header;
        BfcpMessage::new(primitive, h.conference_id, h.transaction_id, h.user_id)
    }

    pub fn primitive(&self) -> Primitive {
        self.header.primitive
    }

    pub fn floor_ids(&self) -> impl Iterator<Item = u16> + '_ {
        self.attributes.iter().filter_map(|a| match a.value {
            AttributeValue::FloorId(id) => Some(id),
            _ => None,
        })
    }

    pub fn floor_request_id(&self) -> Option<u16> {
        self.attributes.iter().find_map(|a| match a.value {
            AttributeValue::FloorRequestId(id) => Some(id),
            _ => None,
        })
    }

    pub fn floor_request_information(&self) -> impl Iterator<Item = (u16, &[Attribute])> {
        self.attributes.iter().filter_map(|a| match &a.value {
            AttributeValue::FloorRequestInformation { floor_request_id, attributes } => {
                Some((*floor_request_id, attributes.as_slice()))
            }
            _ => None,
        })
    }

    pub fn encode(&self) -> Result<Vec<u8>, EncodeError> {
        encode(self)
    }

    pub fn decode(bytes: &[u8]) -> Result<BfcpMessage, DecodeError> {
        decode(bytes)
    }
}

/// The REQUEST-STATUS carried in a floor request information group, looking in
/// OVERALL-REQUEST-STATUS first and then in any FLOOR-REQUEST-STATUS.
pub fn request_status_in(attrs: &[Attribute]) -> Option<RequestStatus> {
    let find = |inner: &[Attribute]| {
        inner.iter().find_map(|a| match a.value {
            AttributeValue::RequestStatus(rs) => Some(rs),
            _ => None,
        })
    };
    let overall = attrs.iter().find_map(|a| match &a.value {
        AttributeValue::OverallRequestStatus { attributes, .. } => find(attributes),
        _ => None,
    });
    overall.or_else(|| {
        attrs.iter().find_map(|a| match &a.value {
            AttributeValue::FloorRequestStatus { attributes, .. } => find(attributes),
            _ => None,
        })
    })
}

/// Serializes a message. The header's payload length is always recomputed
/// from the attribute block.
pub fn encode(msg: &BfcpMessage) -> Result<Vec<u8>, EncodeError> {
    let mut out = Vec::with_capacity(HEADER_LEN + 16);
    out.resize(HEADER_LEN, 0);
    attribute::encode_list(&msg.attributes, Context::Message(msg.header.primitive), &mut out)?;
    let payload = out.len() - HEADER_LEN;
    if payload > MAX_PAYLOAD_LEN {
        return Err(EncodeError::InvalidMessage(format!(
            "attribute block is {payload} octets, limit is {MAX_PAYLOAD_LEN}"
        )));
    }
    let h = &msg.header;
    let raw = RawHeader {
        version: VERSION,
        primitive: h.primitive.code(),
        payload_length: (payload / 4) as u16,
        conference_id: h.conference_id,
        transaction_id: h.transaction_id,
        user_id: h.user_id,
    };
    let mut head = Vec::with_capacity(HEADER_LEN);
    raw.write(&mut head);
    out[..HEADER_LEN].copy_from_slice(&head);
    Ok(out)
}

/// Parses exactly one message. Never panics, whatever the input.
pub fn decode(bytes: &[u8]) -> Result<BfcpMessage, DecodeError> {
    let raw = RawHeader::parse(bytes)?;
    let total = raw.check_frame()?;
    if bytes.len() < total {
        return Err(DecodeError::Truncated { needed: total, available: bytes.len() });
    }
    if bytes.len() > total {
        return Err(DecodeError::TrailingBytes { extra: bytes.len() - total });
    }
    let primitive = Primitive::try_from(raw.primitive)?;
    let attributes = attribute::decode_list(&bytes[HEADER_LEN..total], Context::Message(primitive))?;
    Ok(BfcpMessage {
        header: CommonHeader {
            primitive,
            conference_id: raw.conference_id,
            transaction_id: raw.transaction_id,
            user_id: raw.user_id,
        },
        attributes,
    })
}
