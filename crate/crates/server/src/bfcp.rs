//! Translation between queue records and protocol messages.

use floorctl_core::{FloorError, FloorId, FloorRequestRecord, Priority, RequestState};
use floorctl_wire::{
    Attribute, AttributeValue, BfcpMessage, ErrorCode, Primitive, PriorityLevel, RequestStatus, StatusCode,
};

/// Most requests listed in one FloorStatus; keeps the message well under the
/// payload cap.
pub const FLOOR_STATUS_LIMIT: usize = 100;

/// Display names are cut to this many octets on the wire so that a request
/// information group always fits its one-octet length.
pub const WIRE_NAME_LIMIT: usize = 64;

pub fn status_code(state: RequestState) -> StatusCode {
    match state {
        RequestState::Pending => StatusCode::Pending,
        RequestState::Accepted => StatusCode::Accepted,
        RequestState::Granted => StatusCode::Granted,
        RequestState::Denied => StatusCode::Denied,
        RequestState::Cancelled => StatusCode::Cancelled,
        RequestState::Released => StatusCode::Released,
        RequestState::Revoked => StatusCode::Revoked,
    }
}

pub fn request_state(code: StatusCode) -> RequestState {
    match code {
        StatusCode::Pending => RequestState::Pending,
        StatusCode::Accepted => RequestState::Accepted,
        StatusCode::Granted => RequestState::Granted,
        StatusCode::Denied => RequestState::Denied,
        StatusCode::Cancelled => RequestState::Cancelled,
        StatusCode::Released => RequestState::Released,
        StatusCode::Revoked => RequestState::Revoked,
    }
}

pub fn priority_level(priority: Priority) -> PriorityLevel {
    match priority {
        Priority::Normal => PriorityLevel::Normal,
        Priority::BusinessClass => PriorityLevel::Highest,
    }
}

/// High and Highest both mean business class.
pub fn priority_from(level: PriorityLevel) -> Priority {
    if level >= PriorityLevel::High {
        Priority::BusinessClass
    } else {
        Priority::Normal
    }
}

pub fn wire_name(name: &str) -> String {
    if name.len() <= WIRE_NAME_LIMIT {
        return name.to_owned();
    }
    let mut end = WIRE_NAME_LIMIT;
    while !name.is_char_boundary(end) {
        end -= 1;
    }
    name[..end].to_owned()
}

/// FLOOR-REQUEST-INFORMATION describing `record`. `seq` goes into STATUS-INFO
/// as `seq=<n>`.
pub fn request_information(record: &FloorRequestRecord, seq: Option<u64>) -> Attribute {
    let mut overall = vec![Attribute::new(AttributeValue::RequestStatus(RequestStatus {
        status: status_code(record.state),
        queue_position: record.queue_position.min(u32::from(u8::MAX)) as u8,
    }))];
    if let Some(seq) = seq {
        overall.push(Attribute::new(AttributeValue::StatusInfo(format!("seq={seq}"))));
    }
    Attribute::new(AttributeValue::FloorRequestInformation {
        floor_request_id: record.request_id.0,
        attributes: vec![
            Attribute::new(AttributeValue::OverallRequestStatus {
                floor_request_id: record.request_id.0,
                attributes: overall,
            }),
            Attribute::new(AttributeValue::FloorRequestStatus { floor_id: record.floor_id.0, attributes: vec![] }),
            Attribute::new(AttributeValue::BeneficiaryId(record.user_id.0)),
            Attribute::new(AttributeValue::UserDisplayName(wire_name(&record.display_name))),
            Attribute::new(AttributeValue::Priority(priority_level(record.priority))),
        ],
    })
}

/// FloorRequestStatus about `record`. The transaction id is filled in by the
/// caller (echoed for replies, assigned by the session writer otherwise).
pub fn floor_request_status(
    conference_id: u32,
    user_id: u16,
    record: &FloorRequestRecord,
    seq: Option<u64>,
) -> BfcpMessage {
    BfcpMessage::new(Primitive::FloorRequestStatus, conference_id, 0, user_id).with(request_information(record, seq))
}

/// FloorStatus listing the holders and the queue of a floor. The request
/// information groups carry no sequence numbers; `seq` is reported once in the
/// first group, if there is one.
pub fn floor_status<'a>(
    conference_id: u32,
    user_id: u16,
    floor: FloorId,
    live: impl IntoIterator<Item = &'a FloorRequestRecord>,
    seq: Option<u64>,
) -> BfcpMessage {
    let mut msg =
        BfcpMessage::new(Primitive::FloorStatus, conference_id, 0, user_id).with(AttributeValue::FloorId(floor.0));
    for (i, record) in live.into_iter().take(FLOOR_STATUS_LIMIT).enumerate() {
        msg = msg.with(request_information(record, if i == 0 { seq } else { None }));
    }
    msg
}

pub fn error_reply(request: &BfcpMessage, code: ErrorCode, info: impl Into<String>) -> BfcpMessage {
    error_message(request.header.conference_id, request.header.transaction_id, request.header.user_id, code, info)
}

pub fn error_message(
    conference_id: u32,
    transaction_id: u16,
    user_id: u16,
    code: ErrorCode,
    info: impl Into<String>,
) -> BfcpMessage {
    let mut info: String = info.into();
    // ERROR-INFO is a single attribute; keep it within its length octet.
    if info.len() > 200 {
        let mut end = 200;
        while !info.is_char_boundary(end) {
            end -= 1;
        }
        info.truncate(end);
    }
    let msg = BfcpMessage::new(Primitive::Error, conference_id, transaction_id, user_id)
        .with(AttributeValue::ErrorCode { code, details: vec![] });
    if info.is_empty() {
        msg
    } else {
        msg.with(AttributeValue::ErrorInfo(info))
    }
}

pub fn error_code_for(err: &FloorError) -> ErrorCode {
    match err {
        FloorError::UnknownFloor(_) => ErrorCode::InvalidFloorId,
        FloorError::UnknownRequest(_) => ErrorCode::FloorRequestIdDoesNotExist,
        FloorError::DuplicateRequest { .. } => ErrorCode::MaxFloorRequestsReached,
        _ => ErrorCode::GenericError,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use floorctl_core::{Origin, RequestId, UserId};

    fn record(name: &str) -> FloorRequestRecord {
        FloorRequestRecord {
            request_id: RequestId(7),
            floor_id: FloorId(1),
            user_id: UserId(3),
            display_name: name.into(),
            origin: Origin::BfcpClient,
            priority: Priority::BusinessClass,
            state: RequestState::Pending,
            arrival_seq: 2,
            queue_position: 300,
            grant_seq: None,
            closed_seq: None,
        }
    }

    #[test]
    fn status_round_trip() {
        for state in RequestState::ALL {
            assert_eq!(request_state(status_code(state)), state);
        }
    }

    #[test]
    fn request_status_message_encodes_and_reads_back() {
        let mut msg = floor_request_status(1, 3, &record(&"é".repeat(100)), Some(12));
        msg.header.transaction_id = 4;
        let bytes = msg.encode().unwrap();
        let back = BfcpMessage::decode(&bytes).unwrap();
        let (id, group) = back.floor_request_information().next().unwrap();
        assert_eq!(id, 7);
        let status = floorctl_wire::request_status_in(group).unwrap();
        assert_eq!((status.status, status.queue_position), (StatusCode::Pending, 255));
    }

    #[test]
    fn full_floor_status_fits() {
        let records: Vec<_> = (0..500).map(|_| record(&"x".repeat(200))).collect();
        let msg = floor_status(1, 3, FloorId(1), &records, Some(1));
        assert_eq!(msg.floor_request_information().count(), FLOOR_STATUS_LIMIT);
        assert!(msg.encode().is_ok());
    }

    #[test]
    fn long_error_info_is_cut() {
        let req = BfcpMessage::new(Primitive::FloorRequest, 1, 5, 3);
        assert!(error_reply(&req, ErrorCode::GenericError, "x".repeat(1000)).encode().is_ok());
    }
}
