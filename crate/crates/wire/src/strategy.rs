//! Proptest strategies producing valid messages: every primitive, every
//! attribute kind legal for it, nested groups and opaque attributes.

use proptest::collection::vec;
use proptest::prelude::*;

use crate::attribute::AttributeKind;
use crate::{
    Attribute, AttributeValue, BfcpMessage, CommonHeader, ErrorCode, Primitive, PriorityLevel, RequestStatus,
    StatusCode,
};

pub fn primitive() -> impl Strategy<Value = Primitive> {
    proptest::sample::select(Primitive::ALL.to_vec())
}

fn status() -> impl Strategy<Value = RequestStatus> {
    (proptest::sample::select(StatusCode::ALL.to_vec()), any::<u8>())
        .prop_map(|(status, queue_position)| RequestStatus { status, queue_position })
}

fn short_text() -> impl Strategy<Value = String> {
    "[a-zA-Z0-9 éü._-]{0,24}"
}

// Kept small so a fully populated group stays under the one-octet length.
fn group_text() -> impl Strategy<Value = String> {
    "[a-zA-Z0-9 éü._-]{0,12}"
}

fn error_code() -> impl Strategy<Value = ErrorCode> {
    (1u8..=14).prop_map(|c| ErrorCode::from_code(c).unwrap())
}

/// Opaque, non-mandatory attribute of a type this codec does not implement.
fn opaque() -> impl Strategy<Value = Attribute> {
    let kinds: Vec<u8> = (0u8..=0x7F).filter(|k| AttributeKind::from_code(*k).is_none()).collect();
    (proptest::sample::select(kinds), vec(any::<u8>(), 0..12))
        .prop_map(|(kind, contents)| Attribute::new(AttributeValue::Unknown { kind, contents }))
}

fn with_flag(value: impl Strategy<Value = AttributeValue>) -> impl Strategy<Value = Attribute> {
    (any::<bool>(), value).prop_map(|(mandatory, value)| Attribute { mandatory, value })
}

fn status_group_members() -> impl Strategy<Value = Vec<Attribute>> {
    vec(
        prop_oneof![
            with_flag(status().prop_map(AttributeValue::RequestStatus)),
            with_flag(group_text().prop_map(AttributeValue::StatusInfo)),
            opaque(),
        ],
        0..3,
    )
}

fn floor_request_information() -> impl Strategy<Value = AttributeValue> {
    let member = prop_oneof![
        with_flag((any::<u16>(), status_group_members()).prop_map(|(floor_request_id, attributes)| {
            AttributeValue::OverallRequestStatus { floor_request_id, attributes }
        })),
        with_flag(
            (any::<u16>(), status_group_members())
                .prop_map(|(floor_id, attributes)| AttributeValue::FloorRequestStatus { floor_id, attributes })
        ),
        with_flag(any::<u16>().prop_map(AttributeValue::BeneficiaryId)),
        with_flag(group_text().prop_map(AttributeValue::UserDisplayName)),
        with_flag(proptest::sample::select(PriorityLevel::ALL.to_vec()).prop_map(AttributeValue::Priority)),
        with_flag(group_text().prop_map(AttributeValue::ParticipantProvidedInfo)),
        opaque(),
    ];
    (any::<u16>(), vec(member, 0..3)).prop_map(|(floor_request_id, attributes)| {
        AttributeValue::FloorRequestInformation { floor_request_id, attributes }
    })
}

/// Attributes legal at the top level of `p`.
pub fn attributes_for(p: Primitive) -> BoxedStrategy<Vec<Attribute>> {
    let member: BoxedStrategy<Attribute> = match p {
        Primitive::FloorRequest => prop_oneof![
            with_flag(any::<u16>().prop_map(AttributeValue::FloorId)),
            with_flag(any::<u16>().prop_map(AttributeValue::BeneficiaryId)),
            with_flag(short_text().prop_map(AttributeValue::ParticipantProvidedInfo)),
            with_flag(proptest::sample::select(PriorityLevel::ALL.to_vec()).prop_map(AttributeValue::Priority)),
            with_flag(short_text().prop_map(AttributeValue::UserDisplayName)),
            opaque(),
        ]
        .boxed(),
        Primitive::FloorRelease | Primitive::FloorRequestQuery => {
            prop_oneof![with_flag(any::<u16>().prop_map(AttributeValue::FloorRequestId)), opaque(),].boxed()
        }
        Primitive::FloorRequestStatus | Primitive::ChairAction => {
            prop_oneof![with_flag(floor_request_information()), opaque()].boxed()
        }
        Primitive::UserQuery => {
            prop_oneof![with_flag(any::<u16>().prop_map(AttributeValue::BeneficiaryId)), opaque()].boxed()
        }
        Primitive::UserStatus => prop_oneof![
            with_flag(any::<u16>().prop_map(AttributeValue::BeneficiaryId)),
            with_flag(floor_request_information()),
            opaque(),
        ]
        .boxed(),
        Primitive::FloorQuery => {
            prop_oneof![with_flag(any::<u16>().prop_map(AttributeValue::FloorId)), opaque()].boxed()
        }
        Primitive::FloorStatus => prop_oneof![
            with_flag(any::<u16>().prop_map(AttributeValue::FloorId)),
            with_flag(floor_request_information()),
            opaque(),
        ]
        .boxed(),
        Primitive::ChairActionAck | Primitive::HelloAck => opaque().boxed(),
        Primitive::Hello => prop_oneof![
            with_flag(short_text().prop_map(AttributeValue::UserDisplayName)),
            with_flag(short_text().prop_map(AttributeValue::ParticipantProvidedInfo)),
            opaque(),
        ]
        .boxed(),
        Primitive::Error => prop_oneof![
            with_flag(
                (error_code(), vec(any::<u8>(), 0..6))
                    .prop_map(|(code, details)| AttributeValue::ErrorCode { code, details })
            ),
            with_flag(short_text().prop_map(AttributeValue::ErrorInfo)),
            opaque(),
        ]
        .boxed(),
    };
    vec(member, 0..5).boxed()
}

pub fn message() -> impl Strategy<Value = BfcpMessage> {
    (primitive(), any::<u32>(), any::<u16>(), any::<u16>()).prop_flat_map(|(primitive, conf, tx, user)| {
        attributes_for(primitive).prop_map(move |attributes| BfcpMessage {
            header: CommonHeader { primitive, conference_id: conf, transaction_id: tx, user_id: user },
            attributes,
        })
    })
}
