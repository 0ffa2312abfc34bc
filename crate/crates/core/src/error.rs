use thiserror::Error;

use crate::types::{FloorId, RequestId, RequestState, UserId};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FloorError {
    #[error("unknown floor {0}")]
    UnknownFloor(FloorId),

    #[error("unknown request {0}")]
    UnknownRequest(RequestId),

    #[error("user {user} already has live request {existing} on floor {floor}")]
    DuplicateRequest { user: UserId, floor: FloorId, existing: RequestId },

    #[error("request {0} is {1} and cannot be cancelled")]
    NotCancellable(RequestId, RequestState),

    #[error("request {0} is {1}, not GRANTED")]
    NotGranted(RequestId, RequestState),

    #[error("request {0} is {1}, not PENDING")]
    NotPending(RequestId, RequestState),

    #[error("request {0} is {1} and cannot be denied")]
    NotDeniable(RequestId, RequestState),

    #[error("request {0} is {1} and cannot be reprioritized")]
    NotReorderable(RequestId, RequestState),

    #[error("invalid policy: max_granted must be at least 1")]
    InvalidPolicy,

    #[error("request identifiers exhausted for this conference")]
    RequestIdsExhausted,
}

impl FloorError {
    /// Stable machine-readable name, used in HTTP error bodies.
    pub fn code(&self) -> &'static str {
        match self {
            FloorError::UnknownFloor(_) => "UnknownFloor",
            FloorError::UnknownRequest(_) => "UnknownRequest",
            FloorError::DuplicateRequest { .. } => "DuplicateRequest",
            FloorError::NotCancellable(..) => "NotCancellable",
            FloorError::NotGranted(..) => "NotGranted",
            FloorError::NotPending(..) => "NotPending",
            FloorError::NotDeniable(..) => "NotDeniable",
            FloorError::NotReorderable(..) => "NotReorderable",
            FloorError::InvalidPolicy => "InvalidPolicy",
            FloorError::RequestIdsExhausted => "RequestIdsExhausted",
        }
    }
}
