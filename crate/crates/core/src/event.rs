use serde::{Deserialize, Serialize};

use crate::types::{FloorId, FloorPolicy, FloorRequestRecord, RequestId, RequestState};

/// A change produced by a mutation. Every state transition yields exactly one
/// `RequestStateChanged`; creation is reported with no old state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FloorEvent {
    pub seq: u64,
    pub floor_id: FloorId,
    #[serde(flatten)]
    pub kind: FloorEventKind,
    /// Queued request ids in position order right after this event.
    pub queue: Vec<RequestId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FloorEventKind {
    RequestStateChanged { request: FloorRequestRecord, old_state: Option<RequestState>, new_state: RequestState },
    QueueReordered { request: FloorRequestRecord },
    PolicyChanged { policy: FloorPolicy },
}

impl FloorEvent {
    pub fn request(&self) -> Option<&FloorRequestRecord> {
        match &self.kind {
            FloorEventKind::RequestStateChanged { request, .. } | FloorEventKind::QueueReordered { request } => {
                Some(request)
            }
            FloorEventKind::PolicyChanged { .. } => None,
        }
    }

    /// `(old, new)` for state-change events.
    pub fn transition(&self) -> Option<(Option<RequestState>, RequestState)> {
        match &self.kind {
            FloorEventKind::RequestStateChanged { old_state, new_state, .. } => Some((*old_state, *new_state)),
            _ => None,
        }
    }
}
