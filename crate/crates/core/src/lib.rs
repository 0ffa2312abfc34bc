//! Floor queue state machine: per-floor request queues, grant caps, chair
//! operations and the events they produce.

mod clock;
mod conference;
mod error;
mod event;
mod types;

#[cfg(feature = "reference-model")]
pub mod reference;

pub use clock::{Clock, ManualClock, SystemClock};
pub use conference::{Conference, FloorState, Outcome, QueueSnapshot, DEFAULT_TERMINAL_RETENTION};
pub use error::FloorError;
pub use event::{FloorEvent, FloorEventKind};
pub use types::{FloorId, FloorPolicy, FloorRequestRecord, Origin, Priority, RequestId, RequestState, UserId};
