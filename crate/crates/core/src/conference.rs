//! The moderated queue of one conference.
//!
//! Each floor keeps its queued (pending/accepted) requests in position order
//! and its holders in grant order. Queue order is business class first, then
//! accepted before pending; accepted requests keep the order in which the
//! chair accepted them, pending ones their arrival order.
//!
//! Nothing here locks. Callers serialize all mutations for a conference.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::clock::{Clock, SystemClock};
use crate::error::FloorError;
use crate::event::{FloorEvent, FloorEventKind};
use crate::types::{FloorId, FloorPolicy, FloorRequestRecord, Origin, Priority, RequestId, RequestState, UserId};

pub const DEFAULT_TERMINAL_RETENTION: Duration = Duration::from_secs(30);

/// Result of a mutation together with the events it produced, in order.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome<T> {
    pub value: T,
    pub events: Vec<FloorEvent>,
}

/// Chair-facing view of a floor: holders and recent holders by grant order,
/// then the queue by position, then recently denied or cancelled requests.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct QueueSnapshot {
    pub floor_id: FloorId,
    pub name: String,
    pub policy: FloorPolicy,
    pub entries: Vec<FloorRequestRecord>,
}

#[derive(Debug, Clone, Default)]
struct Sequencer {
    arrival: u64,
    order: u64,
    event: u64,
}

impl Sequencer {
    fn next_order(&mut self) -> u64 {
        self.order += 1;
        self.order
    }
}

#[derive(Debug, Clone)]
pub struct FloorState {
    floor_id: FloorId,
    name: String,
    policy: FloorPolicy,
    records: BTreeMap<RequestId, FloorRequestRecord>,
    queue: Vec<RequestId>,
    granted: Vec<RequestId>,
    accepted_at: BTreeMap<RequestId, u64>,
    closed_at: BTreeMap<RequestId, Instant>,
}

impl FloorState {
    fn new(floor_id: FloorId, name: String, policy: FloorPolicy) -> FloorState {
        FloorState {
            floor_id,
            name,
            policy,
            records: BTreeMap::new(),
            queue: Vec::new(),
            granted: Vec::new(),
            accepted_at: BTreeMap::new(),
            closed_at: BTreeMap::new(),
        }
    }

    pub fn floor_id(&self) -> FloorId {
        self.floor_id
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn policy(&self) -> FloorPolicy {
        self.policy
    }

    pub fn granted_count(&self) -> usize {
        self.granted.len()
    }

    /// Every retained record, in request id order.
    pub fn records(&self) -> impl Iterator<Item = &FloorRequestRecord> {
        self.records.values()
    }

    pub fn queue(&self) -> &[RequestId] {
        &self.queue
    }

    fn sort_key(&self, id: RequestId) -> (u8, u8, u64) {
        let rec = &self.records[&id];
        match rec.state {
            RequestState::Accepted => (rec.priority.rank(), 0, self.accepted_at[&id]),
            _ => (rec.priority.rank(), 1, rec.arrival_seq),
        }
    }

    fn enqueue(&mut self, id: RequestId) {
        let key = self.sort_key(id);
        let at = self.queue.partition_point(|q| self.sort_key(*q) < key);
        self.queue.insert(at, id);
    }

    fn renumber(&mut self) {
        for (i, id) in self.queue.iter().enumerate() {
            if let Some(rec) = self.records.get_mut(id) {
                rec.queue_position = i as u32 + 1;
            }
        }
    }

    fn push_event(&self, seq: &mut Sequencer, kind: FloorEventKind, events: &mut Vec<FloorEvent>) {
        seq.event += 1;
        events.push(FloorEvent { seq: seq.event, floor_id: self.floor_id, kind, queue: self.queue.clone() });
    }

    fn transition(
        &mut self,
        seq: &mut Sequencer,
        now: Instant,
        id: RequestId,
        to: RequestState,
        events: &mut Vec<FloorEvent>,
    ) {
        let from = self.records[&id].state;
        debug_assert!(RequestState::can_transition(Some(from), to), "{from} -> {to}");
        if from.is_queued() {
            self.queue.retain(|q| *q != id);
        } else if from == RequestState::Granted {
            self.granted.retain(|g| *g != id);
        }
        let rec = self.records.get_mut(&id).expect("transition on unknown record");
        rec.state = to;
        match to {
            RequestState::Pending => unreachable!("requests are created pending, never return to it"),
            RequestState::Accepted => {
                self.accepted_at.insert(id, seq.next_order());
                self.enqueue(id);
            }
            RequestState::Granted => {
                rec.queue_position = 0;
                rec.grant_seq = Some(seq.next_order());
                self.accepted_at.remove(&id);
                self.granted.push(id);
            }
            _ => {
                rec.queue_position = 0;
                rec.closed_seq = Some(seq.next_order());
                self.accepted_at.remove(&id);
                self.closed_at.insert(id, now);
            }
        }
        self.renumber();
        let request = self.records[&id].clone();
        self.push_event(
            seq,
            FloorEventKind::RequestStateChanged { request, old_state: Some(from), new_state: to },
            events,
        );
    }

    fn has_free_slot(&self) -> bool {
        (self.granted.len() as u64) < u64::from(self.policy.max_granted)
    }

    /// Fills free grant slots from the head of the accepted segment, then, under
    /// auto-grant, from pending requests in queue order.
    fn promote(&mut self, seq: &mut Sequencer, now: Instant, events: &mut Vec<FloorEvent>) -> Vec<RequestId> {
        let mut promoted = Vec::new();
        while self.has_free_slot() {
            let state_of = |id: &RequestId| self.records[id].state;
            let next = self
                .queue
                .iter()
                .find(|id| state_of(id) == RequestState::Accepted)
                .or_else(|| {
                    self.policy
                        .auto_grant
                        .then(|| self.queue.iter().find(|id| state_of(id) == RequestState::Pending))
                        .flatten()
                })
                .copied();
            let Some(id) = next else { break };
            self.transition(seq, now, id, RequestState::Granted, events);
            promoted.push(id);
        }
        promoted
    }

    fn is_retained(&self, id: RequestId, now: Instant, retention: Duration) -> bool {
        match self.closed_at.get(&id) {
            Some(at) => now.saturating_duration_since(*at) < retention,
            None => true,
        }
    }

    fn snapshot(&self, now: Instant, retention: Duration) -> QueueSnapshot {
        let mut holders: Vec<&FloorRequestRecord> = self
            .records
            .values()
            .filter(|r| r.grant_seq.is_some() && self.is_retained(r.request_id, now, retention))
            .collect();
        holders.sort_by_key(|r| r.grant_seq);
        let mut closed: Vec<&FloorRequestRecord> = self
            .records
            .values()
            .filter(|r| {
                r.grant_seq.is_none() && r.state.is_terminal() && self.is_retained(r.request_id, now, retention)
            })
            .collect();
        closed.sort_by_key(|r| r.closed_seq);
        let entries =
            holders.into_iter().chain(self.queue.iter().map(|id| &self.records[id])).chain(closed).cloned().collect();
        QueueSnapshot { floor_id: self.floor_id, name: self.name.clone(), policy: self.policy, entries }
    }
}

/// All floors of one conference and the counters shared between them.
#[derive(Debug, Clone)]
pub struct Conference {
    floors: BTreeMap<FloorId, FloorState>,
    request_floor: BTreeMap<RequestId, FloorId>,
    next_request_id: u32,
    seq: Sequencer,
    retention: Duration,
    clock: Arc<dyn Clock>,
}

impl Default for Conference {
    fn default() -> Self {
        Conference::new()
    }
}

impl Conference {
    pub fn new() -> Conference {
        Conference::with_clock(Arc::new(SystemClock))
    }

    pub fn with_clock(clock: Arc<dyn Clock>) -> Conference {
        Conference {
            floors: BTreeMap::new(),
            request_floor: BTreeMap::new(),
            next_request_id: 1,
            seq: Sequencer::default(),
            retention: DEFAULT_TERMINAL_RETENTION,
            clock,
        }
    }

    /// How long denied, cancelled, released and revoked requests stay visible.
    pub fn set_terminal_retention(&mut self, retention: Duration) {
        self.retention = retention;
    }

    pub fn add_floor(
        &mut self,
        floor_id: FloorId,
        name: impl Into<String>,
        policy: FloorPolicy,
    ) -> Result<(), FloorError> {
        if !policy.is_valid() {
            return Err(FloorError::InvalidPolicy);
        }
        self.floors.insert(floor_id, FloorState::new(floor_id, name.into(), policy));
        Ok(())
    }

    pub fn floor(&self, floor_id: FloorId) -> Option<&FloorState> {
        self.floors.get(&floor_id)
    }

    pub fn floors(&self) -> impl Iterator<Item = &FloorState> {
        self.floors.values()
    }

    pub fn record(&self, id: RequestId) -> Option<&FloorRequestRecord> {
        let floor = self.request_floor.get(&id)?;
        self.floors[floor].records.get(&id)
    }

    /// The user's pending, accepted or granted request on `floor`, if any.
    pub fn live_request(&self, user: UserId, floor: FloorId) -> Option<&FloorRequestRecord> {
        self.floors.get(&floor)?.records.values().find(|r| r.user_id == user && r.state.is_live())
    }

    pub fn requests_of(&self, user: UserId) -> Vec<&FloorRequestRecord> {
        self.floors.values().flat_map(|f| f.records.values()).filter(|r| r.user_id == user).collect()
    }

    /// Last event sequence number handed out.
    pub fn last_event_seq(&self) -> u64 {
        self.seq.event
    }

    pub fn snapshot(&self, floor_id: FloorId) -> Result<QueueSnapshot, FloorError> {
        let floor = self.floors.get(&floor_id).ok_or(FloorError::UnknownFloor(floor_id))?;
        Ok(floor.snapshot(self.clock.now(), self.retention))
    }

    fn collect_garbage(&mut self, now: Instant) {
        let retention = self.retention;
        for floor in self.floors.values_mut() {
            let expired: Vec<RequestId> = floor
                .closed_at
                .iter()
                .filter(|(_, at)| now.saturating_duration_since(**at) >= retention)
                .map(|(id, _)| *id)
                .collect();
            for id in expired {
                floor.closed_at.remove(&id);
                floor.records.remove(&id);
                self.request_floor.remove(&id);
            }
        }
    }

    /// Runs `f` against the floor holding `id` after checking its state.
    fn mutate_request<T>(
        &mut self,
        id: RequestId,
        check: impl FnOnce(&FloorRequestRecord) -> Result<(), FloorError>,
        f: impl FnOnce(&mut FloorState, &mut Sequencer, Instant, &mut Vec<FloorEvent>) -> T,
    ) -> Result<Outcome<T>, FloorError> {
        let now = self.clock.now();
        self.collect_garbage(now);
        let floor_id = *self.request_floor.get(&id).ok_or(FloorError::UnknownRequest(id))?;
        let floor = self.floors.get_mut(&floor_id).expect("request indexed to missing floor");
        check(&floor.records[&id])?;
        let mut events = Vec::new();
        let value = f(floor, &mut self.seq, now, &mut events);
        Ok(Outcome { value, events })
    }

    pub fn submit_request(
        &mut self,
        floor_id: FloorId,
        user: UserId,
        display_name: impl Into<String>,
        origin: Origin,
        priority: Priority,
    ) -> Result<Outcome<FloorRequestRecord>, FloorError> {
        let now = self.clock.now();
        self.collect_garbage(now);
        let floor = self.floors.get_mut(&floor_id).ok_or(FloorError::UnknownFloor(floor_id))?;
        if let Some(existing) = floor.records.values().find(|r| r.user_id == user && r.state.is_live()) {
            return Err(FloorError::DuplicateRequest { user, floor: floor_id, existing: existing.request_id });
        }
        let id = u16::try_from(self.next_request_id).map_err(|_| FloorError::RequestIdsExhausted)?;
        let id = RequestId(id);
        self.next_request_id += 1;
        self.seq.arrival += 1;

        let record = FloorRequestRecord {
            request_id: id,
            floor_id,
            user_id: user,
            display_name: display_name.into(),
            origin,
            priority,
            state: RequestState::Pending,
            arrival_seq: self.seq.arrival,
            queue_position: 0,
            grant_seq: None,
            closed_seq: None,
        };
        floor.records.insert(id, record);
        self.request_floor.insert(id, floor_id);
        floor.enqueue(id);
        floor.renumber();

        let mut events = Vec::new();
        let request = floor.records[&id].clone();
        floor.push_event(
            &mut self.seq,
            FloorEventKind::RequestStateChanged { request, old_state: None, new_state: RequestState::Pending },
            &mut events,
        );
        if floor.policy.auto_grant && floor.has_free_slot() {
            floor.transition(&mut self.seq, now, id, RequestState::Granted, &mut events);
        }
        Ok(Outcome { value: floor.records[&id].clone(), events })
    }

    pub fn cancel_request(&mut self, id: RequestId) -> Result<Outcome<FloorRequestRecord>, FloorError> {
        self.mutate_request(
            id,
            |r| if r.state.is_queued() { Ok(()) } else { Err(FloorError::NotCancellable(id, r.state)) },
            |floor, seq, now, events| {
                floor.transition(seq, now, id, RequestState::Cancelled, events);
                floor.records[&id].clone()
            },
        )
    }

    pub fn release_floor(&mut self, id: RequestId) -> Result<Outcome<FloorRequestRecord>, FloorError> {
        self.end_grant(id, RequestState::Released)
    }

    pub fn chair_revoke(&mut self, id: RequestId) -> Result<Outcome<FloorRequestRecord>, FloorError> {
        self.end_grant(id, RequestState::Revoked)
    }

    fn end_grant(&mut self, id: RequestId, to: RequestState) -> Result<Outcome<FloorRequestRecord>, FloorError> {
        self.mutate_request(
            id,
            |r| if r.state == RequestState::Granted { Ok(()) } else { Err(FloorError::NotGranted(id, r.state)) },
            |floor, seq, now, events| {
                floor.transition(seq, now, id, to, events);
                floor.promote(seq, now, events);
                floor.records[&id].clone()
            },
        )
    }

    /// Accepts a pending request into the accepted segment, then fills any free
    /// grant slot from the head of that segment. With a free slot and nobody
    /// else accepted, the request passes straight through to GRANTED.
    pub fn chair_accept(&mut self, id: RequestId) -> Result<Outcome<FloorRequestRecord>, FloorError> {
        self.mutate_request(
            id,
            |r| if r.state == RequestState::Pending { Ok(()) } else { Err(FloorError::NotPending(id, r.state)) },
            |floor, seq, now, events| {
                floor.transition(seq, now, id, RequestState::Accepted, events);
                floor.promote(seq, now, events);
                floor.records[&id].clone()
            },
        )
    }

    pub fn chair_deny(&mut self, id: RequestId) -> Result<Outcome<FloorRequestRecord>, FloorError> {
        self.mutate_request(
            id,
            |r| if r.state.is_queued() { Ok(()) } else { Err(FloorError::NotDeniable(id, r.state)) },
            |floor, seq, now, events| {
                floor.transition(seq, now, id, RequestState::Denied, events);
                floor.records[&id].clone()
            },
        )
    }

    /// Revokes every current grant on the floor at once. Accepted requests are
    /// left waiting: no promotion runs for this batch.
    pub fn chair_revoke_all(&mut self, floor_id: FloorId) -> Result<Outcome<Vec<FloorRequestRecord>>, FloorError> {
        let now = self.clock.now();
        self.collect_garbage(now);
        let floor = self.floors.get_mut(&floor_id).ok_or(FloorError::UnknownFloor(floor_id))?;
        let mut events = Vec::new();
        let holders = floor.granted.clone();
        let mut revoked = Vec::with_capacity(holders.len());
        for id in holders {
            floor.transition(&mut self.seq, now, id, RequestState::Revoked, &mut events);
            revoked.push(floor.records[&id].clone());
        }
        Ok(Outcome { value: revoked, events })
    }

    pub fn chair_set_priority(
        &mut self,
        id: RequestId,
        priority: Priority,
    ) -> Result<Outcome<FloorRequestRecord>, FloorError> {
        self.mutate_request(
            id,
            |r| if r.state.is_queued() { Ok(()) } else { Err(FloorError::NotReorderable(id, r.state)) },
            |floor, seq, _now, events| {
                if floor.records[&id].priority != priority {
                    floor.records.get_mut(&id).unwrap().priority = priority;
                    floor.queue.retain(|q| *q != id);
                    floor.enqueue(id);
                    floor.renumber();
                    let request = floor.records[&id].clone();
                    floor.push_event(seq, FloorEventKind::QueueReordered { request }, events);
                }
                floor.records[&id].clone()
            },
        )
    }

    /// Replaces the floor policy. Widening it (more slots, or turning on
    /// auto-grant) runs a promotion pass; narrowing it never revokes anyone.
    pub fn set_policy(&mut self, floor_id: FloorId, policy: FloorPolicy) -> Result<Outcome<FloorPolicy>, FloorError> {
        if !policy.is_valid() {
            return Err(FloorError::InvalidPolicy);
        }
        let now = self.clock.now();
        self.collect_garbage(now);
        let floor = self.floors.get_mut(&floor_id).ok_or(FloorError::UnknownFloor(floor_id))?;
        let old = floor.policy;
        let widened = policy.max_granted > old.max_granted || (policy.auto_grant && !old.auto_grant);
        floor.policy = policy;
        let mut events = Vec::new();
        floor.push_event(&mut self.seq, FloorEventKind::PolicyChanged { policy }, &mut events);
        if widened {
            floor.promote(&mut self.seq, now, &mut events);
        }
        Ok(Outcome { value: policy, events })
    }
}
