//! Brute-force model of the floor queue plus harnesses that drive it side by
//! side with [`Conference`].
//!
//! The model keeps one flat list of requests and recomputes every ordering by
//! sorting on demand. It shares the public types with the real queue but none
//! of its logic.

use std::fmt;
use std::sync::Arc;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::{
    Conference, FloorError, FloorEventKind, FloorId, FloorPolicy, ManualClock, Origin, Priority, RequestId,
    RequestState, UserId,
};

/// An operation addressed by (floor, user) instead of request id, so that the
/// same sequence can be replayed against both implementations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Submit { floor: FloorId, user: UserId, priority: Priority },
    Cancel { floor: FloorId, user: UserId },
    Release { floor: FloorId, user: UserId },
    Accept { floor: FloorId, user: UserId },
    Deny { floor: FloorId, user: UserId },
    Revoke { floor: FloorId, user: UserId },
    SetPriority { floor: FloorId, user: UserId, priority: Priority },
    RevokeAll { floor: FloorId },
    SetPolicy { floor: FloorId, policy: FloorPolicy },
}

impl Op {
    fn handle(&self) -> Option<(FloorId, UserId)> {
        match *self {
            Op::Cancel { floor, user }
            | Op::Release { floor, user }
            | Op::Accept { floor, user }
            | Op::Deny { floor, user }
            | Op::Revoke { floor, user }
            | Op::SetPriority { floor, user, .. } => Some((floor, user)),
            _ => None,
        }
    }
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Op::Submit { floor, user, priority } => write!(f, "submit(f{floor}, u{user}, {priority})"),
            Op::Cancel { floor, user } => write!(f, "cancel(f{floor}, u{user})"),
            Op::Release { floor, user } => write!(f, "release(f{floor}, u{user})"),
            Op::Accept { floor, user } => write!(f, "accept(f{floor}, u{user})"),
            Op::Deny { floor, user } => write!(f, "deny(f{floor}, u{user})"),
            Op::Revoke { floor, user } => write!(f, "revoke(f{floor}, u{user})"),
            Op::SetPriority { floor, user, priority } => write!(f, "priority(f{floor}, u{user}, {priority})"),
            Op::RevokeAll { floor } => write!(f, "revoke_all(f{floor})"),
            Op::SetPolicy { floor, policy } => {
                write!(f, "policy(f{floor}, n={}, auto={})", policy.max_granted, policy.auto_grant)
            }
        }
    }
}

/// What an operation did, in the order it happened.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Effect {
    Transition(RequestId, Option<RequestState>, RequestState),
    Reordered(RequestId),
    PolicyChanged(FloorId),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OpResult {
    Applied(Vec<Effect>),
    Failed(FloorError),
    /// The (floor, user) handle named no request at all.
    NoRequest,
}

#[derive(Debug, Clone)]
struct ModelRequest {
    id: RequestId,
    floor: FloorId,
    user: UserId,
    priority: Priority,
    state: RequestState,
    arrived: u64,
    accepted: Option<u64>,
    granted: Option<u64>,
    closed: Option<u64>,
}

/// One row of the comparable state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Row {
    pub id: RequestId,
    pub floor: FloorId,
    pub user: UserId,
    pub state: RequestState,
    pub position: u32,
    pub business_class: bool,
}

#[derive(Debug, Clone)]
pub struct ReferenceModel {
    policies: Vec<(FloorId, FloorPolicy)>,
    requests: Vec<ModelRequest>,
    tick: u64,
}

impl ReferenceModel {
    pub fn new(floors: &[(FloorId, FloorPolicy)]) -> ReferenceModel {
        ReferenceModel { policies: floors.to_vec(), requests: Vec::new(), tick: 0 }
    }

    fn next_tick(&mut self) -> u64 {
        self.tick += 1;
        self.tick
    }

    fn policy(&self, floor: FloorId) -> Option<FloorPolicy> {
        self.policies.iter().find(|(f, _)| *f == floor).map(|(_, p)| *p)
    }

    /// Indices of queued requests on `floor`, best first.
    fn queued(&self, floor: FloorId) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.requests.len())
            .filter(|i| {
                let r = &self.requests[*i];
                r.floor == floor && matches!(r.state, RequestState::Pending | RequestState::Accepted)
            })
            .collect();
        idx.sort_by_key(|i| {
            let r = &self.requests[*i];
            let bc = if r.priority == Priority::BusinessClass { 0 } else { 1 };
            match r.accepted {
                Some(t) if r.state == RequestState::Accepted => (bc, 0, t),
                _ => (bc, 1, r.arrived),
            }
        });
        idx
    }

    fn holders(&self, floor: FloorId) -> usize {
        self.requests.iter().filter(|r| r.floor == floor && r.state == RequestState::Granted).count()
    }

    fn set_state(&mut self, i: usize, to: RequestState, effects: &mut Vec<Effect>) {
        let tick = self.next_tick();
        let r = &mut self.requests[i];
        let from = r.state;
        r.state = to;
        match to {
            RequestState::Accepted => r.accepted = Some(tick),
            RequestState::Granted => r.granted = Some(tick),
            s if s.is_terminal() => r.closed = Some(tick),
            _ => {}
        }
        effects.push(Effect::Transition(r.id, Some(from), to));
    }

    fn fill(&mut self, floor: FloorId, effects: &mut Vec<Effect>) {
        let policy = self.policy(floor).unwrap();
        while self.holders(floor) < policy.max_granted as usize {
            let queued = self.queued(floor);
            let pick = queued
                .iter()
                .find(|i| self.requests[**i].state == RequestState::Accepted)
                .or(if policy.auto_grant { queued.first() } else { None });
            match pick {
                Some(&i) => self.set_state(i, RequestState::Granted, effects),
                None => break,
            }
        }
    }

    fn latest(&self, floor: FloorId, user: UserId) -> Option<usize> {
        (0..self.requests.len()).rev().find(|i| self.requests[*i].floor == floor && self.requests[*i].user == user)
    }

    /// Request id the handle of `op` resolves to, if any.
    pub fn resolve(&self, op: &Op) -> Option<RequestId> {
        let (floor, user) = op.handle()?;
        self.latest(floor, user).map(|i| self.requests[i].id)
    }

    pub fn apply(&mut self, op: Op) -> OpResult {
        use RequestState::*;
        let mut effects = Vec::new();
        let res: Result<(), FloorError> = match op {
            Op::Submit { floor, user, priority } => match self.policy(floor) {
                None => Err(FloorError::UnknownFloor(floor)),
                Some(policy) => {
                    if let Some(live) =
                        self.requests.iter().find(|r| r.floor == floor && r.user == user && r.state.is_live())
                    {
                        Err(FloorError::DuplicateRequest { user, floor, existing: live.id })
                    } else {
                        let id = RequestId(self.requests.len() as u16 + 1);
                        let arrived = self.next_tick();
                        self.requests.push(ModelRequest {
                            id,
                            floor,
                            user,
                            priority,
                            state: Pending,
                            arrived,
                            accepted: None,
                            granted: None,
                            closed: None,
                        });
                        effects.push(Effect::Transition(id, None, Pending));
                        if policy.auto_grant && self.holders(floor) < policy.max_granted as usize {
                            self.set_state(self.requests.len() - 1, Granted, &mut effects);
                        }
                        Ok(())
                    }
                }
            },
            Op::RevokeAll { floor } => match self.policy(floor) {
                None => Err(FloorError::UnknownFloor(floor)),
                Some(_) => {
                    let mut holders: Vec<usize> = (0..self.requests.len())
                        .filter(|i| self.requests[*i].floor == floor && self.requests[*i].state == Granted)
                        .collect();
                    holders.sort_by_key(|i| self.requests[*i].granted);
                    for i in holders {
                        self.set_state(i, Revoked, &mut effects);
                    }
                    Ok(())
                }
            },
            Op::SetPolicy { floor, policy } => {
                if policy.max_granted == 0 {
                    Err(FloorError::InvalidPolicy)
                } else {
                    match self.policies.iter_mut().find(|(f, _)| *f == floor) {
                        None => Err(FloorError::UnknownFloor(floor)),
                        Some(slot) => {
                            let old = slot.1;
                            slot.1 = policy;
                            effects.push(Effect::PolicyChanged(floor));
                            if policy.max_granted > old.max_granted || (policy.auto_grant && !old.auto_grant) {
                                self.fill(floor, &mut effects);
                            }
                            Ok(())
                        }
                    }
                }
            }
            _ => {
                let (floor, user) = op.handle().unwrap();
                let Some(i) = self.latest(floor, user) else { return OpResult::NoRequest };
                let id = self.requests[i].id;
                let state = self.requests[i].state;
                let queued = state == Pending || state == Accepted;
                match op {
                    Op::Cancel { .. } if queued => {
                        self.set_state(i, Cancelled, &mut effects);
                        Ok(())
                    }
                    Op::Cancel { .. } => Err(FloorError::NotCancellable(id, state)),
                    Op::Deny { .. } if queued => {
                        self.set_state(i, Denied, &mut effects);
                        Ok(())
                    }
                    Op::Deny { .. } => Err(FloorError::NotDeniable(id, state)),
                    Op::Release { .. } | Op::Revoke { .. } if state == Granted => {
                        let to = if matches!(op, Op::Release { .. }) { Released } else { Revoked };
                        self.set_state(i, to, &mut effects);
                        self.fill(floor, &mut effects);
                        Ok(())
                    }
                    Op::Release { .. } | Op::Revoke { .. } => Err(FloorError::NotGranted(id, state)),
                    Op::Accept { .. } if state == Pending => {
                        self.set_state(i, Accepted, &mut effects);
                        self.fill(floor, &mut effects);
                        Ok(())
                    }
                    Op::Accept { .. } => Err(FloorError::NotPending(id, state)),
                    Op::SetPriority { priority, .. } if queued => {
                        if self.requests[i].priority != priority {
                            self.requests[i].priority = priority;
                            effects.push(Effect::Reordered(id));
                        }
                        Ok(())
                    }
                    Op::SetPriority { .. } => Err(FloorError::NotReorderable(id, state)),
                    _ => unreachable!(),
                }
            }
        };
        match res {
            Ok(()) => OpResult::Applied(effects),
            Err(e) => OpResult::Failed(e),
        }
    }

    pub fn rows(&self) -> Vec<Row> {
        let mut rows: Vec<Row> = self
            .requests
            .iter()
            .map(|r| Row {
                id: r.id,
                floor: r.floor,
                user: r.user,
                state: r.state,
                position: 0,
                business_class: r.priority == Priority::BusinessClass,
            })
            .collect();
        for (floor, _) in &self.policies {
            for (pos, i) in self.queued(*floor).into_iter().enumerate() {
                rows[i].position = pos as u32 + 1;
            }
        }
        rows.sort_by_key(|r| r.id);
        rows
    }

    /// Expected snapshot order: ever-granted by grant time, then the queue,
    /// then denied/cancelled by close time.
    pub fn snapshot_order(&self, floor: FloorId) -> Vec<RequestId> {
        let mut holders: Vec<&ModelRequest> =
            self.requests.iter().filter(|r| r.floor == floor && r.granted.is_some()).collect();
        holders.sort_by_key(|r| r.granted);
        let mut closed: Vec<&ModelRequest> =
            self.requests.iter().filter(|r| r.floor == floor && r.granted.is_none() && r.state.is_terminal()).collect();
        closed.sort_by_key(|r| r.closed);
        holders
            .iter()
            .map(|r| r.id)
            .chain(self.queued(floor).into_iter().map(|i| self.requests[i].id))
            .chain(closed.iter().map(|r| r.id))
            .collect()
    }

    pub fn granted_count(&self, floor: FloorId) -> usize {
        self.holders(floor)
    }
}

/// A [`Conference`] driven by (floor, user) handles. Uses a clock that never
/// moves so that no record expires mid-run.
#[derive(Debug, Clone)]
pub struct Subject {
    pub conference: Conference,
    floors: Vec<FloorId>,
}

impl Subject {
    pub fn new(floors: &[(FloorId, FloorPolicy)]) -> Subject {
        let mut conference = Conference::with_clock(Arc::new(ManualClock::new()));
        for (id, policy) in floors {
            conference.add_floor(*id, format!("floor{id}"), *policy).expect("valid policy");
        }
        Subject { conference, floors: floors.iter().map(|(f, _)| *f).collect() }
    }

    pub fn resolve(&self, op: &Op) -> Option<RequestId> {
        let (floor, user) = op.handle()?;
        self.conference.requests_of(user).into_iter().filter(|r| r.floor_id == floor).map(|r| r.request_id).max()
    }

    pub fn apply(&mut self, op: Op) -> (OpResult, Vec<crate::FloorEvent>) {
        let c = &mut self.conference;
        let events = |r: Result<Vec<crate::FloorEvent>, FloorError>| match r {
            Ok(events) => {
                let effects = events
                    .iter()
                    .map(|e| match &e.kind {
                        FloorEventKind::RequestStateChanged { request, old_state, new_state } => {
                            Effect::Transition(request.request_id, *old_state, *new_state)
                        }
                        FloorEventKind::QueueReordered { request } => Effect::Reordered(request.request_id),
                        FloorEventKind::PolicyChanged { .. } => Effect::PolicyChanged(e.floor_id),
                    })
                    .collect();
                (OpResult::Applied(effects), events)
            }
            Err(e) => (OpResult::Failed(e), Vec::new()),
        };
        match op {
            Op::Submit { floor, user, priority } => events(
                c.submit_request(floor, user, format!("u{user}"), Origin::BfcpClient, priority).map(|o| o.events),
            ),
            Op::RevokeAll { floor } => events(c.chair_revoke_all(floor).map(|o| o.events)),
            Op::SetPolicy { floor, policy } => events(c.set_policy(floor, policy).map(|o| o.events)),
            _ => {
                let Some(id) = self.resolve(&op) else { return (OpResult::NoRequest, Vec::new()) };
                let c = &mut self.conference;
                let r = match op {
                    Op::Cancel { .. } => c.cancel_request(id),
                    Op::Release { .. } => c.release_floor(id),
                    Op::Accept { .. } => c.chair_accept(id),
                    Op::Deny { .. } => c.chair_deny(id),
                    Op::Revoke { .. } => c.chair_revoke(id),
                    Op::SetPriority { priority, .. } => c.chair_set_priority(id, priority),
                    _ => unreachable!(),
                };
                events(r.map(|o| o.events))
            }
        }
    }

    pub fn rows(&self) -> Vec<Row> {
        let mut rows: Vec<Row> = self
            .conference
            .floors()
            .flat_map(|f| f.records())
            .map(|r| Row {
                id: r.request_id,
                floor: r.floor_id,
                user: r.user_id,
                state: r.state,
                position: r.queue_position,
                business_class: r.priority == Priority::BusinessClass,
            })
            .collect();
        rows.sort_by_key(|r| r.id);
        rows
    }

    pub fn snapshot_order(&self, floor: FloorId) -> Vec<RequestId> {
        self.conference.snapshot(floor).unwrap().entries.iter().map(|r| r.request_id).collect()
    }

    pub fn floors(&self) -> &[FloorId] {
        &self.floors
    }
}

/// A divergence between the model and the real queue, with the sequence that
/// produced it.
#[derive(Debug, Clone)]
pub struct Mismatch {
    pub ops: Vec<Op>,
    pub detail: String,
}

impl fmt::Display for Mismatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} after [", self.detail)?;
        for (i, op) in self.ops.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{op}")?;
        }
        f.write_str("]")
    }
}

/// Checks a freshly returned event batch for internal consistency.
fn check_events(subject: &Subject, events: &[crate::FloorEvent], last_seq: &mut u64) -> Result<(), String> {
    for e in events {
        if e.seq != *last_seq + 1 {
            return Err(format!("event seq {} follows {}", e.seq, last_seq));
        }
        *last_seq = e.seq;
        if let FloorEventKind::RequestStateChanged { request, old_state, new_state } = &e.kind {
            if !RequestState::can_transition(*old_state, *new_state) {
                return Err(format!("illegal transition {old_state:?} -> {new_state}"));
            }
            if request.state != *new_state {
                return Err(format!("event record state {} differs from new state {new_state}", request.state));
            }
        }
    }
    for floor in subject.floors() {
        if let Some(last) = events.iter().rev().find(|e| e.floor_id == *floor) {
            let queue = subject.conference.floor(*floor).unwrap().queue();
            if last.queue != queue {
                return Err(format!("last event queue {:?} differs from floor queue {:?}", last.queue, queue));
            }
        }
    }
    Ok(())
}

fn check_positions(subject: &Subject) -> Result<(), String> {
    for floor in subject.floors() {
        let mut positions: Vec<u32> = subject
            .conference
            .floor(*floor)
            .unwrap()
            .records()
            .filter(|r| r.state.is_queued())
            .map(|r| r.queue_position)
            .collect();
        positions.sort_unstable();
        if positions.iter().enumerate().any(|(i, p)| *p != i as u32 + 1) {
            return Err(format!("queue positions on floor {floor} are {positions:?}"));
        }
    }
    Ok(())
}

/// Applies one op to both sides and compares everything observable.
pub fn step(model: &mut ReferenceModel, subject: &mut Subject, op: Op, last_seq: &mut u64) -> Result<bool, String> {
    let expected_id = model.resolve(&op);
    let actual_id = subject.resolve(&op);
    if expected_id != actual_id {
        return Err(format!("handle resolves to {actual_id:?}, model says {expected_id:?}"));
    }
    let expected = model.apply(op);
    let (actual, events) = subject.apply(op);
    if expected != actual {
        return Err(format!("{op}: got {actual:?}, model says {expected:?}"));
    }
    check_events(subject, &events, last_seq)?;
    let applied = matches!(actual, OpResult::Applied(_));
    // A failed op leaves the model untouched, so this also catches a subject
    // that changed state while reporting failure.
    let (want, got) = (model.rows(), subject.rows());
    if want != got {
        return Err(format!("state {got:?}, model says {want:?}"));
    }
    for floor in subject.floors().to_vec() {
        let (want, got) = (model.snapshot_order(floor), subject.snapshot_order(floor));
        if want != got {
            return Err(format!("snapshot order on floor {floor} is {got:?}, model says {want:?}"));
        }
    }
    check_positions(subject)?;
    Ok(applied)
}

#[derive(Debug, Clone)]
pub struct ExhaustiveParams {
    pub max_len: usize,
    pub users: u16,
    pub floors: u16,
    pub max_granted: Vec<u32>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ExhaustiveReport {
    /// Distinct sequences of successful operations visited.
    pub sequences: u64,
    /// Operations applied and compared, including failing ones.
    pub operations: u64,
}

/// Every operation over `users` users and `floors` floors, including policy
/// changes to each cap in `caps` with auto-grant on and off.
pub fn alphabet(users: u16, floors: u16, caps: &[u32]) -> Vec<Op> {
    let mut ops = Vec::new();
    for f in 1..=floors {
        let floor = FloorId(f);
        for u in 1..=users {
            let user = UserId(u);
            ops.extend([
                Op::Submit { floor, user, priority: Priority::Normal },
                Op::Submit { floor, user, priority: Priority::BusinessClass },
                Op::Cancel { floor, user },
                Op::Release { floor, user },
                Op::Accept { floor, user },
                Op::Deny { floor, user },
                Op::Revoke { floor, user },
                Op::SetPriority { floor, user, priority: Priority::BusinessClass },
                Op::SetPriority { floor, user, priority: Priority::Normal },
            ]);
        }
        ops.push(Op::RevokeAll { floor });
        for &n in caps {
            for auto_grant in [false, true] {
                ops.push(Op::SetPolicy { floor, policy: FloorPolicy { max_granted: n, auto_grant } });
            }
        }
    }
    ops
}

/// Enumerates every operation sequence up to `max_len` for each starting cap
/// and compares the queue with the model after every step.
///
/// A failing operation is checked to leave the state untouched, so the search
/// does not extend past it: any longer sequence through it is equivalent to
/// one without it.
pub fn check_exhaustive(params: &ExhaustiveParams) -> Result<ExhaustiveReport, Mismatch> {
    let ops = alphabet(params.users, params.floors, &params.max_granted);
    let mut report = ExhaustiveReport::default();
    for &n in &params.max_granted {
        let floors: Vec<(FloorId, FloorPolicy)> =
            (1..=params.floors).map(|f| (FloorId(f), FloorPolicy::new(n))).collect();
        let model = ReferenceModel::new(&floors);
        let subject = Subject::new(&floors);
        let mut path = Vec::with_capacity(params.max_len);
        explore(&ops, params.max_len, &model, &subject, 0, &mut path, &mut report)?;
    }
    Ok(report)
}

fn explore(
    ops: &[Op],
    remaining: usize,
    model: &ReferenceModel,
    subject: &Subject,
    last_seq: u64,
    path: &mut Vec<Op>,
    report: &mut ExhaustiveReport,
) -> Result<(), Mismatch> {
    report.sequences += 1;
    if remaining == 0 {
        return Ok(());
    }
    for &op in ops {
        let mut m = model.clone();
        let mut s = subject.clone();
        let mut seq = last_seq;
        report.operations += 1;
        path.push(op);
        match step(&mut m, &mut s, op, &mut seq) {
            Err(detail) => return Err(Mismatch { ops: path.clone(), detail }),
            Ok(true) => explore(ops, remaining - 1, &m, &s, seq, path, report)?,
            Ok(false) => {}
        }
        path.pop();
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RandomReport {
    pub sequences: u64,
    pub operations: u64,
    pub grants: u64,
    /// Highest count(GRANTED) / max_granted seen on any floor, in percent.
    pub peak_utilisation: u32,
}

/// Runs `sequences` random operation sequences of `len` steps each, checking
/// after every step that no floor holds more grants than its cap, and that
/// the queue still matches the model.
///
/// Policy changes in these runs only ever raise the cap or toggle auto-grant:
/// lowering it deliberately leaves existing holders in place, which the cap
/// check would read as a violation. [`check_grants_within_cap`] covers that case.
pub fn check_grant_cap(sequences: u64, len: usize, seed: u64) -> Result<RandomReport, Mismatch> {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut report = RandomReport::default();
    let users = 4;
    let floors = 2;
    for _ in 0..sequences {
        let start: Vec<(FloorId, FloorPolicy)> =
            (1..=floors).map(|f| (FloorId(f), FloorPolicy::new(rng.random_range(1..=3)))).collect();
        let mut model = ReferenceModel::new(&start);
        let mut subject = Subject::new(&start);
        let mut last_seq = 0;
        let mut path = Vec::with_capacity(len);
        for _ in 0..len {
            let op = random_op(&mut rng, users, floors, &subject, true);
            path.push(op);
            report.operations += 1;
            let fail = |detail: String| Mismatch { ops: path.clone(), detail };
            step(&mut model, &mut subject, op, &mut last_seq).map_err(fail)?;
            for floor in subject.floors() {
                let state = subject.conference.floor(*floor).unwrap();
                let cap = state.policy().max_granted;
                let held = state.granted_count() as u32;
                if held > cap {
                    return Err(fail(format!("floor {floor} holds {held} grants with cap {cap}")));
                }
                report.peak_utilisation = report.peak_utilisation.max(held * 100 / cap);
            }
        }
        report.grants +=
            subject.conference.floors().flat_map(|f| f.records()).filter(|r| r.grant_seq.is_some()).count() as u64;
        report.sequences += 1;
    }
    Ok(report)
}

/// Random runs that may also lower the cap. Checks that every grant event
/// leaves its floor at or under the cap in force at that moment.
pub fn check_grants_within_cap(sequences: u64, len: usize, seed: u64) -> Result<RandomReport, Mismatch> {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut report = RandomReport::default();
    for _ in 0..sequences {
        let start = [(FloorId(1), FloorPolicy::new(rng.random_range(1..=3)))];
        let mut subject = Subject::new(&start);
        let mut path = Vec::with_capacity(len);
        for _ in 0..len {
            let op = random_op(&mut rng, 4, 1, &subject, false);
            path.push(op);
            report.operations += 1;
            let (_, events) = subject.apply(op);
            let floor = subject.conference.floor(FloorId(1)).unwrap();
            let mut held = floor.granted_count() as i64;
            // Walk the batch backwards to recover the holder count after each event.
            for e in events.iter().rev() {
                if let Some((old, new)) = e.transition() {
                    if new == RequestState::Granted {
                        report.grants += 1;
                        if held > i64::from(floor.policy().max_granted) {
                            return Err(Mismatch {
                                ops: path.clone(),
                                detail: format!("grant left {held} holders with cap {}", floor.policy().max_granted),
                            });
                        }
                        held -= 1;
                    } else if old == Some(RequestState::Granted) {
                        held += 1;
                    }
                }
            }
        }
        report.sequences += 1;
    }
    Ok(report)
}

fn random_op(rng: &mut StdRng, users: u16, floors: u16, subject: &Subject, monotone_caps: bool) -> Op {
    let floor = FloorId(rng.random_range(1..=floors));
    let user = UserId(rng.random_range(1..=users));
    let priority = if rng.random_bool(0.2) { Priority::BusinessClass } else { Priority::Normal };
    match rng.random_range(0..100) {
        0..=29 => Op::Submit { floor, user, priority },
        30..=39 => Op::Cancel { floor, user },
        40..=49 => Op::Release { floor, user },
        50..=69 => Op::Accept { floor, user },
        70..=74 => Op::Deny { floor, user },
        75..=81 => Op::Revoke { floor, user },
        82..=88 => Op::SetPriority { floor, user, priority },
        89..=91 => Op::RevokeAll { floor },
        _ => {
            let current = subject.conference.floor(floor).unwrap().policy().max_granted;
            let max_granted = if monotone_caps { current + rng.random_range(0..=1) } else { rng.random_range(1..=4) };
            Op::SetPolicy { floor, policy: FloorPolicy { max_granted, auto_grant: rng.random_bool(0.3) } }
        }
    }
}
