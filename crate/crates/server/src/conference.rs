//! The conference actor: one task owning the queue, the sessions attached to
//! it and the event history. Every entry point (protocol sessions, HTTP,
//! badge readers) sends it commands, so all state changes share one total
//! order.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::sync::Arc;
use std::time::Duration;

use floorctl_core::{
    Clock, Conference, FloorError, FloorEvent, FloorEventKind, FloorId, FloorPolicy, FloorRequestRecord, Origin,
    Outcome, Priority, QueueSnapshot, RequestId, RequestState, SystemClock, UserId,
};
use floorctl_wire::{request_status_in, AttributeValue, BfcpMessage, ErrorCode, Primitive, StatusCode};
use serde::{Deserialize, Serialize};
use tokio::sync::{broadcast, mpsc, oneshot};
use tokio_util::sync::CancellationToken;

use crate::badge::{BadgeRead, Debouncer, SharedDirectory, DEFAULT_DEBOUNCE};
use crate::bfcp;

pub type SessionId = u64;

/// Prefix of the PARTICIPANT-PROVIDED-INFO a chair sends in Hello, followed by
/// the chair token.
pub const CHAIR_HELLO_PREFIX: &str = "chair:";

/// First user id handed to web participants.
pub const WEB_USER_BASE: u16 = 0x8000;

pub const EVENT_HISTORY: usize = 1024;
const COMMAND_CACHE: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Role {
    Participant,
    Chair,
}

/// A message queued for a session. Replies keep the transaction id they were
/// built with; notifications get the next server transaction id on the way out.
#[derive(Debug, Clone)]
pub enum Outbound {
    Reply(BfcpMessage),
    Notify(BfcpMessage),
}

impl Outbound {
    pub fn message(&self) -> &BfcpMessage {
        match self {
            Outbound::Reply(m) | Outbound::Notify(m) => m,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConferenceSettings {
    pub conference_id: u32,
    pub floors: Vec<(FloorId, String)>,
    pub policy: FloorPolicy,
    pub chair_token: String,
    pub terminal_retention: Duration,
    pub debounce: Duration,
    pub clock: Arc<dyn Clock>,
}

impl ConferenceSettings {
    pub fn new(conference_id: u32, chair_token: impl Into<String>) -> ConferenceSettings {
        ConferenceSettings {
            conference_id,
            floors: vec![(FloorId(1), "audio".into())],
            policy: FloorPolicy::default(),
            chair_token: chair_token.into(),
            terminal_retention: floorctl_core::DEFAULT_TERMINAL_RETENTION,
            debounce: DEFAULT_DEBOUNCE,
            clock: Arc::new(SystemClock),
        }
    }
}

/// Counters over everything the actor has sent.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Metrics {
    /// RequestStateChanged events produced.
    pub transitions: u64,
    /// FloorRequestStatus messages sent to sessions of the request's owner,
    /// replies included.
    pub targeted_status: u64,
    /// FloorRequestStatus copies sent to the chair session.
    pub chair_status: u64,
    /// FloorStatus messages sent, counted per receiving session.
    pub floor_status: u64,
    /// Sessions closed because their outbox was full.
    pub overflow_closes: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ApiStatus {
    BadRequest,
    Unauthorized,
    NotFound,
    Conflict,
    Unavailable,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: ApiStatus,
    pub error: String,
    pub message: String,
}

impl ApiError {
    pub fn new(status: ApiStatus, error: &str, message: impl Into<String>) -> ApiError {
        ApiError { status, error: error.to_owned(), message: message.into() }
    }

    pub fn unavailable() -> ApiError {
        ApiError::new(ApiStatus::Unavailable, "Unavailable", "conference is shutting down")
    }
}

impl From<FloorError> for ApiError {
    fn from(e: FloorError) -> ApiError {
        let status = match e {
            FloorError::UnknownFloor(_) | FloorError::UnknownRequest(_) => ApiStatus::NotFound,
            FloorError::InvalidPolicy => ApiStatus::BadRequest,
            _ => ApiStatus::Conflict,
        };
        ApiError::new(status, e.code(), e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChairAction {
    Accept,
    Deny,
    Revoke,
    RevokeAll,
    SetPriority,
    SetPolicy,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChairCommand {
    pub action: ChairAction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request_id: Option<RequestId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub floor_id: Option<FloorId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub priority: Option<Priority>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<FloorPolicy>,
    /// Client-chosen id; a repeated id returns the first result unchanged.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommandResult {
    pub records: Vec<FloorRequestRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<FloorPolicy>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WebActionKind {
    Request,
    Release,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WebAction {
    pub kind: WebActionKind,
    pub floor_id: FloorId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WebParticipant {
    pub token: String,
    pub user_id: UserId,
    pub display_name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FloorInfo {
    pub floor_id: FloorId,
    pub name: String,
    pub policy: FloorPolicy,
}

/// One entry of the event stream, already serialized.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StreamEvent {
    pub seq: u64,
    /// `snapshot`, `state`, `reorder` or `policy`.
    pub name: &'static str,
    pub data: String,
}

#[derive(Debug, Serialize)]
struct SnapshotPayload<'a> {
    seq: u64,
    floors: &'a [QueueSnapshot],
}

/// Where a new stream starts: either the missed part of the history or a
/// full snapshot, followed by everything on `live`.
#[derive(Debug)]
pub struct Subscription {
    pub backlog: Vec<StreamEvent>,
    pub live: broadcast::Receiver<StreamEvent>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BadgeOutcome {
    Requested(FloorRequestRecord),
    Cancelled(FloorRequestRecord),
    Released(FloorRequestRecord),
    Debounced,
    UnknownTag(String),
    UnknownReader(String),
    Rejected(FloorError),
}

impl std::fmt::Display for BadgeOutcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let rec = |f: &mut std::fmt::Formatter<'_>, what: &str, r: &FloorRequestRecord| {
            write!(
                f,
                "OK {what} request={} user={} floor={} state={} position={}",
                r.request_id, r.user_id, r.floor_id, r.state, r.queue_position
            )
        };
        match self {
            BadgeOutcome::Requested(r) => rec(f, "requested", r),
            BadgeOutcome::Cancelled(r) => rec(f, "cancelled", r),
            BadgeOutcome::Released(r) => rec(f, "released", r),
            BadgeOutcome::Debounced => f.write_str("OK debounced"),
            BadgeOutcome::UnknownTag(t) => write!(f, "ERR unknown-tag {t}"),
            BadgeOutcome::UnknownReader(r) => write!(f, "ERR unknown-reader {r}"),
            BadgeOutcome::Rejected(e) => write!(f, "ERR {} {e}", e.code()),
        }
    }
}

enum Command {
    Open { outbox: mpsc::Sender<Outbound>, closer: CancellationToken, reply: oneshot::Sender<SessionId> },
    Bfcp { session: SessionId, msg: BfcpMessage },
    Close { session: SessionId },
    Floors { reply: oneshot::Sender<Vec<FloorInfo>> },
    Snapshot { floor: FloorId, reply: oneshot::Sender<Result<QueueSnapshot, FloorError>> },
    Chair { cmd: ChairCommand, reply: oneshot::Sender<Result<CommandResult, ApiError>> },
    Join { display_name: String, reply: oneshot::Sender<WebParticipant> },
    Web { token: String, action: WebAction, reply: oneshot::Sender<Result<FloorRequestRecord, ApiError>> },
    Authorize { token: String, reply: oneshot::Sender<Option<Role>> },
    Subscribe { last_event_id: Option<u64>, reply: oneshot::Sender<Subscription> },
    Badge { read: BadgeRead, reply: oneshot::Sender<BadgeOutcome> },
    Metrics { reply: oneshot::Sender<Metrics> },
}

/// Cheap, cloneable access to a running conference actor.
#[derive(Debug, Clone)]
pub struct ConferenceHandle {
    conference_id: u32,
    tx: mpsc::Sender<Command>,
}

impl std::fmt::Debug for Command {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("Command")
    }
}

impl ConferenceHandle {
    /// Starts the actor on the current runtime. It stops once every handle is
    /// dropped.
    pub fn spawn(settings: ConferenceSettings, badges: SharedDirectory) -> Result<ConferenceHandle, FloorError> {
        let conference_id = settings.conference_id;
        let actor = Actor::new(settings, badges)?;
        let (tx, rx) = mpsc::channel(1024);
        tokio::spawn(actor.run(rx));
        Ok(ConferenceHandle { conference_id, tx })
    }

    pub fn conference_id(&self) -> u32 {
        self.conference_id
    }

    async fn call<T>(&self, make: impl FnOnce(oneshot::Sender<T>) -> Command) -> Result<T, ApiError> {
        let (reply, rx) = oneshot::channel();
        self.tx.send(make(reply)).await.map_err(|_| ApiError::unavailable())?;
        rx.await.map_err(|_| ApiError::unavailable())
    }

    pub async fn open_session(&self, outbox: mpsc::Sender<Outbound>, closer: CancellationToken) -> Option<SessionId> {
        self.call(|reply| Command::Open { outbox, closer, reply }).await.ok()
    }

    pub async fn bfcp(&self, session: SessionId, msg: BfcpMessage) {
        let _ = self.tx.send(Command::Bfcp { session, msg }).await;
    }

    pub async fn close_session(&self, session: SessionId) {
        let _ = self.tx.send(Command::Close { session }).await;
    }

    pub async fn floors(&self) -> Result<Vec<FloorInfo>, ApiError> {
        self.call(|reply| Command::Floors { reply }).await
    }

    pub async fn snapshot(&self, floor: FloorId) -> Result<QueueSnapshot, ApiError> {
        Ok(self.call(|reply| Command::Snapshot { floor, reply }).await??)
    }

    pub async fn chair(&self, cmd: ChairCommand) -> Result<CommandResult, ApiError> {
        self.call(|reply| Command::Chair { cmd, reply }).await?
    }

    pub async fn join(&self, display_name: impl Into<String>) -> Result<WebParticipant, ApiError> {
        let display_name = display_name.into();
        self.call(|reply| Command::Join { display_name, reply }).await
    }

    pub async fn web_action(&self, token: &str, action: WebAction) -> Result<FloorRequestRecord, ApiError> {
        let token = token.to_owned();
        self.call(|reply| Command::Web { token, action, reply }).await?
    }

    pub async fn authorize(&self, token: &str) -> Option<Role> {
        let token = token.to_owned();
        self.call(|reply| Command::Authorize { token, reply }).await.ok().flatten()
    }

    pub async fn subscribe(&self, last_event_id: Option<u64>) -> Result<Subscription, ApiError> {
        self.call(|reply| Command::Subscribe { last_event_id, reply }).await
    }

    pub async fn badge(&self, read: BadgeRead) -> Result<BadgeOutcome, ApiError> {
        self.call(|reply| Command::Badge { read, reply }).await
    }

    pub async fn metrics(&self) -> Result<Metrics, ApiError> {
        self.call(|reply| Command::Metrics { reply }).await
    }
}

struct Session {
    user: Option<UserId>,
    role: Role,
    display_name: Option<String>,
    outbox: mpsc::Sender<Outbound>,
    closer: CancellationToken,
}

/// What a protocol request expects back once its mutation has been applied.
#[derive(Clone, Copy)]
enum ReplyPlan {
    /// A FloorRequestStatus about this request, carrying the request's last
    /// transition in the batch.
    Status {
        session: SessionId,
        header: (u32, u16, u16),
        request: RequestId,
    },
    None,
}

struct Actor {
    conference_id: u32,
    core: Conference,
    chair_token: String,
    clock: Arc<dyn Clock>,
    sessions: BTreeMap<SessionId, Session>,
    next_session: SessionId,
    chair_session: Option<SessionId>,
    names: HashMap<UserId, String>,
    web: HashMap<String, WebParticipant>,
    next_web_user: u32,
    history: VecDeque<StreamEvent>,
    stream: broadcast::Sender<StreamEvent>,
    cache: HashMap<String, Result<CommandResult, ApiError>>,
    cache_order: VecDeque<String>,
    web_cache: HashMap<String, Result<FloorRequestRecord, ApiError>>,
    web_cache_order: VecDeque<String>,
    badges: SharedDirectory,
    debouncer: Debouncer,
    metrics: Metrics,
}

fn remember<T>(map: &mut HashMap<String, T>, order: &mut VecDeque<String>, key: String, value: T) {
    if map.insert(key.clone(), value).is_none() {
        order.push_back(key);
        if order.len() > COMMAND_CACHE {
            if let Some(old) = order.pop_front() {
                map.remove(&old);
            }
        }
    }
}

impl Actor {
    fn new(settings: ConferenceSettings, badges: SharedDirectory) -> Result<Actor, FloorError> {
        let mut core = Conference::with_clock(settings.clock.clone());
        core.set_terminal_retention(settings.terminal_retention);
        for (id, name) in &settings.floors {
            core.add_floor(*id, name.clone(), settings.policy)?;
        }
        let (stream, _) = broadcast::channel(EVENT_HISTORY);
        Ok(Actor {
            conference_id: settings.conference_id,
            core,
            chair_token: settings.chair_token,
            clock: settings.clock,
            sessions: BTreeMap::new(),
            next_session: 1,
            chair_session: None,
            names: HashMap::new(),
            web: HashMap::new(),
            next_web_user: u32::from(WEB_USER_BASE),
            history: VecDeque::with_capacity(EVENT_HISTORY),
            stream,
            cache: HashMap::new(),
            cache_order: VecDeque::new(),
            web_cache: HashMap::new(),
            web_cache_order: VecDeque::new(),
            badges,
            debouncer: Debouncer::new(settings.debounce),
            metrics: Metrics::default(),
        })
    }

    async fn run(mut self, mut rx: mpsc::Receiver<Command>) {
        while let Some(cmd) = rx.recv().await {
            self.handle(cmd);
        }
        for session in self.sessions.values() {
            session.closer.cancel();
        }
    }

    fn handle(&mut self, cmd: Command) {
        match cmd {
            Command::Open { outbox, closer, reply } => {
                let id = self.next_session;
                self.next_session += 1;
                self.sessions
                    .insert(id, Session { user: None, role: Role::Participant, display_name: None, outbox, closer });
                let _ = reply.send(id);
            }
            Command::Bfcp { session, msg } => self.on_bfcp(session, msg),
            Command::Close { session } => self.close_session(session),
            Command::Floors { reply } => {
                let floors = self
                    .core
                    .floors()
                    .map(|f| FloorInfo { floor_id: f.floor_id(), name: f.name().to_owned(), policy: f.policy() })
                    .collect();
                let _ = reply.send(floors);
            }
            Command::Snapshot { floor, reply } => {
                let _ = reply.send(self.core.snapshot(floor));
            }
            Command::Chair { cmd, reply } => {
                let result = match cmd.command_id.clone() {
                    Some(id) => match self.cache.get(&id) {
                        Some(cached) => cached.clone(),
                        None => {
                            let result = self.chair_command(&cmd);
                            remember(&mut self.cache, &mut self.cache_order, id, result.clone());
                            result
                        }
                    },
                    None => self.chair_command(&cmd),
                };
                let _ = reply.send(result);
            }
            Command::Join { display_name, reply } => {
                let _ = reply.send(self.join(display_name));
            }
            Command::Web { token, action, reply } => {
                let result = match self.web.get(&token).cloned() {
                    None => Err(ApiError::new(ApiStatus::Unauthorized, "Unauthorized", "unknown participant token")),
                    Some(who) => match action.command_id.clone() {
                        Some(id) => {
                            let key = format!("{}:{id}", who.user_id);
                            match self.web_cache.get(&key) {
                                Some(cached) => cached.clone(),
                                None => {
                                    let result = self.web_action(&who, &action);
                                    remember(&mut self.web_cache, &mut self.web_cache_order, key, result.clone());
                                    result
                                }
                            }
                        }
                        None => self.web_action(&who, &action),
                    },
                };
                let _ = reply.send(result);
            }
            Command::Authorize { token, reply } => {
                let role = if token == self.chair_token {
                    Some(Role::Chair)
                } else if self.web.contains_key(&token) {
                    Some(Role::Participant)
                } else {
                    None
                };
                let _ = reply.send(role);
            }
            Command::Subscribe { last_event_id, reply } => {
                let _ = reply.send(self.subscribe(last_event_id));
            }
            Command::Badge { read, reply } => {
                let _ = reply.send(self.badge(read));
            }
            Command::Metrics { reply } => {
                let _ = reply.send(self.metrics);
            }
        }
    }

    // ---- event publication -------------------------------------------------

    fn record_stream_event(&mut self, e: &FloorEvent) {
        let name = match e.kind {
            FloorEventKind::RequestStateChanged { .. } => "state",
            FloorEventKind::QueueReordered { .. } => "reorder",
            FloorEventKind::PolicyChanged { .. } => "policy",
        };
        let event = StreamEvent { seq: e.seq, name, data: serde_json::to_string(e).expect("event serializes") };
        if self.history.len() == EVENT_HISTORY {
            self.history.pop_front();
        }
        self.history.push_back(event.clone());
        let _ = self.stream.send(event);
    }

    fn log_event(&self, e: &FloorEvent, actor: &str) {
        if let FloorEventKind::RequestStateChanged { request, old_state, new_state } = &e.kind {
            tracing::info!(
                target: "floorctl::transition",
                conf = self.conference_id,
                floor = e.floor_id.0,
                request = request.request_id.0,
                old = old_state.map_or("-", |s| s.as_str()),
                new = new_state.as_str(),
                actor,
                seq = e.seq,
                "state change"
            );
        }
    }

    /// Sends `msg` to a session, closing it if its outbox is full.
    fn send(&mut self, session: SessionId, out: Outbound, overflowed: &mut Vec<SessionId>) -> bool {
        let Some(s) = self.sessions.get(&session) else { return false };
        match s.outbox.try_send(out) {
            Ok(()) => true,
            Err(mpsc::error::TrySendError::Full(_)) => {
                if !overflowed.contains(&session) {
                    overflowed.push(session);
                }
                false
            }
            Err(mpsc::error::TrySendError::Closed(_)) => false,
        }
    }

    fn bound_sessions(&self) -> Vec<(SessionId, UserId)> {
        self.sessions.iter().filter_map(|(id, s)| s.user.map(|u| (*id, u))).collect()
    }

    /// Fans out a batch of events: stream, log, then protocol messages.
    fn publish(&mut self, events: &[FloorEvent], actor: &str, plan: ReplyPlan) {
        for e in events {
            self.log_event(e, actor);
            self.record_stream_event(e);
        }
        let mut overflowed = Vec::new();
        let reply_at = match plan {
            ReplyPlan::Status { request, .. } => events
                .iter()
                .rposition(|e| e.transition().is_some() && e.request().is_some_and(|r| r.request_id == request)),
            ReplyPlan::None => None,
        };
        let sessions = self.bound_sessions();
        let mut floors: Vec<FloorId> = Vec::new();
        for (i, e) in events.iter().enumerate() {
            if !floors.contains(&e.floor_id) {
                floors.push(e.floor_id);
            }
            let FloorEventKind::RequestStateChanged { request, .. } = &e.kind else { continue };
            self.metrics.transitions += 1;
            for &(sid, user) in &sessions {
                if user != request.user_id {
                    continue;
                }
                let out = match plan {
                    ReplyPlan::Status { session, header: (conf, tx, uid), .. }
                        if session == sid && reply_at == Some(i) =>
                    {
                        let mut msg = bfcp::floor_request_status(conf, uid, request, Some(e.seq));
                        msg.header.transaction_id = tx;
                        Outbound::Reply(msg)
                    }
                    _ => Outbound::Notify(bfcp::floor_request_status(self.conference_id, user.0, request, Some(e.seq))),
                };
                self.metrics.targeted_status += 1;
                self.send(sid, out, &mut overflowed);
            }
            if let Some(chair) = self.chair_session {
                let chair_user = self.sessions.get(&chair).and_then(|s| s.user);
                if let Some(chair_user) = chair_user.filter(|u| *u != request.user_id) {
                    let msg = bfcp::floor_request_status(self.conference_id, chair_user.0, request, Some(e.seq));
                    self.metrics.chair_status += 1;
                    self.send(chair, Outbound::Notify(msg), &mut overflowed);
                }
            }
        }
        for floor in floors {
            let seq = events.iter().rev().find(|e| e.floor_id == floor).map(|e| e.seq);
            let live: Vec<FloorRequestRecord> = match self.core.snapshot(floor) {
                Ok(snap) => snap.entries.into_iter().filter(|r| r.state.is_live()).collect(),
                Err(_) => continue,
            };
            for &(sid, user) in &sessions {
                let msg = bfcp::floor_status(self.conference_id, user.0, floor, &live, seq);
                self.metrics.floor_status += 1;
                self.send(sid, Outbound::Notify(msg), &mut overflowed);
            }
        }
        for sid in overflowed {
            tracing::warn!(conf = self.conference_id, session = sid, "outbox full, closing session");
            self.metrics.overflow_closes += 1;
            if let Some(s) = self.sessions.get(&sid) {
                s.closer.cancel();
            }
            self.close_session(sid);
        }
    }

    fn apply<T>(
        &mut self,
        result: Result<Outcome<T>, FloorError>,
        actor: &str,
        plan: ReplyPlan,
    ) -> Result<T, FloorError> {
        let outcome = result?;
        self.publish(&outcome.events, actor, plan);
        Ok(outcome.value)
    }

    fn subscribe(&mut self, last_event_id: Option<u64>) -> Subscription {
        let live = self.stream.subscribe();
        let last = self.core.last_event_seq();
        if let Some(k) = last_event_id {
            let oldest = self.history.front().map_or(last + 1, |e| e.seq);
            if k <= last && k + 1 >= oldest {
                let backlog = self.history.iter().filter(|e| e.seq > k).cloned().collect();
                return Subscription { backlog, live };
            }
        }
        let floors: Vec<QueueSnapshot> =
            self.core.floors().filter_map(|f| self.core.snapshot(f.floor_id()).ok()).collect();
        let data = serde_json::to_string(&SnapshotPayload { seq: last, floors: &floors }).expect("snapshot serializes");
        Subscription { backlog: vec![StreamEvent { seq: last, name: "snapshot", data }], live }
    }

    // ---- sessions ------------------------------------------------------------

    fn close_session(&mut self, sid: SessionId) {
        let Some(session) = self.sessions.remove(&sid) else { return };
        if self.chair_session == Some(sid) {
            self.chair_session = None;
        }
        let Some(user) = session.user else { return };
        if self.sessions.values().any(|s| s.user == Some(user)) {
            return;
        }
        let live: Vec<(RequestId, RequestState)> = self
            .core
            .requests_of(user)
            .into_iter()
            .filter(|r| r.origin == Origin::BfcpClient && r.state.is_live())
            .map(|r| (r.request_id, r.state))
            .collect();
        for (id, state) in live {
            let result =
                if state == RequestState::Granted { self.core.release_floor(id) } else { self.core.cancel_request(id) };
            if let Err(e) = self.apply(result, "disconnect", ReplyPlan::None) {
                tracing::warn!(conf = self.conference_id, request = id.0, error = %e, "cleanup on disconnect failed");
            }
        }
    }

    fn reply(&mut self, sid: SessionId, msg: BfcpMessage) {
        let mut overflowed = Vec::new();
        self.send(sid, Outbound::Reply(msg), &mut overflowed);
        for sid in overflowed {
            self.metrics.overflow_closes += 1;
            if let Some(s) = self.sessions.get(&sid) {
                s.closer.cancel();
            }
            self.close_session(sid);
        }
    }

    fn reply_error(&mut self, sid: SessionId, msg: &BfcpMessage, code: ErrorCode, info: impl Into<String>) {
        self.reply(sid, bfcp::error_reply(msg, code, info));
    }

    fn display_name(&self, sid: SessionId, user: UserId) -> String {
        self.sessions
            .get(&sid)
            .and_then(|s| s.display_name.clone())
            .or_else(|| self.names.get(&user).cloned())
            .unwrap_or_else(|| format!("user{user}"))
    }

    fn on_bfcp(&mut self, sid: SessionId, msg: BfcpMessage) {
        let Some(session) = self.sessions.get_mut(&sid) else { return };
        let h = msg.header;
        if h.conference_id != self.conference_id {
            if msg.primitive() != Primitive::Error {
                self.reply_error(
                    sid,
                    &msg,
                    ErrorCode::ConferenceDoesNotExist,
                    format!("no conference {}", h.conference_id),
                );
            }
            return;
        }
        let user = UserId(h.user_id);
        match session.user {
            None => session.user = Some(user),
            Some(bound) if bound != user => {
                if msg.primitive() != Primitive::Error {
                    self.reply_error(
                        sid,
                        &msg,
                        ErrorCode::UnauthorizedOperation,
                        format!("session belongs to user {bound}"),
                    );
                }
                return;
            }
            Some(_) => {}
        }
        match msg.primitive() {
            Primitive::Hello => self.on_hello(sid, &msg),
            Primitive::HelloAck | Primitive::Error => {}
            Primitive::FloorRequest => self.on_floor_request(sid, &msg),
            Primitive::FloorRelease => self.on_floor_release(sid, &msg),
            Primitive::FloorRequestQuery => match msg.floor_request_id().map(RequestId) {
                Some(id) => match self.core.record(id).cloned() {
                    Some(rec) => {
                        let mut reply = bfcp::floor_request_status(h.conference_id, h.user_id, &rec, None);
                        reply.header.transaction_id = h.transaction_id;
                        self.reply(sid, reply);
                    }
                    None => {
                        self.reply_error(sid, &msg, ErrorCode::FloorRequestIdDoesNotExist, format!("no request {id}"))
                    }
                },
                None => self.reply_error(sid, &msg, ErrorCode::UnableToParseMessage, "FLOOR-REQUEST-ID missing"),
            },
            Primitive::UserQuery => {
                let target = msg
                    .attributes
                    .iter()
                    .find_map(|a| match a.value {
                        AttributeValue::BeneficiaryId(b) => Some(UserId(b)),
                        _ => None,
                    })
                    .unwrap_or(user);
                let mut reply = msg.reply(Primitive::UserStatus);
                if target != user {
                    reply = reply.with(AttributeValue::BeneficiaryId(target.0));
                }
                let records: Vec<FloorRequestRecord> =
                    self.core.requests_of(target).into_iter().filter(|r| r.state.is_live()).cloned().collect();
                for r in records.iter().take(bfcp::FLOOR_STATUS_LIMIT) {
                    reply = reply.with(bfcp::request_information(r, None));
                }
                self.reply(sid, reply);
            }
            Primitive::FloorQuery => {
                let floors: Vec<FloorId> = msg.floor_ids().map(FloorId).collect();
                if let Some(bad) = floors.iter().find(|f| self.core.floor(**f).is_none()) {
                    self.reply_error(sid, &msg, ErrorCode::InvalidFloorId, format!("no floor {bad}"));
                    return;
                }
                if floors.is_empty() {
                    self.reply(sid, msg.reply(Primitive::FloorStatus));
                }
                for (i, floor) in floors.into_iter().enumerate() {
                    let live: Vec<FloorRequestRecord> = self
                        .core
                        .snapshot(floor)
                        .map(|s| s.entries.into_iter().filter(|r| r.state.is_live()).collect())
                        .unwrap_or_default();
                    let mut status = bfcp::floor_status(h.conference_id, h.user_id, floor, &live, None);
                    if i == 0 {
                        status.header.transaction_id = h.transaction_id;
                        self.reply(sid, status);
                    } else {
                        let mut overflowed = Vec::new();
                        self.send(sid, Outbound::Notify(status), &mut overflowed);
                    }
                }
            }
            Primitive::ChairAction => self.on_chair_action(sid, &msg),
            p @ (Primitive::FloorRequestStatus
            | Primitive::UserStatus
            | Primitive::FloorStatus
            | Primitive::ChairActionAck) => {
                self.reply_error(sid, &msg, ErrorCode::GenericError, format!("{p} is only sent by servers"))
            }
        }
    }

    fn on_hello(&mut self, sid: SessionId, msg: &BfcpMessage) {
        let mut name = None;
        let mut info = None;
        for a in &msg.attributes {
            match &a.value {
                AttributeValue::UserDisplayName(n) => name = Some(n.clone()),
                AttributeValue::ParticipantProvidedInfo(i) => info = Some(i.clone()),
                _ => {}
            }
        }
        if let Some(token) = info.as_deref().and_then(|i| i.strip_prefix(CHAIR_HELLO_PREFIX)) {
            if token != self.chair_token {
                self.reply_error(sid, msg, ErrorCode::UnauthorizedOperation, "bad chair token");
                return;
            }
            match self.chair_session {
                Some(other) if other != sid => {
                    self.reply_error(sid, msg, ErrorCode::UnauthorizedOperation, "a chair is already connected");
                    return;
                }
                _ => {}
            }
            self.chair_session = Some(sid);
            if let Some(s) = self.sessions.get_mut(&sid) {
                s.role = Role::Chair;
            }
        }
        if let Some(name) = name {
            self.names.insert(UserId(msg.header.user_id), name.clone());
            if let Some(s) = self.sessions.get_mut(&sid) {
                s.display_name = Some(name);
            }
        }
        self.reply(sid, msg.reply(Primitive::HelloAck));
    }

    fn on_floor_request(&mut self, sid: SessionId, msg: &BfcpMessage) {
        let user = UserId(msg.header.user_id);
        let floors: Vec<u16> = msg.floor_ids().collect();
        let [floor] = floors[..] else {
            self.reply_error(sid, msg, ErrorCode::GenericError, format!("expected one FLOOR-ID, got {}", floors.len()));
            return;
        };
        let beneficiary = msg.attributes.iter().find_map(|a| match a.value {
            AttributeValue::BeneficiaryId(b) => Some(UserId(b)),
            _ => None,
        });
        if beneficiary.is_some_and(|b| b != user) {
            self.reply_error(sid, msg, ErrorCode::UnauthorizedOperation, "third-party requests are not supported");
            return;
        }
        if let Some(name) = msg.attributes.iter().find_map(|a| match &a.value {
            AttributeValue::UserDisplayName(n) => Some(n.clone()),
            _ => None,
        }) {
            self.names.insert(user, name);
        }
        let name = self.display_name(sid, user);
        let result = self.core.submit_request(FloorId(floor), user, name, Origin::BfcpClient, Priority::Normal);
        let request = match &result {
            Ok(o) => o.value.request_id,
            Err(_) => RequestId(0),
        };
        let h = msg.header;
        let plan = ReplyPlan::Status { session: sid, header: (h.conference_id, h.transaction_id, h.user_id), request };
        if let Err(e) = self.apply(result, &format!("bfcp:{user}"), plan) {
            self.reply_error(sid, msg, bfcp::error_code_for(&e), e.to_string());
        }
    }

    fn on_floor_release(&mut self, sid: SessionId, msg: &BfcpMessage) {
        let user = UserId(msg.header.user_id);
        let Some(id) = msg.floor_request_id().map(RequestId) else {
            self.reply_error(sid, msg, ErrorCode::UnableToParseMessage, "FLOOR-REQUEST-ID missing");
            return;
        };
        let Some(record) = self.core.record(id) else {
            self.reply_error(sid, msg, ErrorCode::FloorRequestIdDoesNotExist, format!("no request {id}"));
            return;
        };
        if record.user_id != user {
            self.reply_error(
                sid,
                msg,
                ErrorCode::UnauthorizedOperation,
                format!("request {id} belongs to another user"),
            );
            return;
        }
        let result = if record.state == RequestState::Granted {
            self.core.release_floor(id)
        } else {
            self.core.cancel_request(id)
        };
        let h = msg.header;
        let plan =
            ReplyPlan::Status { session: sid, header: (h.conference_id, h.transaction_id, h.user_id), request: id };
        if let Err(e) = self.apply(result, &format!("bfcp:{user}"), plan) {
            self.reply_error(sid, msg, bfcp::error_code_for(&e), e.to_string());
        }
    }

    fn on_chair_action(&mut self, sid: SessionId, msg: &BfcpMessage) {
        if self.chair_session != Some(sid) {
            self.reply_error(sid, msg, ErrorCode::UnauthorizedOperation, "only the chair may send ChairAction");
            return;
        }
        let groups: Vec<(u16, &[floorctl_wire::Attribute])> = msg.floor_request_information().collect();
        let [(id, group)] = groups[..] else {
            self.reply_error(sid, msg, ErrorCode::GenericError, "expected one FLOOR-REQUEST-INFORMATION");
            return;
        };
        let id = RequestId(id);
        let priority = group.iter().find_map(|a| match a.value {
            AttributeValue::Priority(p) => Some(bfcp::priority_from(p)),
            _ => None,
        });
        let status = request_status_in(group).map(|s| s.status);
        if priority.is_none() && status.is_none() {
            self.reply_error(sid, msg, ErrorCode::GenericError, "no REQUEST-STATUS or PRIORITY to act on");
            return;
        }
        if let Some(priority) = priority {
            let result = self.core.chair_set_priority(id, priority);
            if let Err(e) = self.apply(result, "chair", ReplyPlan::None) {
                self.reply_error(sid, msg, bfcp::error_code_for(&e), e.to_string());
                return;
            }
        }
        if let Some(status) = status {
            let result = match status {
                StatusCode::Accepted | StatusCode::Granted => self.core.chair_accept(id),
                StatusCode::Denied => self.core.chair_deny(id),
                StatusCode::Revoked => self.core.chair_revoke(id),
                other => {
                    self.reply_error(sid, msg, ErrorCode::GenericError, format!("chair cannot set status {other}"));
                    return;
                }
            };
            // Acknowledge first; the resulting notifications follow.
            let outcome = match result {
                Ok(o) => o,
                Err(e) => {
                    self.reply_error(sid, msg, bfcp::error_code_for(&e), e.to_string());
                    return;
                }
            };
            self.reply(sid, msg.reply(Primitive::ChairActionAck));
            self.publish(&outcome.events, "chair", ReplyPlan::None);
        } else {
            self.reply(sid, msg.reply(Primitive::ChairActionAck));
        }
    }

    // ---- HTTP ------------------------------------------------------------------

    fn chair_command(&mut self, cmd: &ChairCommand) -> Result<CommandResult, ApiError> {
        let missing =
            |what: &str| ApiError::new(ApiStatus::BadRequest, "BadCommand", format!("{:?} needs {what}", cmd.action));
        let one = |r: FloorRequestRecord| CommandResult { records: vec![r], policy: None };
        let request = || cmd.request_id.ok_or_else(|| missing("request_id"));
        Ok(match cmd.action {
            ChairAction::Accept => {
                let result = self.core.chair_accept(request()?);
                one(self.apply(result, "chair", ReplyPlan::None)?)
            }
            ChairAction::Deny => {
                let result = self.core.chair_deny(request()?);
                one(self.apply(result, "chair", ReplyPlan::None)?)
            }
            ChairAction::Revoke => {
                let result = self.core.chair_revoke(request()?);
                one(self.apply(result, "chair", ReplyPlan::None)?)
            }
            ChairAction::SetPriority => {
                let priority = cmd.priority.ok_or_else(|| missing("priority"))?;
                let result = self.core.chair_set_priority(request()?, priority);
                one(self.apply(result, "chair", ReplyPlan::None)?)
            }
            ChairAction::RevokeAll => {
                let floor = cmd.floor_id.ok_or_else(|| missing("floor_id"))?;
                let result = self.core.chair_revoke_all(floor);
                CommandResult { records: self.apply(result, "chair", ReplyPlan::None)?, policy: None }
            }
            ChairAction::SetPolicy => {
                let floor = cmd.floor_id.ok_or_else(|| missing("floor_id"))?;
                let policy = cmd.policy.ok_or_else(|| missing("policy"))?;
                let result = self.core.set_policy(floor, policy);
                CommandResult { records: vec![], policy: Some(self.apply(result, "chair", ReplyPlan::None)?) }
            }
        })
    }

    fn join(&mut self, display_name: String) -> WebParticipant {
        // Web ids are never reused; past 0xFFFF they wrap within the web range.
        let offset = (self.next_web_user - u32::from(WEB_USER_BASE)) % 0x8000;
        self.next_web_user += 1;
        let user_id = UserId(WEB_USER_BASE + offset as u16);
        let who = WebParticipant { token: uuid::Uuid::new_v4().simple().to_string(), user_id, display_name };
        self.names.insert(user_id, who.display_name.clone());
        self.web.insert(who.token.clone(), who.clone());
        who
    }

    fn web_action(&mut self, who: &WebParticipant, action: &WebAction) -> Result<FloorRequestRecord, ApiError> {
        let actor = format!("web:{}", who.user_id);
        match action.kind {
            WebActionKind::Request => {
                let result = self.core.submit_request(
                    action.floor_id,
                    who.user_id,
                    who.display_name.clone(),
                    Origin::Web,
                    Priority::Normal,
                );
                Ok(self.apply(result, &actor, ReplyPlan::None)?)
            }
            WebActionKind::Release => {
                if self.core.floor(action.floor_id).is_none() {
                    return Err(FloorError::UnknownFloor(action.floor_id).into());
                }
                let Some(live) = self.core.live_request(who.user_id, action.floor_id) else {
                    return Err(ApiError::new(
                        ApiStatus::NotFound,
                        "NoLiveRequest",
                        format!("no live request on floor {}", action.floor_id),
                    ));
                };
                let (id, state) = (live.request_id, live.state);
                let result = if state == RequestState::Granted {
                    self.core.release_floor(id)
                } else {
                    self.core.cancel_request(id)
                };
                Ok(self.apply(result, &actor, ReplyPlan::None)?)
            }
        }
    }

    // ---- badges ------------------------------------------------------------------

    fn badge(&mut self, read: BadgeRead) -> BadgeOutcome {
        let dir = self.badges.current();
        let Some(floor) = dir.reader_floor(&read.reader) else {
            tracing::warn!(conf = self.conference_id, reader = %read.reader, "badge read from unknown reader dropped");
            return BadgeOutcome::UnknownReader(read.reader);
        };
        let Some(holder) = dir.holder(&read.tag) else {
            tracing::warn!(conf = self.conference_id, tag = %read.tag, "unknown badge dropped");
            return BadgeOutcome::UnknownTag(read.tag);
        };
        if !self.debouncer.admit(&read, self.clock.now()) {
            return BadgeOutcome::Debounced;
        }
        let actor = format!("badge:{}", read.reader);
        let user = holder.user_id;
        match self.core.live_request(user, floor).map(|r| (r.request_id, r.state)) {
            None => {
                let result =
                    self.core.submit_request(floor, user, holder.display_name.clone(), Origin::Rfid, Priority::Normal);
                match self.apply(result, &actor, ReplyPlan::None) {
                    Ok(r) => BadgeOutcome::Requested(r),
                    Err(e) => BadgeOutcome::Rejected(e),
                }
            }
            Some((id, RequestState::Granted)) => {
                let result = self.core.release_floor(id);
                match self.apply(result, &actor, ReplyPlan::None) {
                    Ok(r) => BadgeOutcome::Released(r),
                    Err(e) => BadgeOutcome::Rejected(e),
                }
            }
            Some((id, _)) => {
                let result = self.core.cancel_request(id);
                match self.apply(result, &actor, ReplyPlan::None) {
                    Ok(r) => BadgeOutcome::Cancelled(r),
                    Err(e) => BadgeOutcome::Rejected(e),
                }
            }
        }
    }
}
