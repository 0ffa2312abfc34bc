//! Line-oriented multi-actor scripts run against a live daemon.
//!
//! ```text
//! # declarations
//! participant spromano connect user 7
//! badge User1 register tag 4d004b05d6 reader mic-1 listen user 101
//! web alice join
//!
//! # steps; `expect` checks the actor's request in the served queue
//! badge User1 read expect pending pos 1
//! participant spromano request floor 1 expect pending pos 2
//! web alice request floor 1
//! chair accept spromano expect granted
//! chair priority alice business
//! chair policy floor 1 max 2 auto off
//! chair revoke-all floor 1
//! participant spromano await revoked
//! participant spromano release floor 1 expect released
//! expect floor 1 spromano=REVOKED User1=PENDING@1
//! expect floor 1 empty
//! ```

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::time::{Duration, Instant};

use floorctl_core::{FloorId, FloorPolicy, FloorRequestRecord, Priority, RequestId, RequestState};
use floorctl_wire::BfcpMessage;
use thiserror::Error;

use crate::badge::BadgeInjector;
use crate::error::ClientError;
use crate::http::{ChairCommand, ChairVerb, GatewayClient, WebActionKind};
use crate::session::BfcpClient;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct ScenarioParseError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActorKind {
    Participant,
    Badge,
    Web,
}

impl fmt::Display for ActorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ActorKind::Participant => "participant",
            ActorKind::Badge => "badge",
            ActorKind::Web => "web",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Expect {
    pub state: RequestState,
    pub position: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FloorRow {
    pub name: String,
    pub state: RequestState,
    pub position: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Accept,
    Deny,
    Revoke,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    Connect { actor: String, user: u16 },
    Register { actor: String, tag: String, reader: String, listen: Option<u16> },
    Join { actor: String },
    Request { actor: String, floor: u16 },
    Release { actor: String, floor: u16 },
    Await { actor: String, state: RequestState, floor: Option<u16> },
    Read { actor: String },
    Decide { decision: Decision, target: String, floor: Option<u16> },
    Prioritize { target: String, priority: Priority, floor: Option<u16> },
    RevokeAll { floor: u16 },
    Policy { floor: u16, max_granted: Option<u32>, auto_grant: Option<bool> },
    CheckFloor { floor: u16, rows: Vec<FloorRow> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Step {
    pub line: usize,
    pub text: String,
    pub action: Action,
    pub expect: Option<Expect>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Scenario {
    pub steps: Vec<Step>,
}

struct Words<'a> {
    line: usize,
    items: Vec<&'a str>,
    at: usize,
}

impl<'a> Words<'a> {
    fn err(&self, message: impl Into<String>) -> ScenarioParseError {
        ScenarioParseError { line: self.line, message: message.into() }
    }

    fn next(&mut self, what: &str) -> Result<&'a str, ScenarioParseError> {
        let w = self.items.get(self.at).copied().ok_or_else(|| self.err(format!("expected {what}")))?;
        self.at += 1;
        Ok(w)
    }

    fn peek(&self) -> Option<&'a str> {
        self.items.get(self.at).copied()
    }

    fn keyword(&mut self, kw: &str) -> Result<(), ScenarioParseError> {
        let w = self.next(&format!("`{kw}`"))?;
        if w.eq_ignore_ascii_case(kw) {
            Ok(())
        } else {
            Err(self.err(format!("expected `{kw}`, found `{w}`")))
        }
    }

    fn optional(&mut self, kw: &str) -> bool {
        if self.peek().is_some_and(|w| w.eq_ignore_ascii_case(kw)) {
            self.at += 1;
            true
        } else {
            false
        }
    }

    fn number<T: std::str::FromStr>(&mut self, what: &str) -> Result<T, ScenarioParseError> {
        let w = self.next(what)?;
        w.parse().map_err(|_| self.err(format!("bad {what} `{w}`")))
    }

    fn state(&mut self) -> Result<RequestState, ScenarioParseError> {
        let w = self.next("a request state")?;
        w.parse().map_err(|e: String| self.err(e))
    }

    fn optional_floor(&mut self) -> Result<Option<u16>, ScenarioParseError> {
        if self.optional("floor") {
            Ok(Some(self.number("floor id")?))
        } else {
            Ok(None)
        }
    }

    fn done(&self) -> Result<(), ScenarioParseError> {
        match self.peek() {
            None => Ok(()),
            Some(w) => Err(self.err(format!("unexpected `{w}`"))),
        }
    }
}

fn parse_row(words: &Words<'_>, item: &str) -> Result<FloorRow, ScenarioParseError> {
    let (name, rest) = item.split_once('=').ok_or_else(|| words.err(format!("expected name=STATE, found `{item}`")))?;
    let (state, position) = match rest.split_once('@') {
        Some((s, p)) => (s, Some(p.parse().map_err(|_| words.err(format!("bad position `{p}`")))?)),
        None => (rest, None),
    };
    let state = state.parse().map_err(|e: String| words.err(e))?;
    if name.is_empty() {
        return Err(words.err("empty name"));
    }
    Ok(FloorRow { name: name.to_owned(), state, position })
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Scenario, ScenarioParseError> {
        let mut actors: HashMap<String, ActorKind> = HashMap::new();
        let mut steps = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let mut w = Words { line, items: content.split_whitespace().collect(), at: 0 };
            let head = w.next("a step")?.to_ascii_lowercase();
            let declared = |w: &Words<'_>, name: &str, kind: ActorKind| match actors.get(name) {
                Some(k) if *k == kind => Ok(()),
                Some(k) => Err(w.err(format!("`{name}` is a {k}, not a {kind}"))),
                None => Err(w.err(format!("`{name}` has not been declared"))),
            };
            let any_declared = |w: &Words<'_>, name: &str| {
                if actors.contains_key(name) {
                    Ok(())
                } else {
                    Err(w.err(format!("`{name}` has not been declared")))
                }
            };
            let action = match head.as_str() {
                "participant" | "badge" | "web" => {
                    let kind = match head.as_str() {
                        "participant" => ActorKind::Participant,
                        "badge" => ActorKind::Badge,
                        _ => ActorKind::Web,
                    };
                    let actor = w.next("an actor name")?.to_owned();
                    let verb = w.next("an action")?.to_ascii_lowercase();
                    let declaring = matches!(
                        (kind, verb.as_str()),
                        (ActorKind::Participant, "connect") | (ActorKind::Badge, "register") | (ActorKind::Web, "join")
                    );
                    if declaring {
                        if actors.contains_key(&actor) {
                            return Err(w.err(format!("`{actor}` is already declared")));
                        }
                    } else {
                        declared(&w, &actor, kind)?;
                    }
                    match (kind, verb.as_str()) {
                        (ActorKind::Participant, "connect") => {
                            w.keyword("user")?;
                            let user = w.number("user id")?;
                            actors.insert(actor.clone(), kind);
                            Action::Connect { actor, user }
                        }
                        (ActorKind::Badge, "register") => {
                            w.keyword("tag")?;
                            let tag = w.next("a tag")?.to_owned();
                            w.keyword("reader")?;
                            let reader = w.next("a reader id")?.to_owned();
                            let listen = if w.optional("listen") {
                                w.keyword("user")?;
                                Some(w.number("user id")?)
                            } else {
                                None
                            };
                            actors.insert(actor.clone(), kind);
                            Action::Register { actor, tag, reader, listen }
                        }
                        (ActorKind::Web, "join") => {
                            actors.insert(actor.clone(), kind);
                            Action::Join { actor }
                        }
                        (ActorKind::Participant | ActorKind::Web, "request") => {
                            w.keyword("floor")?;
                            Action::Request { actor, floor: w.number("floor id")? }
                        }
                        (ActorKind::Participant | ActorKind::Web, "release") => {
                            w.keyword("floor")?;
                            Action::Release { actor, floor: w.number("floor id")? }
                        }
                        (ActorKind::Participant | ActorKind::Badge, "await") => {
                            let state = w.state()?;
                            Action::Await { actor, state, floor: w.optional_floor()? }
                        }
                        (ActorKind::Badge, "read") => Action::Read { actor },
                        (kind, other) => return Err(w.err(format!("a {kind} cannot `{other}`"))),
                    }
                }
                "chair" => {
                    let verb = w.next("a chair action")?.to_ascii_lowercase();
                    match verb.as_str() {
                        "accept" | "deny" | "revoke" => {
                            let decision = match verb.as_str() {
                                "accept" => Decision::Accept,
                                "deny" => Decision::Deny,
                                _ => Decision::Revoke,
                            };
                            let target = w.next("an actor name")?.to_owned();
                            any_declared(&w, &target)?;
                            Action::Decide { decision, target, floor: w.optional_floor()? }
                        }
                        "priority" => {
                            let target = w.next("an actor name")?.to_owned();
                            any_declared(&w, &target)?;
                            let priority = match w.next("business or normal")?.to_ascii_lowercase().as_str() {
                                "business" | "business_class" => Priority::BusinessClass,
                                "normal" => Priority::Normal,
                                other => return Err(w.err(format!("unknown priority `{other}`"))),
                            };
                            Action::Prioritize { target, priority, floor: w.optional_floor()? }
                        }
                        "revoke-all" => {
                            w.keyword("floor")?;
                            Action::RevokeAll { floor: w.number("floor id")? }
                        }
                        "policy" => {
                            w.keyword("floor")?;
                            let floor = w.number("floor id")?;
                            let max_granted = if w.optional("max") { Some(w.number("max_granted")?) } else { None };
                            let auto_grant = if w.optional("auto") {
                                match w.next("on or off")?.to_ascii_lowercase().as_str() {
                                    "on" => Some(true),
                                    "off" => Some(false),
                                    other => return Err(w.err(format!("expected on or off, found `{other}`"))),
                                }
                            } else {
                                None
                            };
                            if max_granted.is_none() && auto_grant.is_none() {
                                return Err(w.err("policy needs `max <n>` and/or `auto on|off`"));
                            }
                            Action::Policy { floor, max_granted, auto_grant }
                        }
                        other => return Err(w.err(format!("unknown chair action `{other}`"))),
                    }
                }
                "expect" => {
                    w.keyword("floor")?;
                    let floor = w.number("floor id")?;
                    let mut rows = Vec::new();
                    if w.optional("empty") {
                        w.done()?;
                    } else {
                        while let Some(item) = w.peek() {
                            w.at += 1;
                            let row = parse_row(&w, item)?;
                            any_declared(&w, &row.name)?;
                            rows.push(row);
                        }
                        if rows.is_empty() {
                            return Err(w.err("expected `empty` or name=STATE entries"));
                        }
                    }
                    Action::CheckFloor { floor, rows }
                }
                other => return Err(w.err(format!("unknown step `{other}`"))),
            };
            let expect = if w.optional("expect") {
                let has_subject = matches!(
                    action,
                    Action::Request { .. }
                        | Action::Release { .. }
                        | Action::Read { .. }
                        | Action::Decide { .. }
                        | Action::Prioritize { .. }
                );
                if !has_subject {
                    return Err(w.err("this step takes no `expect`"));
                }
                let state = w.state()?;
                let position = if w.optional("pos") { Some(w.number("position")?) } else { None };
                Some(Expect { state, position })
            } else {
                None
            };
            w.done()?;
            steps.push(Step { line, text: content.to_owned(), action, expect });
        }
        Ok(Scenario { steps })
    }
}

/// Where a scenario runs.
#[derive(Debug, Clone)]
pub struct Target {
    pub bfcp_addr: String,
    /// Server root, e.g. `http://127.0.0.1:8080`.
    pub http_base: String,
    pub badge_addr: Option<String>,
    pub conference_id: u32,
    pub chair_token: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line} `{text}`\n  expected: {expected}\n  actual:   {actual}")]
pub struct StepFailed {
    pub line: usize,
    pub text: String,
    pub expected: String,
    pub actual: String,
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Parse(#[from] ScenarioParseError),
    #[error("step failed: {0}")]
    StepFailed(StepFailed),
    #[error("line {line} `{text}`: {source}")]
    Client { line: usize, text: String, source: ClientError },
}

#[derive(Debug, Clone)]
pub struct StepReport {
    pub line: usize,
    pub text: String,
    pub elapsed: Duration,
    /// Every floor's queue as served after the step.
    pub snapshots: BTreeMap<u16, Vec<FloorRequestRecord>>,
}

/// Messages one protocol session received during the run.
#[derive(Debug, Clone)]
pub struct SessionLog {
    pub actor: String,
    pub user_id: u16,
    pub messages: Vec<BfcpMessage>,
}

#[derive(Debug)]
pub struct Report {
    pub steps: Vec<StepReport>,
    pub failure: Option<ScenarioError>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.failure.is_none()
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.steps {
            writeln!(f, "ok   {:>4}  {}", s.line, s.text)?;
        }
        match &self.failure {
            None => write!(f, "PASS ({} steps)", self.steps.len()),
            Some(e) => write!(f, "FAIL {e}"),
        }
    }
}

struct Actor {
    kind: ActorKind,
    session: Option<BfcpClient>,
    tag: Option<String>,
    reader: Option<String>,
    web_token: Option<String>,
    /// Latest request per floor.
    requests: BTreeMap<u16, RequestId>,
    last_floor: Option<u16>,
}

/// Runs scenarios against one daemon. Sessions opened by a run stay connected
/// until the runner is dropped.
pub struct Runner {
    target: Target,
    gateway: GatewayClient,
    badge: Option<BadgeInjector>,
    actors: BTreeMap<String, Actor>,
    floors: Vec<u16>,
}

fn rows_text(entries: &[FloorRequestRecord]) -> String {
    if entries.is_empty() {
        return "(empty)".into();
    }
    entries
        .iter()
        .map(|r| {
            if r.queue_position > 0 {
                format!("{}={}@{}", r.display_name, r.state, r.queue_position)
            } else {
                format!("{}={}", r.display_name, r.state)
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn parse_badge_reply(reply: &str) -> Option<(RequestId, u16)> {
    let mut id = None;
    let mut floor = None;
    for field in reply.split_whitespace() {
        if let Some(v) = field.strip_prefix("request=") {
            id = v.parse().ok().map(RequestId);
        } else if let Some(v) = field.strip_prefix("floor=") {
            floor = v.parse().ok();
        }
    }
    Some((id?, floor?))
}

impl Runner {
    pub fn new(target: Target) -> Runner {
        let gateway =
            GatewayClient::new(&target.http_base, target.conference_id).with_chair_token(target.chair_token.clone());
        Runner { target, gateway, badge: None, actors: BTreeMap::new(), floors: Vec::new() }
    }

    pub fn gateway(&self) -> &GatewayClient {
        &self.gateway
    }

    /// Runs every step in order, stopping at the first failure.
    pub async fn run(&mut self, scenario: &Scenario) -> Report {
        let mut steps = Vec::new();
        let failure = self.run_steps(scenario, &mut steps).await.err();
        Report { steps, failure }
    }

    async fn run_steps(&mut self, scenario: &Scenario, out: &mut Vec<StepReport>) -> Result<(), ScenarioError> {
        if !scenario.steps.is_empty() && self.floors.is_empty() {
            let floors = self.gateway.floors().await.map_err(|source| ScenarioError::Client {
                line: 0,
                text: "list floors".into(),
                source,
            })?;
            self.floors = floors.iter().map(|f| f.floor_id.0).collect();
        }
        for step in &scenario.steps {
            let started = Instant::now();
            let client_err =
                |source: ClientError| ScenarioError::Client { line: step.line, text: step.text.clone(), source };
            let subject = self.execute(step).await.map_err(|e| match e {
                StepError::Client(c) => client_err(c),
                StepError::Failed(expected, actual) => {
                    ScenarioError::StepFailed(StepFailed { line: step.line, text: step.text.clone(), expected, actual })
                }
            })?;
            let mut snapshots = BTreeMap::new();
            for &floor in &self.floors {
                snapshots.insert(floor, self.gateway.queue(floor).await.map_err(client_err)?);
            }
            if let Some(expect) = step.expect {
                let Some((floor, id)) = subject else {
                    return Err(ScenarioError::StepFailed(StepFailed {
                        line: step.line,
                        text: step.text.clone(),
                        expected: format!("a request in state {}", expect.state),
                        actual: "no request to check".into(),
                    }));
                };
                let entries = snapshots.get(&floor).cloned().unwrap_or_default();
                let found = entries.iter().find(|r| r.request_id == id);
                let matches = found
                    .is_some_and(|r| r.state == expect.state && expect.position.is_none_or(|p| p == r.queue_position));
                if !matches {
                    let expected = match expect.position {
                        Some(p) => format!("request {id} {}@{p}", expect.state),
                        None => format!("request {id} {}", expect.state),
                    };
                    let actual = match found {
                        Some(r) => {
                            format!("request {id} {}@{} in queue {}", r.state, r.queue_position, rows_text(&entries))
                        }
                        None => format!("request {id} not in queue {}", rows_text(&entries)),
                    };
                    return Err(ScenarioError::StepFailed(StepFailed {
                        line: step.line,
                        text: step.text.clone(),
                        expected,
                        actual,
                    }));
                }
            }
            out.push(StepReport { line: step.line, text: step.text.clone(), elapsed: started.elapsed(), snapshots });
        }
        Ok(())
    }

    fn actor(&mut self, name: &str) -> Result<&mut Actor, StepError> {
        self.actors.get_mut(name).ok_or_else(|| StepError::Failed(format!("actor {name}"), "not declared".into()))
    }

    fn remember(&mut self, name: &str, floor: u16, id: RequestId) {
        if let Some(a) = self.actors.get_mut(name) {
            a.requests.insert(floor, id);
            a.last_floor = Some(floor);
        }
    }

    fn request_of(&mut self, name: &str, floor: Option<u16>) -> Result<(u16, RequestId), StepError> {
        let actor = self.actor(name)?;
        let floor = floor.or(actor.last_floor);
        floor
            .and_then(|f| actor.requests.get(&f).map(|id| (f, *id)))
            .ok_or_else(|| StepError::Failed(format!("a request by {name}"), "none made yet".into()))
    }

    /// Performs a step; returns the (floor, request) its `expect` refers to.
    async fn execute(&mut self, step: &Step) -> Result<Option<(u16, RequestId)>, StepError> {
        let t = &self.target;
        Ok(match &step.action {
            Action::Connect { actor, user } => {
                let client = BfcpClient::connect(t.bfcp_addr.as_str(), t.conference_id, *user).await?;
                client.hello(Some(actor)).await?;
                self.insert(actor, ActorKind::Participant, Some(client));
                None
            }
            Action::Register { actor, tag, reader, listen } => {
                let session = match listen {
                    Some(user) => {
                        let client = BfcpClient::connect(t.bfcp_addr.as_str(), t.conference_id, *user).await?;
                        client.hello(Some(actor)).await?;
                        Some(client)
                    }
                    None => None,
                };
                self.insert(actor, ActorKind::Badge, session);
                let a = self.actor(actor)?;
                a.tag = Some(tag.clone());
                a.reader = Some(reader.clone());
                None
            }
            Action::Join { actor } => {
                let who = self.gateway.join(actor).await?;
                self.insert(actor, ActorKind::Web, None);
                self.actor(actor)?.web_token = Some(who.token);
                None
            }
            Action::Request { actor, floor } => {
                let (kind, token) = {
                    let a = self.actor(actor)?;
                    (a.kind, a.web_token.clone())
                };
                let id = match kind {
                    ActorKind::Web => {
                        let token = token.unwrap_or_default();
                        self.gateway.floor_action(&token, WebActionKind::Request, *floor).await?.request_id
                    }
                    _ => {
                        let a = self.actor(actor)?;
                        let session = a.session.as_ref().expect("participants have sessions");
                        RequestId(session.request_floor(*floor).await?.request_id)
                    }
                };
                self.remember(actor, *floor, id);
                Some((*floor, id))
            }
            Action::Release { actor, floor } => {
                let (kind, token) = {
                    let a = self.actor(actor)?;
                    (a.kind, a.web_token.clone())
                };
                match kind {
                    ActorKind::Web => {
                        let token = token.unwrap_or_default();
                        let rec = self.gateway.floor_action(&token, WebActionKind::Release, *floor).await?;
                        Some((*floor, rec.request_id))
                    }
                    _ => {
                        let (_, id) = self.request_of(actor, Some(*floor))?;
                        let a = self.actor(actor)?;
                        let session = a.session.as_ref().expect("participants have sessions");
                        session.release_floor(id.0).await?;
                        Some((*floor, id))
                    }
                }
            }
            Action::Await { actor, state, floor } => {
                let (f, id) = self.request_of(actor, *floor)?;
                let a = self.actor(actor)?;
                let Some(session) = a.session.as_ref() else {
                    return Err(StepError::Failed(
                        format!("{actor} to have a protocol session"),
                        "badge declared without `listen`".into(),
                    ));
                };
                session.await_status(id.0, *state, crate::DEFAULT_TIMEOUT).await?;
                Some((f, id))
            }
            Action::Read { actor } => {
                let (tag, reader) = {
                    let a = self.actor(actor)?;
                    (a.tag.clone().unwrap_or_default(), a.reader.clone().unwrap_or_default())
                };
                if self.badge.is_none() {
                    let Some(addr) = self.target.badge_addr.clone() else {
                        return Err(StepError::Failed("a badge feed address".into(), "none configured".into()));
                    };
                    self.badge = Some(BadgeInjector::connect(addr).await?);
                }
                let reply = self.badge.as_mut().expect("connected above").read(&tag, &reader).await?;
                if !reply.starts_with("OK") {
                    return Err(StepError::Failed(format!("badge read accepted for {actor}"), reply));
                }
                match parse_badge_reply(&reply) {
                    Some((id, floor)) => {
                        self.remember(actor, floor, id);
                        Some((floor, id))
                    }
                    // Debounced: the request, if any, is unchanged.
                    None => self.request_of(actor, None).ok(),
                }
            }
            Action::Decide { decision, target, floor } => {
                let (f, id) = self.request_of(target, *floor)?;
                let verb = match decision {
                    Decision::Accept => ChairVerb::Accept,
                    Decision::Deny => ChairVerb::Deny,
                    Decision::Revoke => ChairVerb::Revoke,
                };
                self.gateway.command(&ChairCommand::on_request(verb, id)).await?;
                Some((f, id))
            }
            Action::Prioritize { target, priority, floor } => {
                let (f, id) = self.request_of(target, *floor)?;
                self.gateway.command(&ChairCommand::set_priority(id, *priority)).await?;
                Some((f, id))
            }
            Action::RevokeAll { floor } => {
                self.gateway.command(&ChairCommand::revoke_all(FloorId(*floor))).await?;
                None
            }
            Action::Policy { floor, max_granted, auto_grant } => {
                let current = self
                    .gateway
                    .floors()
                    .await?
                    .into_iter()
                    .find(|f| f.floor_id.0 == *floor)
                    .map(|f| f.policy)
                    .unwrap_or_default();
                let policy = FloorPolicy {
                    max_granted: max_granted.unwrap_or(current.max_granted),
                    auto_grant: auto_grant.unwrap_or(current.auto_grant),
                };
                self.gateway.command(&ChairCommand::set_policy(FloorId(*floor), policy)).await?;
                None
            }
            Action::CheckFloor { floor, rows } => {
                let entries = self.gateway.queue(*floor).await?;
                let ok = entries.len() == rows.len()
                    && entries.iter().zip(rows).all(|(e, r)| {
                        e.display_name == r.name
                            && e.state == r.state
                            && r.position.is_none_or(|p| p == e.queue_position)
                    });
                if !ok {
                    let expected = if rows.is_empty() {
                        "(empty)".to_owned()
                    } else {
                        rows.iter()
                            .map(|r| match r.position {
                                Some(p) => format!("{}={}@{p}", r.name, r.state),
                                None => format!("{}={}", r.name, r.state),
                            })
                            .collect::<Vec<_>>()
                            .join(" ")
                    };
                    return Err(StepError::Failed(expected, rows_text(&entries)));
                }
                None
            }
        })
    }

    fn insert(&mut self, name: &str, kind: ActorKind, session: Option<BfcpClient>) {
        self.actors.insert(
            name.to_owned(),
            Actor {
                kind,
                session,
                tag: None,
                reader: None,
                web_token: None,
                requests: BTreeMap::new(),
                last_floor: None,
            },
        );
    }

    /// Waits until no session has received anything for `quiet`.
    pub async fn settle(&self, quiet: Duration) {
        let count = |r: &Runner| {
            r.actors.values().filter_map(|a| a.session.as_ref()).map(|s| s.received().len()).sum::<usize>()
        };
        let mut last = count(self);
        loop {
            tokio::time::sleep(quiet).await;
            let now = count(self);
            if now == last {
                return;
            }
            last = now;
        }
    }

    /// Messages received by every protocol session opened so far.
    pub fn session_logs(&self) -> Vec<SessionLog> {
        self.actors
            .iter()
            .filter_map(|(name, a)| {
                a.session.as_ref().map(|s| SessionLog {
                    actor: name.clone(),
                    user_id: s.user_id(),
                    messages: s.received(),
                })
            })
            .collect()
    }
}

enum StepError {
    Client(ClientError),
    /// (expected, actual)
    Failed(String, String),
}

impl From<ClientError> for StepError {
    fn from(e: ClientError) -> StepError {
        StepError::Client(e)
    }
}
