#![allow(dead_code)]

use std::collections::VecDeque;
use std::net::SocketAddr;
use std::time::Duration;

use floorctl_server::{Daemon, DaemonConfig};
use floorctl_wire::{
    request_status_in, AttributeValue, BfcpMessage, ErrorCode, FrameReader, Primitive, RequestStatus, StatusCode,
};
use serde_json::Value;
use tokio::io::AsyncWriteExt;
use tokio::net::tcp::{OwnedReadHalf, OwnedWriteHalf};
use tokio::net::TcpStream;

pub const CONF: u32 = 1;
pub const TOKEN: &str = "chair-secret";
pub const WAIT: Duration = Duration::from_secs(5);

pub async fn start(edit: impl FnOnce(&mut DaemonConfig)) -> Daemon {
    let mut config = DaemonConfig::local(TOKEN);
    config.badge_addr = None;
    edit(&mut config);
    Daemon::start(config).await.expect("daemon starts")
}

/// A bare protocol peer built straight on the codec, so the daemon is tested
/// independently of the client library.
pub struct Peer {
    pub user: u16,
    pub conf: u32,
    reader: FrameReader<OwnedReadHalf>,
    writer: OwnedWriteHalf,
    next_tx: u16,
    /// Messages received while waiting for something else.
    pub inbox: VecDeque<BfcpMessage>,
}

impl Peer {
    pub async fn connect(addr: SocketAddr, user: u16) -> Peer {
        let stream = TcpStream::connect(addr).await.expect("connect");
        let (read, write) = stream.into_split();
        Peer { user, conf: CONF, reader: FrameReader::new(read), writer: write, next_tx: 1, inbox: VecDeque::new() }
    }

    /// A fresh odd transaction id.
    pub fn tx(&mut self) -> u16 {
        let tx = self.next_tx;
        self.next_tx = self.next_tx.wrapping_add(2);
        tx
    }

    pub fn message(&mut self, primitive: Primitive) -> BfcpMessage {
        let tx = self.tx();
        BfcpMessage::new(primitive, self.conf, tx, self.user)
    }

    pub async fn send(&mut self, msg: &BfcpMessage) {
        let bytes = msg.encode().expect("test message encodes");
        self.send_bytes(&bytes).await;
    }

    pub async fn send_bytes(&mut self, bytes: &[u8]) {
        self.writer.write_all(bytes).await.expect("write");
    }

    async fn read(&mut self, wait: Duration) -> Option<BfcpMessage> {
        match tokio::time::timeout(wait, self.reader.next_message()).await {
            Ok(Ok(m)) => Some(m),
            Ok(Err(_)) | Err(_) => None,
        }
    }

    /// Next message, from the inbox first.
    pub async fn recv(&mut self) -> BfcpMessage {
        if let Some(m) = self.inbox.pop_front() {
            return m;
        }
        self.read(WAIT).await.expect("message within timeout")
    }

    /// Whether the server has closed the connection.
    pub async fn closed(&mut self, wait: Duration) -> bool {
        matches!(
            tokio::time::timeout(wait, self.reader.next_message()).await,
            Ok(Err(floorctl_wire::FrameError::StreamClosed)) | Ok(Err(floorctl_wire::FrameError::Io(_)))
        )
    }

    /// Sends `msg` and waits for the message echoing its transaction id.
    /// Anything else that arrives meanwhile goes to the inbox.
    pub async fn call(&mut self, msg: BfcpMessage) -> BfcpMessage {
        let tx = msg.header.transaction_id;
        self.send(&msg).await;
        loop {
            let m = self.read(WAIT).await.unwrap_or_else(|| panic!("no reply to {}", msg.primitive()));
            if m.header.transaction_id == tx {
                return m;
            }
            self.inbox.push_back(m);
        }
    }

    pub async fn hello(&mut self, name: &str) -> BfcpMessage {
        let msg = self.message(Primitive::Hello).with(AttributeValue::UserDisplayName(name.into()));
        self.call(msg).await
    }

    pub async fn chair_hello(&mut self, token: &str) -> BfcpMessage {
        let msg =
            self.message(Primitive::Hello).with(AttributeValue::ParticipantProvidedInfo(format!("chair:{token}")));
        self.call(msg).await
    }

    pub async fn request(&mut self, floor: u16) -> BfcpMessage {
        let msg = self.message(Primitive::FloorRequest).with(AttributeValue::FloorId(floor));
        self.call(msg).await
    }

    pub async fn release(&mut self, request: u16) -> BfcpMessage {
        let msg = self.message(Primitive::FloorRelease).with(AttributeValue::FloorRequestId(request));
        self.call(msg).await
    }

    /// Everything that arrives until the connection has been quiet for `quiet`.
    pub async fn drain(&mut self, quiet: Duration) -> Vec<BfcpMessage> {
        let mut out: Vec<BfcpMessage> = self.inbox.drain(..).collect();
        while let Some(m) = self.read(quiet).await {
            out.push(m);
        }
        out
    }

    /// Waits for a FloorRequestStatus about `request` with status `want`.
    pub async fn await_status(&mut self, request: u16, want: StatusCode) -> Status {
        let deadline = tokio::time::Instant::now() + WAIT;
        loop {
            if let Some(i) =
                self.inbox.iter().position(|m| status(m).is_some_and(|s| s.id == request && s.status == want))
            {
                return status(&self.inbox.remove(i).unwrap()).unwrap();
            }
            let left = deadline.saturating_duration_since(tokio::time::Instant::now());
            let m = self.read(left).await.unwrap_or_else(|| panic!("request {request} never reached {want}"));
            self.inbox.push_back(m);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Status {
    pub id: u16,
    pub status: StatusCode,
    pub position: u8,
    pub seq: Option<u64>,
}

/// The request status carried by a FloorRequestStatus.
pub fn status(m: &BfcpMessage) -> Option<Status> {
    if m.primitive() != Primitive::FloorRequestStatus {
        return None;
    }
    let (id, group) = m.floor_request_information().next()?;
    let RequestStatus { status, queue_position } = request_status_in(group)?;
    Some(Status { id, status, position: queue_position, seq: seq_in(group) })
}

fn seq_in(group: &[floorctl_wire::Attribute]) -> Option<u64> {
    group.iter().find_map(|a| match &a.value {
        AttributeValue::OverallRequestStatus { attributes, .. } => attributes.iter().find_map(|a| match &a.value {
            AttributeValue::StatusInfo(s) => s.strip_prefix("seq=")?.parse().ok(),
            _ => None,
        }),
        _ => None,
    })
}

/// The sequence number a FloorStatus reports, if any.
pub fn floor_status_seq(m: &BfcpMessage) -> Option<u64> {
    m.floor_request_information().next().and_then(|(_, g)| seq_in(g))
}

pub fn error_code(m: &BfcpMessage) -> Option<ErrorCode> {
    if m.primitive() != Primitive::Error {
        return None;
    }
    m.attributes.iter().find_map(|a| match a.value {
        AttributeValue::ErrorCode { code, .. } => Some(code),
        _ => None,
    })
}

/// HTTP access to a running daemon.
pub struct Api {
    pub http: reqwest::Client,
    pub base: String,
}

impl Api {
    pub fn new(daemon: &Daemon) -> Api {
        Api { http: reqwest::Client::new(), base: format!("http://{}/api/conf/{CONF}", daemon.http_addr) }
    }

    pub async fn queue(&self, floor: u16) -> Value {
        let r = self.http.get(format!("{}/floors/{floor}/queue", self.base)).send().await.unwrap();
        assert_eq!(r.status(), 200);
        r.json().await.unwrap()
    }

    pub async fn command(&self, body: Value) -> (u16, Value) {
        self.command_with(TOKEN, body).await
    }

    pub async fn command_with(&self, token: &str, body: Value) -> (u16, Value) {
        let r =
            self.http.post(format!("{}/chair/command", self.base)).bearer_auth(token).json(&body).send().await.unwrap();
        let status = r.status().as_u16();
        (status, r.json().await.unwrap_or(Value::Null))
    }

    pub async fn join(&self, name: &str) -> Value {
        let r = self
            .http
            .post(format!("{}/participants", self.base))
            .json(&serde_json::json!({ "display_name": name }))
            .send()
            .await
            .unwrap();
        assert_eq!(r.status(), 201);
        r.json().await.unwrap()
    }

    pub async fn floor_action(&self, token: &str, body: Value) -> (u16, Value) {
        let r =
            self.http.post(format!("{}/floor-action", self.base)).bearer_auth(token).json(&body).send().await.unwrap();
        let status = r.status().as_u16();
        (status, r.json().await.unwrap_or(Value::Null))
    }
}

/// `(display_name, state, position)` for each queue entry.
pub fn rows(queue: &Value) -> Vec<(String, String, u64)> {
    queue
        .as_array()
        .expect("queue is an array")
        .iter()
        .map(|e| {
            (
                e["display_name"].as_str().unwrap().to_owned(),
                e["state"].as_str().unwrap().to_owned(),
                e["position"].as_u64().unwrap(),
            )
        })
        .collect()
}

pub fn row(name: &str, state: &str, position: u64) -> (String, String, u64) {
    (name.to_owned(), state.to_owned(), position)
}
