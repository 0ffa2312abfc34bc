//! Participant (and chair) protocol client over one TCP connection.

use std::collections::{HashMap, VecDeque};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use floorctl_core::RequestState;
use floorctl_wire::{
    request_status_in, Attribute, AttributeValue, BfcpMessage, FrameReader, Primitive, RequestStatus, StatusCode,
};
use tokio::io::AsyncWriteExt;
use tokio::net::{TcpStream, ToSocketAddrs};
use tokio::sync::{mpsc, oneshot, Notify};

use crate::error::ClientError;
use crate::transactions::{Incoming, TransactionTable};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(5);

/// What a FloorRequestStatus says about one request.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RequestUpdate {
    pub request_id: u16,
    pub state: RequestState,
    /// Queue position; 0 when not queued.
    pub position: u8,
    /// Server event sequence number, when the server reports one.
    pub seq: Option<u64>,
}

impl RequestUpdate {
    /// Reads the first request information group of a FloorRequestStatus.
    pub fn from_message(msg: &BfcpMessage) -> Option<RequestUpdate> {
        if msg.primitive() != Primitive::FloorRequestStatus {
            return None;
        }
        let (request_id, group) = msg.floor_request_information().next()?;
        let RequestStatus { status, queue_position } = request_status_in(group)?;
        Some(RequestUpdate { request_id, state: state_of(status), position: queue_position, seq: status_seq(group) })
    }
}

pub fn state_of(code: StatusCode) -> RequestState {
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

/// The `seq=<n>` STATUS-INFO the server puts in a request information group.
pub fn status_seq(group: &[Attribute]) -> Option<u64> {
    group.iter().find_map(|a| match &a.value {
        AttributeValue::OverallRequestStatus { attributes, .. } => attributes.iter().find_map(|a| match &a.value {
            AttributeValue::StatusInfo(s) => s.strip_prefix("seq=")?.parse().ok(),
            _ => None,
        }),
        _ => None,
    })
}

/// Sequence number carried by a FloorRequestStatus or FloorStatus, if any.
pub fn message_seq(msg: &BfcpMessage) -> Option<u64> {
    msg.floor_request_information().next().and_then(|(_, g)| status_seq(g))
}

fn server_error(msg: &BfcpMessage) -> ClientError {
    let mut code = None;
    let mut info = None;
    for a in &msg.attributes {
        match &a.value {
            AttributeValue::ErrorCode { code: c, .. } => code = Some(*c),
            AttributeValue::ErrorInfo(i) => info = Some(i.clone()),
            _ => {}
        }
    }
    match code {
        Some(code) => ClientError::Server { code, info },
        None => ClientError::Protocol("Error message without ERROR-CODE".into()),
    }
}

type Waiter = oneshot::Sender<BfcpMessage>;

#[derive(Default)]
struct Shared {
    table: TransactionTable<Waiter>,
    /// Unsolicited messages not yet taken by the caller.
    backlog: VecDeque<BfcpMessage>,
    /// Every message received, in arrival order.
    log: Vec<BfcpMessage>,
    known: HashMap<u16, RequestUpdate>,
    closed: bool,
}

/// A connected session. Replies are matched by transaction id and expected
/// primitive; everything else is queued as a notification. Server heartbeats
/// are answered automatically.
pub struct BfcpClient {
    conference_id: u32,
    user_id: u16,
    timeout: Duration,
    out: mpsc::UnboundedSender<Vec<u8>>,
    shared: Arc<Mutex<Shared>>,
    arrived: Arc<Notify>,
    reader: tokio::task::JoinHandle<()>,
}

impl Drop for BfcpClient {
    fn drop(&mut self) {
        self.reader.abort();
    }
}

impl BfcpClient {
    pub async fn connect(
        addr: impl ToSocketAddrs,
        conference_id: u32,
        user_id: u16,
    ) -> Result<BfcpClient, ClientError> {
        let stream = TcpStream::connect(addr).await?;
        stream.set_nodelay(true)?;
        let (read, mut write) = stream.into_split();
        let (out, mut out_rx) = mpsc::unbounded_channel::<Vec<u8>>();
        tokio::spawn(async move {
            while let Some(bytes) = out_rx.recv().await {
                if write.write_all(&bytes).await.is_err() {
                    break;
                }
            }
        });
        let shared = Arc::new(Mutex::new(Shared::default()));
        let arrived = Arc::new(Notify::new());
        let reader = tokio::spawn(read_loop(FrameReader::new(read), shared.clone(), arrived.clone(), out.clone()));
        Ok(BfcpClient { conference_id, user_id, timeout: DEFAULT_TIMEOUT, out, shared, arrived, reader })
    }

    pub fn with_timeout(mut self, timeout: Duration) -> BfcpClient {
        self.timeout = timeout;
        self
    }

    pub fn user_id(&self) -> u16 {
        self.user_id
    }

    pub fn conference_id(&self) -> u32 {
        self.conference_id
    }

    /// Sends a request and waits for its reply. `msg`'s transaction id is
    /// replaced by a fresh odd one.
    pub async fn transact(&self, mut msg: BfcpMessage, expect: &[Primitive]) -> Result<BfcpMessage, ClientError> {
        let sent = msg.primitive();
        let (tx, rx) = oneshot::channel();
        let id = {
            let mut s = self.shared.lock().unwrap();
            if s.closed {
                return Err(ClientError::Closed);
            }
            s.table.begin(expect, tx).ok_or(ClientError::Busy)?
        };
        msg.header.transaction_id = id;
        let bytes = msg.encode()?;
        self.out.send(bytes).map_err(|_| ClientError::Closed)?;
        let reply = match tokio::time::timeout(self.timeout, rx).await {
            Ok(Ok(reply)) => reply,
            Ok(Err(_)) => return Err(ClientError::Closed),
            Err(_) => {
                self.shared.lock().unwrap().table.abandon(id);
                return Err(ClientError::Timeout { what: format!("reply to {sent}"), after: self.timeout });
            }
        };
        if reply.primitive() == Primitive::Error {
            return Err(server_error(&reply));
        }
        if !expect.contains(&reply.primitive()) {
            return Err(ClientError::UnexpectedReply { sent, got: reply.primitive() });
        }
        Ok(reply)
    }

    fn message(&self, primitive: Primitive) -> BfcpMessage {
        BfcpMessage::new(primitive, self.conference_id, 0, self.user_id)
    }

    pub async fn hello(&self, display_name: Option<&str>) -> Result<(), ClientError> {
        let mut msg = self.message(Primitive::Hello);
        if let Some(name) = display_name {
            msg = msg.with(AttributeValue::UserDisplayName(name.into()));
        }
        self.transact(msg, &[Primitive::HelloAck]).await.map(drop)
    }

    /// Hello that also claims the chair role.
    pub async fn hello_chair(&self, token: &str, display_name: Option<&str>) -> Result<(), ClientError> {
        let mut msg =
            self.message(Primitive::Hello).with(AttributeValue::ParticipantProvidedInfo(format!("chair:{token}")));
        if let Some(name) = display_name {
            msg = msg.with(AttributeValue::UserDisplayName(name.into()));
        }
        self.transact(msg, &[Primitive::HelloAck]).await.map(drop)
    }

    async fn status_call(&self, msg: BfcpMessage) -> Result<RequestUpdate, ClientError> {
        let reply = self.transact(msg, &[Primitive::FloorRequestStatus]).await?;
        let update = RequestUpdate::from_message(&reply)
            .ok_or_else(|| ClientError::Protocol("FloorRequestStatus without request status".into()))?;
        self.shared.lock().unwrap().known.insert(update.request_id, update);
        Ok(update)
    }

    /// Asks for a floor; the reply carries the new request id and its state.
    pub async fn request_floor(&self, floor_id: u16) -> Result<RequestUpdate, ClientError> {
        self.status_call(self.message(Primitive::FloorRequest).with(AttributeValue::FloorId(floor_id))).await
    }

    /// Releases a held floor or withdraws a queued request.
    pub async fn release_floor(&self, request_id: u16) -> Result<RequestUpdate, ClientError> {
        self.status_call(self.message(Primitive::FloorRelease).with(AttributeValue::FloorRequestId(request_id))).await
    }

    pub async fn query_request(&self, request_id: u16) -> Result<RequestUpdate, ClientError> {
        self.status_call(self.message(Primitive::FloorRequestQuery).with(AttributeValue::FloorRequestId(request_id)))
            .await
    }

    /// Chair decision on a request (Accepted, Denied or Revoked).
    pub async fn chair_action(&self, request_id: u16, status: StatusCode) -> Result<(), ClientError> {
        let msg = self.message(Primitive::ChairAction).with(AttributeValue::FloorRequestInformation {
            floor_request_id: request_id,
            attributes: vec![Attribute::new(AttributeValue::OverallRequestStatus {
                floor_request_id: request_id,
                attributes: vec![Attribute::new(AttributeValue::RequestStatus(RequestStatus {
                    status,
                    queue_position: 0,
                }))],
            })],
        });
        self.transact(msg, &[Primitive::ChairActionAck]).await.map(drop)
    }

    /// Last state seen for a request, from replies or notifications.
    pub fn known(&self, request_id: u16) -> Option<RequestUpdate> {
        self.shared.lock().unwrap().known.get(&request_id).copied()
    }

    /// Waits for a notification saying `request_id` reached `target`. Other
    /// notifications stay queued for [`BfcpClient::next_notification`].
    pub async fn await_status(
        &self,
        request_id: u16,
        target: RequestState,
        timeout: Duration,
    ) -> Result<RequestUpdate, ClientError> {
        let deadline = tokio::time::Instant::now() + timeout;
        loop {
            let notified = self.arrived.notified();
            {
                let mut s = self.shared.lock().unwrap();
                let hit = s.backlog.iter().position(|m| {
                    RequestUpdate::from_message(m).is_some_and(|u| u.request_id == request_id && u.state == target)
                });
                if let Some(i) = hit {
                    let m = s.backlog.remove(i).expect("index from position");
                    return Ok(RequestUpdate::from_message(&m).expect("matched above"));
                }
                if s.closed {
                    return Err(ClientError::Closed);
                }
            }
            if tokio::time::timeout_at(deadline, notified).await.is_err() {
                return Err(ClientError::Timeout {
                    what: format!("request {request_id} reaching {target}"),
                    after: timeout,
                });
            }
        }
    }

    /// Next unsolicited message, or None once the connection is closed and
    /// nothing is left.
    pub async fn next_notification(&self, timeout: Duration) -> Result<Option<BfcpMessage>, ClientError> {
        let deadline = tokio::time::Instant::now() + timeout;
        loop {
            let notified = self.arrived.notified();
            {
                let mut s = self.shared.lock().unwrap();
                if let Some(m) = s.backlog.pop_front() {
                    return Ok(Some(m));
                }
                if s.closed {
                    return Ok(None);
                }
            }
            if tokio::time::timeout_at(deadline, notified).await.is_err() {
                return Err(ClientError::Timeout { what: "notification".into(), after: timeout });
            }
        }
    }

    /// Every message received so far, replies included.
    pub fn received(&self) -> Vec<BfcpMessage> {
        self.shared.lock().unwrap().log.clone()
    }

    pub fn is_closed(&self) -> bool {
        self.shared.lock().unwrap().closed
    }
}

async fn read_loop(
    mut frames: FrameReader<tokio::net::tcp::OwnedReadHalf>,
    shared: Arc<Mutex<Shared>>,
    arrived: Arc<Notify>,
    out: mpsc::UnboundedSender<Vec<u8>>,
) {
    loop {
        let msg = match frames.next_message().await {
            Ok(m) => m,
            Err(floorctl_wire::FrameError::Decode(e)) if !e.is_framing_error() => {
                tracing::warn!(error = %e, "ignoring undecodable message");
                continue;
            }
            Err(_) => break,
        };
        let waiter = {
            let mut s = shared.lock().unwrap();
            s.log.push(msg.clone());
            if let Some(u) = RequestUpdate::from_message(&msg) {
                s.known.insert(u.request_id, u);
            }
            match s.table.resolve(&msg) {
                Incoming::Reply(w) => Some(w),
                Incoming::Unsolicited => {
                    if msg.primitive() == Primitive::Hello {
                        // Heartbeat from the server.
                        if let Ok(bytes) = msg.reply(Primitive::HelloAck).encode() {
                            let _ = out.send(bytes);
                        }
                    } else {
                        s.backlog.push_back(msg.clone());
                    }
                    None
                }
            }
        };
        if let Some(w) = waiter {
            let _ = w.send(msg);
        }
        arrived.notify_waiters();
    }
    let mut s = shared.lock().unwrap();
    s.closed = true;
    // Dropping the waiters fails their calls with Closed.
    s.table.clear();
    drop(s);
    arrived.notify_waiters();
}
