//! Protocol connections. Each accepted stream gets a reader task that decodes
//! frames and forwards them to the conference, and a writer task that drains
//! the session outbox, numbers server-initiated messages and probes idle
//! peers.

use std::sync::{Arc, Mutex};
use std::time::Duration;

use floorctl_wire::{decode, BfcpMessage, DecodeError, ErrorCode, FrameError, FrameReader, Primitive, RawHeader};
use tokio::io::{AsyncRead, AsyncWrite, AsyncWriteExt};
use tokio::net::TcpListener;
use tokio::sync::mpsc;
use tokio::time::Instant;
use tokio_util::sync::CancellationToken;

use crate::bfcp;
use crate::conference::{ConferenceHandle, Outbound};

#[derive(Debug, Clone, Copy)]
pub struct SessionOptions {
    /// Silence after which the server sends Hello.
    pub idle_probe: Duration,
    /// How long a probed peer has to answer before the session is closed.
    pub probe_timeout: Duration,
    /// Give up on a frame that stops arriving halfway for this long.
    pub stall_timeout: Duration,
    pub outbox_capacity: usize,
}

impl Default for SessionOptions {
    fn default() -> Self {
        SessionOptions {
            idle_probe: Duration::from_secs(60),
            probe_timeout: Duration::from_secs(10),
            stall_timeout: Duration::from_secs(10),
            outbox_capacity: 256,
        }
    }
}

/// Accepts connections until `shutdown` fires.
pub async fn serve(
    listener: TcpListener,
    conference: ConferenceHandle,
    options: SessionOptions,
    shutdown: CancellationToken,
) {
    loop {
        tokio::select! {
            _ = shutdown.cancelled() => break,
            accepted = listener.accept() => match accepted {
                Ok((stream, peer)) => {
                    let _ = stream.set_nodelay(true);
                    tracing::debug!(%peer, "connection accepted");
                    let conference = conference.clone();
                    let shutdown = shutdown.child_token();
                    tokio::spawn(async move {
                        let (read, write) = stream.into_split();
                        run(read, write, conference, options, shutdown).await;
                        tracing::debug!(%peer, "connection closed");
                    });
                }
                Err(e) => {
                    tracing::warn!(error = %e, "accept failed");
                    tokio::time::sleep(Duration::from_millis(50)).await;
                }
            }
        }
    }
}

/// Runs one session over any byte stream until either side ends it.
pub async fn run<R, W>(
    read: R,
    write: W,
    conference: ConferenceHandle,
    options: SessionOptions,
    closer: CancellationToken,
) where
    R: AsyncRead + Unpin + Send + 'static,
    W: AsyncWrite + Unpin + Send + 'static,
{
    let (outbox, rx) = mpsc::channel(options.outbox_capacity.max(1));
    let Some(session) = conference.open_session(outbox.clone(), closer.clone()).await else { return };
    let last_heard = Arc::new(Mutex::new(Instant::now()));
    let writer =
        tokio::spawn(write_loop(write, rx, conference.conference_id(), options, closer.clone(), last_heard.clone()));

    let mut frames = FrameReader::new(read).with_stall_timeout(options.stall_timeout);
    loop {
        let frame = tokio::select! {
            _ = closer.cancelled() => break,
            f = frames.next_frame() => f,
        };
        let frame = match frame {
            Ok(f) => f,
            Err(FrameError::StreamClosed) => break,
            Err(FrameError::Io(e)) => {
                tracing::debug!(error = %e, "read failed");
                break;
            }
            Err(FrameError::Decode(e)) => {
                // Framing is lost; say why if the header is readable, then hang up.
                tracing::info!(error = %e, "dropping connection");
                if let Some(reply) = framing_error_reply(&frames, &e) {
                    let _ = outbox.try_send(Outbound::Reply(reply));
                }
                break;
            }
        };
        *last_heard.lock().unwrap() = Instant::now();
        match decode(&frame) {
            Ok(msg) => conference.bfcp(session, msg).await,
            Err(e) => {
                let Ok(h) = RawHeader::parse(&frame) else { continue };
                // Never answer an Error with an Error.
                if h.primitive == Primitive::Error.code() {
                    continue;
                }
                let code = match e {
                    DecodeError::UnknownPrimitive(_) => ErrorCode::UnknownPrimitive,
                    DecodeError::UnknownMandatoryAttribute { .. } => ErrorCode::UnknownMandatoryAttribute,
                    _ => ErrorCode::UnableToParseMessage,
                };
                let mut reply = bfcp::error_message(h.conference_id, h.transaction_id, h.user_id, code, e.to_string());
                if let DecodeError::UnknownMandatoryAttribute { kind } = e {
                    // The details octets list the offending attribute types.
                    if let Some(attr) = reply.attributes.first_mut() {
                        if let floorctl_wire::AttributeValue::ErrorCode { details, .. } = &mut attr.value {
                            details.push(kind << 1);
                        }
                    }
                }
                if outbox.try_send(Outbound::Reply(reply)).is_err() {
                    break;
                }
            }
        }
    }
    drop(outbox);
    conference.close_session(session).await;
    let _ = writer.await;
    closer.cancel();
}

fn framing_error_reply<R: AsyncRead + Unpin>(frames: &FrameReader<R>, err: &DecodeError) -> Option<BfcpMessage> {
    let code = match err {
        DecodeError::BadVersion(_) => ErrorCode::UnsupportedVersion,
        DecodeError::Oversized { .. } => ErrorCode::IncorrectMessageLength,
        _ => return None,
    };
    let h = frames.pending_header()?;
    Some(bfcp::error_message(h.conference_id, h.transaction_id, h.user_id, code, err.to_string()))
}

async fn write_loop<W: AsyncWrite + Unpin>(
    mut write: W,
    mut rx: mpsc::Receiver<Outbound>,
    conference_id: u32,
    options: SessionOptions,
    closer: CancellationToken,
    last_heard: Arc<Mutex<Instant>>,
) {
    let mut next_tx: u16 = 0;
    let mut next_server_tx = || {
        // Even and never zero.
        next_tx = next_tx.wrapping_add(2);
        if next_tx == 0 {
            next_tx = 2;
        }
        next_tx
    };
    let mut user_id = 0u16;
    let tick = (options.idle_probe.min(options.probe_timeout) / 4).max(Duration::from_millis(10));
    let mut ticker = tokio::time::interval(tick);
    ticker.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
    let mut probe_sent: Option<Instant> = None;
    loop {
        let out = tokio::select! {
            _ = closer.cancelled() => break,
            out = rx.recv() => match out {
                Some(out) => out,
                None => break,
            },
            _ = ticker.tick() => {
                let heard = *last_heard.lock().unwrap();
                let now = Instant::now();
                match probe_sent {
                    Some(sent) if heard >= sent => probe_sent = None,
                    Some(sent) if now.duration_since(sent) >= options.probe_timeout => {
                        tracing::info!(conf = conference_id, user = user_id, "no answer to Hello, closing session");
                        closer.cancel();
                        break;
                    }
                    Some(_) => {}
                    None => {}
                }
                if probe_sent.is_none() && now.duration_since(heard) >= options.idle_probe {
                    probe_sent = Some(now);
                    Outbound::Notify(BfcpMessage::new(Primitive::Hello, conference_id, 0, user_id))
                } else {
                    continue;
                }
            }
        };
        let mut msg = match out {
            Outbound::Reply(m) => m,
            Outbound::Notify(mut m) => {
                m.header.transaction_id = next_server_tx();
                m
            }
        };
        if msg.header.user_id != 0 {
            user_id = msg.header.user_id;
        } else if msg.primitive() == Primitive::Hello {
            msg.header.user_id = user_id;
        }
        let bytes = match msg.encode() {
            Ok(b) => b,
            Err(e) => {
                tracing::error!(error = %e, primitive = %msg.primitive(), "could not encode outgoing message");
                continue;
            }
        };
        if let Err(e) = write.write_all(&bytes).await {
            tracing::debug!(error = %e, "write failed");
            closer.cancel();
            break;
        }
    }
    let _ = write.shutdown().await;
}
