//! Splitting an octet stream into messages on header-declared lengths.
//!
//! There is no resynchronization: once the stream yields a framing error the
//! caller is expected to drop the connection.

use std::time::Duration;

use bytes::{Bytes, BytesMut};
use tokio::io::{AsyncRead, AsyncReadExt};
use tokio::time::Instant;

use crate::error::{DecodeError, FrameError};
use crate::header::{RawHeader, HEADER_LEN};
use crate::message::{decode, BfcpMessage};

/// Transport-agnostic buffer: push octets in, pull complete frames out.
#[derive(Debug, Default)]
pub struct FrameBuffer {
    buf: BytesMut,
}

impl FrameBuffer {
    pub fn new() -> FrameBuffer {
        FrameBuffer::default()
    }

    pub fn extend(&mut self, data: &[u8]) {
        self.buf.extend_from_slice(data);
    }

    /// Octets buffered but not yet returned as a frame.
    pub fn pending(&self) -> usize {
        self.buf.len()
    }

    /// Header of the frame at the front of the buffer, if a whole header is
    /// there. Still readable after `next_frame` reports a framing error.
    pub fn pending_header(&self) -> Option<RawHeader> {
        RawHeader::parse(&self.buf).ok()
    }

    /// Next complete frame, if one is buffered. Only header-level problems
    /// (version, size limit) are reported here; the frame contents are decoded
    /// separately.
    pub fn next_frame(&mut self) -> Result<Option<Bytes>, DecodeError> {
        if self.buf.len() < HEADER_LEN {
            return Ok(None);
        }
        let total = RawHeader::parse(&self.buf)?.check_frame()?;
        if self.buf.len() < total {
            return Ok(None);
        }
        Ok(Some(self.buf.split_to(total).freeze()))
    }

    fn truncated(&self) -> DecodeError {
        let needed = match RawHeader::parse(&self.buf).and_then(|h| h.check_frame()) {
            Ok(total) => total,
            Err(_) => HEADER_LEN,
        };
        DecodeError::Truncated { needed, available: self.buf.len() }
    }
}

/// Reads frames from an async byte source. Single owner; not shared between
/// tasks.
#[derive(Debug)]
pub struct FrameReader<R> {
    inner: R,
    buf: FrameBuffer,
    stall_timeout: Option<Duration>,
    partial_since: Option<Instant>,
}

impl<R: AsyncRead + Unpin> FrameReader<R> {
    pub fn new(inner: R) -> FrameReader<R> {
        FrameReader { inner, buf: FrameBuffer::new(), stall_timeout: None, partial_since: None }
    }

    /// Give up with `Truncated` when a started frame is not completed within
    /// `timeout`.
    pub fn with_stall_timeout(mut self, timeout: Duration) -> FrameReader<R> {
        self.stall_timeout = Some(timeout);
        self
    }

    /// See [`FrameBuffer::pending_header`].
    pub fn pending_header(&self) -> Option<RawHeader> {
        self.buf.pending_header()
    }

    pub fn get_ref(&self) -> &R {
        &self.inner
    }

    pub fn into_inner(self) -> R {
        self.inner
    }

    /// The next complete frame. A clean end of stream on a frame boundary is
    /// `StreamClosed`; an end of stream inside a frame is `Truncated`.
    pub async fn next_frame(&mut self) -> Result<Bytes, FrameError> {
        let mut chunk = [0u8; 4096];
        loop {
            if let Some(frame) = self.buf.next_frame()? {
                self.partial_since = if self.buf.pending() > 0 { Some(Instant::now()) } else { None };
                return Ok(frame);
            }
            let read = match (self.stall_timeout, self.partial_since) {
                (Some(limit), Some(since)) => {
                    match tokio::time::timeout_at(since + limit, self.inner.read(&mut chunk)).await {
                        Ok(r) => r?,
                        Err(_) => return Err(self.buf.truncated().into()),
                    }
                }
                _ => self.inner.read(&mut chunk).await?,
            };
            if read == 0 {
                if self.buf.pending() == 0 {
                    return Err(FrameError::StreamClosed);
                }
                return Err(self.buf.truncated().into());
            }
            if self.buf.pending() == 0 {
                self.partial_since = Some(Instant::now());
            }
            self.buf.extend(&chunk[..read]);
        }
    }

    pub async fn next_message(&mut self) -> Result<BfcpMessage, FrameError> {
        let frame = self.next_frame().await?;
        Ok(decode(&frame)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{AttributeValue, Primitive};

    fn hello(tx: u16) -> Vec<u8> {
        BfcpMessage::new(Primitive::Hello, 1, tx, 2).encode().unwrap()
    }

    #[test]
    fn buffer_returns_nothing_until_a_frame_completes() {
        let bytes =
            BfcpMessage::new(Primitive::FloorRequest, 1, 1, 2).with(AttributeValue::FloorId(1)).encode().unwrap();
        let mut buf = FrameBuffer::new();
        buf.extend(&bytes[..5]);
        assert_eq!(buf.next_frame().unwrap(), None);
        buf.extend(&bytes[5..13]);
        assert_eq!(buf.next_frame().unwrap(), None);
        buf.extend(&bytes[13..]);
        assert_eq!(buf.next_frame().unwrap().unwrap().as_ref(), bytes.as_slice());
        assert_eq!(buf.pending(), 0);
    }

    #[tokio::test]
    async fn two_messages_in_one_read() {
        let mut bytes = hello(1);
        bytes.extend(hello(3));
        let mut reader = FrameReader::new(bytes.as_slice());
        assert_eq!(reader.next_message().await.unwrap().header.transaction_id, 1);
        assert_eq!(reader.next_message().await.unwrap().header.transaction_id, 3);
        assert!(matches!(reader.next_message().await, Err(FrameError::StreamClosed)));
    }

    #[tokio::test]
    async fn message_split_across_three_reads() {
        let bytes =
            BfcpMessage::new(Primitive::FloorRequest, 1, 5, 2).with(AttributeValue::FloorId(1)).encode().unwrap();
        let (client, server) = tokio::io::duplex(64);
        let mut reader = FrameReader::new(server);
        let writer = tokio::spawn(async move {
            use tokio::io::AsyncWriteExt;
            let mut client = client;
            for part in [&bytes[..3], &bytes[3..9], &bytes[9..]] {
                client.write_all(part).await.unwrap();
                client.flush().await.unwrap();
                tokio::time::sleep(Duration::from_millis(10)).await;
            }
            client
        });
        let msg = reader.next_message().await.unwrap();
        assert_eq!(msg.header.transaction_id, 5);
        assert_eq!(msg.floor_ids().collect::<Vec<_>>(), vec![1]);
        drop(writer.await.unwrap());
    }

    #[tokio::test]
    async fn end_of_stream_inside_a_frame_is_truncated() {
        let bytes =
            BfcpMessage::new(Primitive::FloorRequest, 1, 5, 2).with(AttributeValue::FloorId(1)).encode().unwrap();
        let mut reader = FrameReader::new(&bytes[..14]);
        assert!(matches!(
            reader.next_message().await,
            Err(FrameError::Decode(DecodeError::Truncated { needed: 16, available: 14 }))
        ));
    }

    #[tokio::test]
    async fn oversized_declaration_fails_without_waiting() {
        let mut header = hello(1);
        header[2] = 0xFF;
        header[3] = 0xFF;
        let (_client, server) = tokio::io::duplex(64);
        let mut reader = FrameReader::new(header.as_slice().chain(server));
        let err = tokio::time::timeout(Duration::from_secs(1), reader.next_frame()).await.unwrap();
        assert!(matches!(err, Err(FrameError::Decode(DecodeError::Oversized { .. }))));
    }

    #[tokio::test]
    async fn stalled_frame_times_out_as_truncated() {
        let mut header = hello(1);
        header[3] = 100;
        let (mut client, server) = tokio::io::duplex(64);
        use tokio::io::AsyncWriteExt;
        client.write_all(&header).await.unwrap();
        client.write_all(&[0; 8]).await.unwrap();
        let mut reader = FrameReader::new(server).with_stall_timeout(Duration::from_millis(50));
        let err = reader.next_frame().await;
        assert!(matches!(err, Err(FrameError::Decode(DecodeError::Truncated { needed: 412, available: 20 }))));
        drop(client);
    }
}
