//! The badge feed transport: newline-delimited reads in, one reply line out
//! per read.

use std::time::Duration;

use tokio::io::{AsyncBufRead, AsyncBufReadExt, AsyncReadExt, AsyncWrite, AsyncWriteExt};
use tokio::net::TcpListener;
use tokio_util::sync::CancellationToken;

use crate::badge::BadgeRead;
use crate::conference::ConferenceHandle;

/// Longest accepted feed line; longer input is answered with an error and the
/// source is dropped.
const MAX_LINE: usize = 512;

/// Processes lines until end of input. Each line gets exactly one reply
/// starting with `OK` or `ERR`.
pub async fn serve_lines<R, W>(mut input: R, mut output: W, conference: ConferenceHandle) -> std::io::Result<()>
where
    R: AsyncBufRead + Unpin,
    W: AsyncWrite + Unpin,
{
    let mut line = String::new();
    loop {
        line.clear();
        let n = (&mut input).take(MAX_LINE as u64 + 1).read_line(&mut line).await?;
        if n == 0 {
            return Ok(());
        }
        if n > MAX_LINE && !line.ends_with('\n') {
            output.write_all(b"ERR line too long\n").await?;
            return Ok(());
        }
        let text = line.trim_end_matches(['\n', '\r']);
        if text.is_empty() {
            continue;
        }
        let reply = match BadgeRead::parse(text) {
            Ok(read) => match conference.badge(read.clone()).await {
                Ok(outcome) => {
                    tracing::info!(tag = %read.tag, reader = %read.reader, outcome = %outcome, "badge read");
                    outcome.to_string()
                }
                Err(e) => format!("ERR {}", e.message),
            },
            Err(e) => format!("ERR malformed {e}"),
        };
        output.write_all(reply.as_bytes()).await?;
        output.write_all(b"\n").await?;
        output.flush().await?;
    }
}

pub async fn serve(listener: TcpListener, conference: ConferenceHandle, shutdown: CancellationToken) {
    loop {
        tokio::select! {
            _ = shutdown.cancelled() => break,
            accepted = listener.accept() => match accepted {
                Ok((stream, peer)) => {
                    let conference = conference.clone();
                    let shutdown = shutdown.clone();
                    tokio::spawn(async move {
                        let (read, write) = stream.into_split();
                        tokio::select! {
                            _ = shutdown.cancelled() => {}
                            r = serve_lines(tokio::io::BufReader::new(read), write, conference) => {
                                if let Err(e) = r {
                                    tracing::debug!(%peer, error = %e, "badge feed connection failed");
                                }
                            }
                        }
                    });
                }
                Err(e) => {
                    tracing::warn!(error = %e, "badge feed accept failed");
                    tokio::time::sleep(Duration::from_millis(50)).await;
                }
            }
        }
    }
}
