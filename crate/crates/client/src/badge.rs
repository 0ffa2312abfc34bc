//! Writes badge reads into a daemon's badge feed.

use std::time::Duration;

use tokio::io::{AsyncBufReadExt, AsyncWriteExt, BufReader, Lines};
use tokio::net::tcp::{OwnedReadHalf, OwnedWriteHalf};
use tokio::net::{TcpStream, ToSocketAddrs};

use crate::error::ClientError;

/// The feed line for one read.
pub fn feed_line(tag: &str, reader: &str) -> String {
    format!("TAG {tag} READER {reader}")
}

pub struct BadgeInjector {
    lines: Lines<BufReader<OwnedReadHalf>>,
    write: OwnedWriteHalf,
    timeout: Duration,
}

impl BadgeInjector {
    pub async fn connect(addr: impl ToSocketAddrs) -> Result<BadgeInjector, ClientError> {
        let (read, write) = TcpStream::connect(addr).await?.into_split();
        Ok(BadgeInjector { lines: BufReader::new(read).lines(), write, timeout: crate::DEFAULT_TIMEOUT })
    }

    /// Sends one raw line and returns the daemon's reply line.
    pub async fn send_line(&mut self, line: &str) -> Result<String, ClientError> {
        self.write.write_all(line.trim_end().as_bytes()).await?;
        self.write.write_all(b"\n").await?;
        match tokio::time::timeout(self.timeout, self.lines.next_line()).await {
            Ok(Ok(Some(reply))) => Ok(reply),
            Ok(Ok(None)) => Err(ClientError::Closed),
            Ok(Err(e)) => Err(e.into()),
            Err(_) => Err(ClientError::Timeout { what: "badge feed reply".into(), after: self.timeout }),
        }
    }

    pub async fn read(&mut self, tag: &str, reader: &str) -> Result<String, ClientError> {
        self.send_line(&feed_line(tag, reader)).await
    }
}
