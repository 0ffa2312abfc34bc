//! Wiring: one conference, its protocol listener, HTTP gateway and badge feed.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use floorctl_core::{Clock, FloorId, FloorPolicy, SystemClock};
use tokio::net::TcpListener;
use tokio::task::JoinSet;
use tokio_util::sync::CancellationToken;

use crate::badge::{BadgeDirectory, LoadError, SharedDirectory, DEFAULT_DEBOUNCE};
use crate::conference::{ConferenceHandle, ConferenceSettings};
use crate::http::{self, HttpOptions, SSE_KEEPALIVE};
use crate::session::{self, SessionOptions};
use crate::{feed, DEFAULT_BFCP_PORT};

#[derive(Debug, Clone)]
pub struct DaemonConfig {
    pub bfcp_addr: SocketAddr,
    pub http_addr: SocketAddr,
    /// Badge feed listener; none disables the TCP feed.
    pub badge_addr: Option<SocketAddr>,
    pub conference_id: u32,
    pub floors: Vec<(FloorId, String)>,
    pub policy: FloorPolicy,
    pub chair_token: String,
    pub terminal_retention: Duration,
    pub badge_directory: Option<PathBuf>,
    /// Reader-to-floor mappings in addition to those in the directory file.
    pub badge_readers: Vec<(String, FloorId)>,
    pub debounce: Duration,
    pub session: SessionOptions,
    pub sse_keepalive: Duration,
    pub static_dir: Option<PathBuf>,
    pub clock: Arc<dyn Clock>,
}

impl DaemonConfig {
    /// Everything on loopback with ephemeral ports.
    pub fn local(chair_token: impl Into<String>) -> DaemonConfig {
        let any = SocketAddr::from(([127, 0, 0, 1], 0));
        DaemonConfig {
            bfcp_addr: any,
            http_addr: any,
            badge_addr: Some(any),
            ..DaemonConfig::default_with_token(chair_token)
        }
    }

    pub fn default_with_token(chair_token: impl Into<String>) -> DaemonConfig {
        DaemonConfig {
            bfcp_addr: SocketAddr::from(([0, 0, 0, 0], DEFAULT_BFCP_PORT)),
            http_addr: SocketAddr::from(([0, 0, 0, 0], 8080)),
            badge_addr: None,
            conference_id: 1,
            floors: vec![(FloorId(1), "audio".into())],
            policy: FloorPolicy::default(),
            chair_token: chair_token.into(),
            terminal_retention: floorctl_core::DEFAULT_TERMINAL_RETENTION,
            badge_directory: None,
            badge_readers: Vec::new(),
            debounce: DEFAULT_DEBOUNCE,
            session: SessionOptions::default(),
            sse_keepalive: SSE_KEEPALIVE,
            static_dir: None,
            clock: Arc::new(SystemClock),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StartError {
    #[error(transparent)]
    Directory(#[from] LoadError),
    #[error("reader {reader} maps to unknown floor {floor}")]
    UnknownReaderFloor { reader: String, floor: FloorId },
    #[error("bad conference setup: {0}")]
    Conference(#[from] floorctl_core::FloorError),
    #[error("binding {what} on {addr}: {source}")]
    Bind { what: &'static str, addr: SocketAddr, source: std::io::Error },
}

/// A running daemon. Dropping it does not stop it; call [`Daemon::shutdown`].
#[derive(Debug)]
pub struct Daemon {
    pub bfcp_addr: SocketAddr,
    pub http_addr: SocketAddr,
    pub badge_addr: Option<SocketAddr>,
    conference: ConferenceHandle,
    directory: SharedDirectory,
    directory_path: Option<PathBuf>,
    extra_readers: Vec<(String, FloorId)>,
    floors: Vec<FloorId>,
    shutdown: CancellationToken,
    tasks: JoinSet<()>,
}

fn build_directory(
    path: Option<&PathBuf>,
    readers: &[(String, FloorId)],
    floors: &[FloorId],
) -> Result<BadgeDirectory, StartError> {
    let mut dir = match path {
        Some(p) => BadgeDirectory::load(p)?,
        None => BadgeDirectory::default(),
    };
    for (reader, floor) in readers {
        dir.add_reader(reader.clone(), *floor);
    }
    if let Some((reader, floor)) = dir.readers().find(|(_, f)| !floors.contains(f)) {
        return Err(StartError::UnknownReaderFloor { reader: reader.to_owned(), floor });
    }
    Ok(dir)
}

async fn bind(what: &'static str, addr: SocketAddr) -> Result<TcpListener, StartError> {
    TcpListener::bind(addr).await.map_err(|source| StartError::Bind { what, addr, source })
}

impl Daemon {
    pub async fn start(config: DaemonConfig) -> Result<Daemon, StartError> {
        let floors: Vec<FloorId> = config.floors.iter().map(|(f, _)| *f).collect();
        let directory =
            SharedDirectory::new(build_directory(config.badge_directory.as_ref(), &config.badge_readers, &floors)?);
        let settings = ConferenceSettings {
            conference_id: config.conference_id,
            floors: config.floors.clone(),
            policy: config.policy,
            chair_token: config.chair_token.clone(),
            terminal_retention: config.terminal_retention,
            debounce: config.debounce,
            clock: config.clock.clone(),
        };
        let conference = ConferenceHandle::spawn(settings, directory.clone())?;

        let bfcp = bind("protocol listener", config.bfcp_addr).await?;
        let web = bind("HTTP listener", config.http_addr).await?;
        let badge = match config.badge_addr {
            Some(addr) => Some(bind("badge feed", addr).await?),
            None => None,
        };
        let bfcp_addr = bfcp.local_addr().expect("bound socket has an address");
        let http_addr = web.local_addr().expect("bound socket has an address");
        let badge_addr = badge.as_ref().map(|l| l.local_addr().expect("bound socket has an address"));

        let shutdown = CancellationToken::new();
        let mut tasks = JoinSet::new();
        tasks.spawn(session::serve(bfcp, conference.clone(), config.session, shutdown.clone()));
        let app = http::router(
            conference.clone(),
            HttpOptions {
                chair_token: config.chair_token.clone(),
                static_dir: config.static_dir.clone(),
                keepalive: config.sse_keepalive,
                shutdown: shutdown.clone(),
            },
        );
        let stop = shutdown.clone();
        tasks.spawn(async move {
            if let Err(e) = axum::serve(web, app).with_graceful_shutdown(stop.cancelled_owned()).await {
                tracing::error!(error = %e, "HTTP server failed");
            }
        });
        if let Some(listener) = badge {
            tasks.spawn(feed::serve(listener, conference.clone(), shutdown.clone()));
        }
        tracing::info!(%bfcp_addr, %http_addr, badge = ?badge_addr, conf = config.conference_id, "daemon started");
        Ok(Daemon {
            bfcp_addr,
            http_addr,
            badge_addr,
            conference,
            directory,
            directory_path: config.badge_directory,
            extra_readers: config.badge_readers,
            floors,
            shutdown,
            tasks,
        })
    }

    pub fn conference(&self) -> &ConferenceHandle {
        &self.conference
    }

    pub fn directory(&self) -> &SharedDirectory {
        &self.directory
    }

    /// Re-reads the badge directory file. On error the old directory stays.
    pub fn reload_directory(&self) -> Result<(), StartError> {
        let dir = build_directory(self.directory_path.as_ref(), &self.extra_readers, &self.floors)?;
        self.directory.replace(dir);
        Ok(())
    }

    pub fn shutdown_token(&self) -> CancellationToken {
        self.shutdown.clone()
    }

    pub async fn shutdown(mut self) {
        self.shutdown.cancel();
        while self.tasks.join_next().await.is_some() {}
    }
}
