//! Floor control daemon: protocol sessions, the per-conference actor, the
//! HTTP chair/participant gateway and the badge reader feed.

pub mod badge;
pub mod bfcp;
pub mod conference;
pub mod daemon;
pub mod feed;
pub mod http;
pub mod session;

pub const DEFAULT_BFCP_PORT: u16 = 8124;

pub use conference::{ConferenceHandle, ConferenceSettings, Metrics, Role};
pub use daemon::{Daemon, DaemonConfig, StartError};
