//! Clients for the floor control daemon: a protocol session with
//! transaction matching, the HTTP gateway, the badge feed, and a scenario
//! runner that drives all three.

pub mod badge;
pub mod error;
pub mod http;
pub mod scenario;
pub mod session;
pub mod transactions;

pub use badge::BadgeInjector;
pub use error::ClientError;
pub use http::{ChairCommand, ChairVerb, GatewayClient, WebActionKind};
pub use scenario::{Report, Runner, Scenario, ScenarioError, Target};
pub use session::{BfcpClient, RequestUpdate, DEFAULT_TIMEOUT};

/// The daemon's default protocol port.
pub const DEFAULT_BFCP_PORT: u16 = 8124;
