#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::time::Duration;

use floorctl_client::{BfcpClient, GatewayClient, Target};
use floorctl_core::FloorId;
use floorctl_server::{Daemon, DaemonConfig};

pub const CONF: u32 = 1;
pub const TOKEN: &str = "chair-secret";
pub const SHORT: Duration = Duration::from_millis(300);

pub fn bundled(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

/// A daemon on loopback with the bundled badge directory loaded.
pub async fn start(edit: impl FnOnce(&mut DaemonConfig)) -> Daemon {
    let mut config = DaemonConfig::local(TOKEN);
    config.badge_directory = Some(bundled("badges.csv"));
    config.floors = vec![(FloorId(1), "audio".into()), (FloorId(2), "video".into())];
    edit(&mut config);
    Daemon::start(config).await.expect("daemon starts")
}

pub fn target(d: &Daemon) -> Target {
    Target {
        bfcp_addr: d.bfcp_addr.to_string(),
        http_base: format!("http://{}", d.http_addr),
        badge_addr: d.badge_addr.map(|a| a.to_string()),
        conference_id: CONF,
        chair_token: TOKEN.into(),
    }
}

pub fn chair(d: &Daemon) -> GatewayClient {
    GatewayClient::new(&format!("http://{}", d.http_addr), CONF).with_chair_token(TOKEN)
}

pub async fn participant(d: &Daemon, user: u16, name: &str) -> BfcpClient {
    let c = BfcpClient::connect(d.bfcp_addr, CONF, user).await.expect("connect");
    c.hello(Some(name)).await.expect("hello");
    c
}
