use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;
use std::time::Duration;

use clap::Parser;
use floorctl_core::{FloorId, FloorPolicy};
use floorctl_server::session::SessionOptions;
use floorctl_server::{feed, Daemon, DaemonConfig, DEFAULT_BFCP_PORT};
use tracing_subscriber::EnvFilter;

/// Floor control server.
#[derive(Debug, Parser)]
#[command(name = "floord", version)]
struct Args {
    /// Address to listen on.
    #[arg(long, default_value = "0.0.0.0")]
    bind: IpAddr,
    #[arg(long, default_value_t = DEFAULT_BFCP_PORT)]
    bfcp_port: u16,
    #[arg(long, default_value_t = 8080)]
    http_port: u16,
    /// TCP port for the badge reader feed. The feed is also read from stdin.
    #[arg(long)]
    badge_port: Option<u16>,
    /// Do not read badge lines from standard input.
    #[arg(long)]
    no_badge_stdin: bool,
    #[arg(long, default_value_t = 1)]
    conference_id: u32,
    /// Floor as `id:name`; repeatable. Defaults to `1:audio`.
    #[arg(long = "floor", value_parser = parse_floor)]
    floors: Vec<(FloorId, String)>,
    /// Most simultaneous holders per floor.
    #[arg(long, default_value_t = 1)]
    max_granted: u32,
    /// Grant requests without waiting for the chair.
    #[arg(long)]
    auto_grant: bool,
    /// Shared secret identifying the chair (HTTP bearer token, or `chair:<token>` in Hello).
    #[arg(long, env = "FLOORD_CHAIR_TOKEN")]
    chair_token: String,
    /// How long finished requests stay visible in queue snapshots.
    #[arg(long, default_value_t = 30)]
    terminal_retention_secs: u64,
    /// CSV file of `tag,user_id,display_name` rows and `reader,<id>,<floor>` rows. Reloaded on SIGHUP.
    #[arg(long)]
    badge_directory: Option<PathBuf>,
    /// Extra reader mapping as `reader:floor`; repeatable.
    #[arg(long = "badge-reader", value_parser = parse_reader)]
    badge_readers: Vec<(String, FloorId)>,
    #[arg(long, default_value_t = 2000)]
    debounce_ms: u64,
    /// Silence before a session is probed with Hello.
    #[arg(long, default_value_t = 60)]
    heartbeat_idle_secs: u64,
    /// Time a probed session has to answer.
    #[arg(long, default_value_t = 10)]
    heartbeat_timeout_secs: u64,
    /// Directory served at `/` (the built console).
    #[arg(long)]
    static_dir: Option<PathBuf>,
    /// Log filter, e.g. `info` or `floorctl=debug`.
    #[arg(long, default_value = "info")]
    log_level: String,
}

fn parse_floor(s: &str) -> Result<(FloorId, String), String> {
    let (id, name) = s.split_once(':').ok_or("expected id:name")?;
    let id: u16 = id.parse().map_err(|_| format!("bad floor id {id:?}"))?;
    if name.is_empty() {
        return Err("empty floor name".into());
    }
    Ok((FloorId(id), name.to_owned()))
}

fn parse_reader(s: &str) -> Result<(String, FloorId), String> {
    let (reader, floor) = s.rsplit_once(':').ok_or("expected reader:floor")?;
    let floor: u16 = floor.parse().map_err(|_| format!("bad floor id {floor:?}"))?;
    if reader.is_empty() {
        return Err("empty reader id".into());
    }
    Ok((reader.to_owned(), FloorId(floor)))
}

#[tokio::main]
async fn main() -> std::process::ExitCode {
    let args = Args::parse();
    let filter = EnvFilter::try_new(&args.log_level).unwrap_or_else(|_| EnvFilter::new("info"));
    tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).init();

    let policy = FloorPolicy { max_granted: args.max_granted, auto_grant: args.auto_grant };
    if !policy.is_valid() {
        eprintln!("floord: --max-granted must be at least 1");
        return std::process::ExitCode::from(2);
    }
    let mut config = DaemonConfig::default_with_token(args.chair_token);
    config.bfcp_addr = SocketAddr::new(args.bind, args.bfcp_port);
    config.http_addr = SocketAddr::new(args.bind, args.http_port);
    config.badge_addr = args.badge_port.map(|p| SocketAddr::new(args.bind, p));
    config.conference_id = args.conference_id;
    if !args.floors.is_empty() {
        config.floors = args.floors;
    }
    config.policy = policy;
    config.terminal_retention = Duration::from_secs(args.terminal_retention_secs);
    config.badge_directory = args.badge_directory;
    config.badge_readers = args.badge_readers;
    config.debounce = Duration::from_millis(args.debounce_ms);
    config.session = SessionOptions {
        idle_probe: Duration::from_secs(args.heartbeat_idle_secs),
        probe_timeout: Duration::from_secs(args.heartbeat_timeout_secs),
        ..SessionOptions::default()
    };
    config.static_dir = args.static_dir;

    let daemon = match Daemon::start(config).await {
        Ok(d) => d,
        Err(e) => {
            eprintln!("floord: {e}");
            return std::process::ExitCode::FAILURE;
        }
    };
    if !args.no_badge_stdin {
        let conference = daemon.conference().clone();
        tokio::spawn(async move {
            let stdin = tokio::io::BufReader::new(tokio::io::stdin());
            if let Err(e) = feed::serve_lines(stdin, tokio::io::stdout(), conference).await {
                tracing::warn!(error = %e, "badge input on stdin failed");
            }
        });
    }

    let mut hangup = tokio::signal::unix::signal(tokio::signal::unix::SignalKind::hangup()).expect("signal handler");
    let mut terminate =
        tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()).expect("signal handler");
    loop {
        tokio::select! {
            _ = tokio::signal::ctrl_c() => break,
            _ = terminate.recv() => break,
            _ = hangup.recv() => match daemon.reload_directory() {
                Ok(()) => tracing::info!("badge directory reloaded"),
                Err(e) => tracing::error!(error = %e, "badge directory reload failed; keeping the old one"),
            },
        }
    }
    tracing::info!("shutting down");
    daemon.shutdown().await;
    std::process::ExitCode::SUCCESS
}
