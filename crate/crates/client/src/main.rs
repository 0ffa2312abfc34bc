use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use floorctl_client::http::FloorInfo;
use floorctl_client::{
    BadgeInjector, BfcpClient, ChairCommand, ChairVerb, ClientError, GatewayClient, RequestUpdate, Runner, Scenario,
    Target, DEFAULT_BFCP_PORT,
};
use floorctl_core::{FloorId, FloorPolicy, FloorRequestRecord, Priority, RequestId};
use floorctl_wire::BfcpMessage;
use tokio::io::{AsyncBufReadExt, BufReader};

#[derive(Parser)]
#[command(name = "floorctl", version, about = "Talk to a floor control daemon")]
struct Cli {
    /// Protocol endpoint.
    #[arg(long, global = true, default_value_t = format!("127.0.0.1:{DEFAULT_BFCP_PORT}"))]
    server: String,
    /// HTTP gateway root.
    #[arg(long, global = true, default_value = "http://127.0.0.1:8080")]
    http: String,
    /// Badge feed endpoint.
    #[arg(long, global = true, default_value = "127.0.0.1:7070")]
    badge_addr: String,
    #[arg(long, global = true, default_value_t = 1)]
    conference: u32,
    #[arg(long, global = true, default_value_t = 1)]
    user: u16,
    /// Display name sent in Hello.
    #[arg(long, global = true)]
    name: Option<String>,
    /// Chair token.
    #[arg(long, global = true, env = "FLOORD_CHAIR_TOKEN", hide_env_values = true)]
    token: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Say Hello, then print notifications until interrupted.
    Connect,
    /// Request a floor and follow it until it ends. Interrupting releases it.
    Request {
        #[arg(long, default_value_t = 1)]
        floor: u16,
    },
    /// Release or cancel a request.
    Release {
        #[arg(long)]
        request_id: u16,
    },
    /// Print every notification the session receives. With --token the
    /// session joins as chair and sees every request.
    Watch,
    /// Chair actions over the HTTP gateway.
    Chair(ChairArgs),
    /// Send badge reads: one from the arguments, or `TAG <hex> READER <id>`
    /// lines from stdin.
    Badge {
        #[arg(long, requires = "reader")]
        tag: Option<String>,
        #[arg(long, requires = "tag")]
        reader: Option<String>,
    },
    /// Scripted multi-actor scenarios.
    Scenario {
        #[command(subcommand)]
        command: ScenarioCommand,
    },
}

#[derive(Subcommand)]
enum ScenarioCommand {
    /// Run a scenario file and report each step.
    Run { file: std::path::PathBuf },
    /// Parse a scenario file without running it.
    Check { file: std::path::PathBuf },
}

#[derive(Args)]
struct ChairArgs {
    #[command(subcommand)]
    command: ChairCommandArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum PriorityArg {
    Normal,
    Business,
}

#[derive(Clone, Copy, ValueEnum)]
enum Toggle {
    On,
    Off,
}

#[derive(Subcommand)]
enum ChairCommandArg {
    Accept {
        request_id: u16,
    },
    Deny {
        request_id: u16,
    },
    Revoke {
        request_id: u16,
    },
    RevokeAll {
        floor: u16,
    },
    Priority {
        request_id: u16,
        priority: PriorityArg,
    },
    Policy {
        floor: u16,
        #[arg(long)]
        max: Option<u32>,
        #[arg(long)]
        auto: Option<Toggle>,
    },
    /// Print a floor's queue.
    Queue {
        floor: u16,
    },
    /// List floors and their policies.
    Floors,
}

fn print_update(u: &RequestUpdate) {
    let seq = u.seq.map(|s| format!(" seq {s}")).unwrap_or_default();
    if u.position > 0 {
        println!("request {} {} position {}{seq}", u.request_id, u.state, u.position);
    } else {
        println!("request {} {}{seq}", u.request_id, u.state);
    }
}

fn print_message(msg: &BfcpMessage) {
    match RequestUpdate::from_message(msg) {
        Some(u) => print_update(&u),
        None => println!("{}", msg.primitive()),
    }
}

fn print_records(records: &[FloorRequestRecord]) {
    if records.is_empty() {
        println!("(empty)");
    }
    for r in records {
        let pos = if r.queue_position > 0 { r.queue_position.to_string() } else { "-".into() };
        println!(
            "{:>5} {:>3} {:<10} {:<8} {:<9} {:<6} {}",
            r.request_id, pos, r.state, r.priority, r.origin, r.user_id, r.display_name
        );
    }
}

fn print_floors(floors: &[FloorInfo]) {
    for f in floors {
        println!(
            "{:>3} {:<12} max_granted={} auto_grant={}",
            f.floor_id, f.name, f.policy.max_granted, f.policy.auto_grant
        );
    }
}

async fn session(cli: &Cli) -> Result<BfcpClient, ClientError> {
    let client = BfcpClient::connect(cli.server.as_str(), cli.conference, cli.user).await?;
    match &cli.token {
        Some(token) => client.hello_chair(token, cli.name.as_deref()).await?,
        None => client.hello(cli.name.as_deref()).await?,
    }
    Ok(client)
}

/// Prints notifications until the session closes or ctrl-c.
async fn follow(client: &BfcpClient) -> Result<(), ClientError> {
    loop {
        tokio::select! {
            _ = tokio::signal::ctrl_c() => return Ok(()),
            next = client.next_notification(std::time::Duration::from_secs(3600)) => match next? {
                Some(msg) => print_message(&msg),
                None if client.is_closed() => return Err(ClientError::Closed),
                None => {}
            },
        }
    }
}

fn gateway(cli: &Cli) -> GatewayClient {
    let g = GatewayClient::new(&cli.http, cli.conference);
    match &cli.token {
        Some(t) => g.with_chair_token(t.clone()),
        None => g,
    }
}

async fn run(cli: Cli) -> Result<bool, Box<dyn std::error::Error>> {
    match &cli.command {
        Command::Connect | Command::Watch => {
            let client = session(&cli).await?;
            println!("connected as user {} to conference {}", cli.user, cli.conference);
            follow(&client).await?;
        }
        Command::Request { floor } => {
            let client = session(&cli).await?;
            let first = client.request_floor(*floor).await?;
            print_update(&first);
            let mut state = first.state;
            while !state.is_terminal() {
                tokio::select! {
                    _ = tokio::signal::ctrl_c() => {
                        print_update(&client.release_floor(first.request_id).await?);
                        return Ok(true);
                    }
                    next = client.next_notification(std::time::Duration::from_secs(3600)) => match next? {
                        Some(msg) => {
                            print_message(&msg);
                            if let Some(u) = RequestUpdate::from_message(&msg).filter(|u| u.request_id == first.request_id) {
                                state = u.state;
                            }
                        }
                        None if client.is_closed() => return Err(ClientError::Closed.into()),
                        None => {}
                    },
                }
            }
        }
        Command::Release { request_id } => {
            let client = session(&cli).await?;
            print_update(&client.release_floor(*request_id).await?);
        }
        Command::Chair(args) => {
            let g = gateway(&cli);
            let cmd = match &args.command {
                ChairCommandArg::Queue { floor } => {
                    print_records(&g.queue(*floor).await?);
                    return Ok(true);
                }
                ChairCommandArg::Floors => {
                    print_floors(&g.floors().await?);
                    return Ok(true);
                }
                ChairCommandArg::Accept { request_id } => {
                    ChairCommand::on_request(ChairVerb::Accept, RequestId(*request_id))
                }
                ChairCommandArg::Deny { request_id } => {
                    ChairCommand::on_request(ChairVerb::Deny, RequestId(*request_id))
                }
                ChairCommandArg::Revoke { request_id } => {
                    ChairCommand::on_request(ChairVerb::Revoke, RequestId(*request_id))
                }
                ChairCommandArg::RevokeAll { floor } => ChairCommand::revoke_all(FloorId(*floor)),
                ChairCommandArg::Priority { request_id, priority } => ChairCommand::set_priority(
                    RequestId(*request_id),
                    match priority {
                        PriorityArg::Normal => Priority::Normal,
                        PriorityArg::Business => Priority::BusinessClass,
                    },
                ),
                ChairCommandArg::Policy { floor, max, auto } => {
                    let current = g
                        .floors()
                        .await?
                        .into_iter()
                        .find(|f| f.floor_id.0 == *floor)
                        .map(|f| f.policy)
                        .unwrap_or_default();
                    let policy = FloorPolicy {
                        max_granted: max.unwrap_or(current.max_granted),
                        auto_grant: auto.map(|a| matches!(a, Toggle::On)).unwrap_or(current.auto_grant),
                    };
                    ChairCommand::set_policy(FloorId(*floor), policy)
                }
            };
            let result = g.command(&cmd).await?;
            print_records(&result.records);
            if let Some(p) = result.policy {
                println!("policy max_granted={} auto_grant={}", p.max_granted, p.auto_grant);
            }
        }
        Command::Badge { tag, reader } => {
            let mut feed = BadgeInjector::connect(cli.badge_addr.as_str()).await?;
            let mut ok = true;
            if let (Some(tag), Some(reader)) = (tag, reader) {
                let reply = feed.read(tag, reader).await?;
                ok = reply.starts_with("OK");
                println!("{reply}");
            } else {
                let mut lines = BufReader::new(tokio::io::stdin()).lines();
                while let Some(line) = lines.next_line().await? {
                    if line.trim().is_empty() {
                        continue;
                    }
                    let reply = feed.send_line(&line).await?;
                    ok &= reply.starts_with("OK");
                    println!("{reply}");
                }
            }
            return Ok(ok);
        }
        Command::Scenario { command } => match command {
            ScenarioCommand::Check { file } => {
                let s = Scenario::parse(&std::fs::read_to_string(file)?)?;
                println!("{} steps", s.steps.len());
            }
            ScenarioCommand::Run { file } => {
                let s = Scenario::parse(&std::fs::read_to_string(file)?)?;
                let mut runner = Runner::new(Target {
                    bfcp_addr: cli.server.clone(),
                    http_base: cli.http.clone(),
                    badge_addr: Some(cli.badge_addr.clone()),
                    conference_id: cli.conference,
                    chair_token: cli.token.clone().unwrap_or_default(),
                });
                let report = runner.run(&s).await;
                println!("{report}");
                return Ok(report.passed());
            }
        },
    }
    Ok(true)
}

#[tokio::main]
async fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()))
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()).await {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("floorctl: {e}");
            ExitCode::FAILURE
        }
    }
}
