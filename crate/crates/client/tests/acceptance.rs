//! Acceptance suite. Prints one PASS or FAIL line per criterion and exits
//! non-zero if any fail.

mod common;

use std::collections::BTreeMap;
use std::future::Future;
use std::panic::AssertUnwindSafe;
use std::pin::Pin;
use std::time::{Duration, Instant};

use common::*;
use eventsource_stream::{Event, Eventsource};
use floorctl_client::session::message_seq;
use floorctl_client::{ChairCommand, ChairVerb, RequestUpdate, Runner, Scenario};
use floorctl_core::reference::{check_exhaustive, check_grant_cap, ExhaustiveParams};
use floorctl_core::{FloorId, FloorPolicy, RequestId, RequestState};
use floorctl_server::Daemon;
use floorctl_wire::{decode, encode, strategy, FrameBuffer, Primitive};
use futures::{FutureExt, Stream, StreamExt};
use proptest::strategy::{Strategy, ValueTree};
use proptest::test_runner::TestRunner;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde_json::Value;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn fail<E: std::fmt::Display>(what: &'static str) -> impl Fn(E) -> String {
    move |e| format!("{what}: {e}")
}

// Event stream

type Events = Pin<Box<dyn Stream<Item = Result<Event, eventsource_stream::EventStreamError<reqwest::Error>>> + Send>>;

async fn open_stream(d: &Daemon) -> Result<Events, String> {
    let r = reqwest::Client::new()
        .get(format!("http://{}/api/conf/{CONF}/events", d.http_addr))
        .bearer_auth(TOKEN)
        .send()
        .await
        .map_err(fail("opening the event stream"))?;
    ensure!(r.status() == 200, "event stream answered {}", r.status());
    Ok(Box::pin(r.bytes_stream().eventsource()))
}

/// Stream events until it has been quiet for `quiet`.
async fn drain(events: &mut Events, quiet: Duration) -> Vec<(String, Value)> {
    let mut out = Vec::new();
    while let Ok(Some(Ok(e))) = tokio::time::timeout(quiet, events.next()).await {
        if let Ok(v) = serde_json::from_str(&e.data) {
            out.push((e.event, v));
        }
    }
    out
}

// Criteria

fn golden() -> Result<Scenario, String> {
    let text = std::fs::read_to_string(bundled("ietf-fig2-4.scenario")).map_err(fail("reading the scenario"))?;
    Scenario::parse(&text).map_err(fail("parsing the scenario"))
}

async fn golden_scenario() -> Outcome {
    let d = start(|_| {}).await;
    let started = Instant::now();
    let mut runner = Runner::new(target(&d));
    let report = runner.run(&golden()?).await;
    let elapsed = started.elapsed();
    ensure!(report.passed(), "{report}");
    let end = runner.gateway().queue(1).await.map_err(fail("final queue"))?;
    let got: Vec<_> = end.iter().map(|r| (r.display_name.clone(), r.state, r.queue_position)).collect();
    let want = vec![
        ("spromano".to_owned(), RequestState::Revoked, 0),
        ("User2".to_owned(), RequestState::Granted, 0),
        ("User1".to_owned(), RequestState::Pending, 1),
    ];
    ensure!(got == want, "final queue {got:?}");
    ensure!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
    drop(runner);
    d.shutdown().await;
    Ok(format!("{} steps, User1=PENDING@1 User2=GRANTED spromano=REVOKED, {elapsed:.2?}", report.steps.len()))
}

async fn single_grant_narrative() -> Outcome {
    let d = start(|c| c.policy = FloorPolicy::new(1)).await;
    let chair = chair(&d);
    let mut sessions = Vec::new();
    let mut ids = Vec::new();
    for (user, name) in [(10, "a"), (11, "b"), (12, "c")] {
        let c = participant(&d, user, name).await;
        let u = c.request_floor(1).await.map_err(fail("request"))?;
        ensure!(u.state == RequestState::Pending, "{name} starts {}", u.state);
        ids.push(u.request_id);
        sessions.push(c);
    }
    for id in &ids {
        chair.command(&ChairCommand::on_request(ChairVerb::Accept, RequestId(*id))).await.map_err(fail("accept"))?;
    }
    let states = |q: &[floorctl_core::FloorRequestRecord]| -> Vec<RequestState> {
        ids.iter()
            .map(|id| q.iter().find(|r| r.request_id.0 == *id).map_or(RequestState::Cancelled, |r| r.state))
            .collect()
    };
    let after_accepts = states(&chair.queue(1).await.map_err(fail("queue"))?);
    use RequestState::*;
    ensure!(after_accepts == [Granted, Accepted, Accepted], "after three accepts: {after_accepts:?}");

    let released = sessions[0].release_floor(ids[0]).await.map_err(fail("release"))?;
    ensure!(released.state == Released, "release answered {}", released.state);
    sessions[1].await_status(ids[1], Granted, Duration::from_secs(5)).await.map_err(fail("promotion notice"))?;
    let after_release = states(&chair.queue(1).await.map_err(fail("queue"))?);
    ensure!(after_release == [Released, Granted, Accepted], "after release: {after_release:?}");
    d.shutdown().await;
    Ok("GRANTED ACCEPTED ACCEPTED, release promotes the first accepted".into())
}

fn codec_round_trip() -> Outcome {
    let mut runner = TestRunner::deterministic();
    let strategy = strategy::message();
    for i in 0..10_000 {
        let m = strategy.new_tree(&mut runner).map_err(fail("generating"))?.current();
        let bytes = encode(&m).map_err(|e| format!("message {i} does not encode: {e}: {m:?}"))?;
        let back = decode(&bytes).map_err(|e| format!("message {i} does not decode: {e}: {m:?}"))?;
        ensure!(back == m, "message {i} changed: {m:?} became {back:?}");
    }

    let corpus: Vec<Vec<u8>> = (0..500)
        .map(|_| strategy.new_tree(&mut runner).map(|t| encode(&t.current()).unwrap_or_default()))
        .collect::<Result<_, _>>()
        .map_err(fail("generating seeds"))?;
    let mut rng = StdRng::seed_from_u64(0xF022);
    let budget = Duration::from_secs(3600);
    let started = Instant::now();
    let previous_hook = std::panic::take_hook();
    std::panic::set_hook(Box::new(|_| {}));
    let mut crashes = 0u64;
    let mut inputs = 0u64;
    while inputs < 1_000_000 && started.elapsed() < budget {
        let input: Vec<u8> = if inputs.is_multiple_of(2) {
            let mut out = corpus[rng.random_range(0..corpus.len())].clone();
            for _ in 0..rng.random_range(1..4) {
                match rng.random_range(0..4) {
                    0 if !out.is_empty() => {
                        let i = rng.random_range(0..out.len());
                        out[i] ^= 1 << rng.random_range(0..8);
                    }
                    1 if !out.is_empty() => {
                        let i = rng.random_range(0..out.len());
                        out[i] = rng.random();
                    }
                    2 => out.truncate(rng.random_range(0..=out.len())),
                    _ => out.extend((0..rng.random_range(1..8)).map(|_| rng.random::<u8>())),
                }
            }
            out
        } else {
            (0..rng.random_range(0..96)).map(|_| rng.random::<u8>()).collect()
        };
        let run = std::panic::catch_unwind(|| {
            let _ = decode(&input);
            let mut frames = FrameBuffer::new();
            frames.extend(&input);
            while let Ok(Some(frame)) = frames.next_frame() {
                let _ = decode(&frame);
            }
        });
        if run.is_err() {
            crashes += 1;
        }
        inputs += 1;
    }
    std::panic::set_hook(previous_hook);
    ensure!(crashes == 0, "{crashes} of {inputs} fuzz inputs panicked");
    Ok(format!("10000 round trips, {inputs} fuzz inputs in {:.1?}, 0 crashes", started.elapsed()))
}

fn oracle_equivalence() -> Outcome {
    let started = Instant::now();
    let mut sequences = 0;
    let mut operations = 0;
    for params in [
        ExhaustiveParams { max_len: 6, users: 3, floors: 1, max_granted: vec![1, 2] },
        ExhaustiveParams { max_len: 4, users: 2, floors: 2, max_granted: vec![1, 2] },
    ] {
        let r = check_exhaustive(&params).map_err(|m| m.to_string())?;
        sequences += r.sequences;
        operations += r.operations;
    }
    Ok(format!("{sequences} sequences, {operations} operations compared in {:.1?}", started.elapsed()))
}

fn grant_cap() -> Outcome {
    let r = check_grant_cap(100_000, 40, 0xCA9).map_err(|m| m.to_string())?;
    ensure!(r.sequences == 100_000, "ran {} sequences", r.sequences);
    ensure!(r.grants > 0 && r.peak_utilisation == 100, "caps never reached: {r:?}");
    Ok(format!("{} sequences, {} operations, {} grants, never above the cap", r.sequences, r.operations, r.grants))
}

async fn request_and_cancel() -> Outcome {
    let d = start(|c| c.debounce = Duration::from_millis(20)).await;
    let alice = participant(&d, 10, "alice").await;
    let u = alice.request_floor(1).await.map_err(fail("request"))?;
    ensure!(u.state == RequestState::Pending, "request answered {}", u.state);
    let c = alice.release_floor(u.request_id).await.map_err(fail("cancel"))?;
    ensure!(c.state == RequestState::Cancelled, "cancel answered {}", c.state);

    // The same gesture on a badge reader: read to ask, read again to withdraw.
    let mut feed =
        floorctl_client::BadgeInjector::connect(d.badge_addr.expect("feed enabled")).await.map_err(fail("feed"))?;
    let first = feed.read("4d004b05d6", "mic-1").await.map_err(fail("badge read"))?;
    ensure!(first.contains("state=PENDING"), "first read: {first}");
    tokio::time::sleep(Duration::from_millis(60)).await;
    let second = feed.read("4d004b05d6", "mic-1").await.map_err(fail("badge read"))?;
    ensure!(second.contains("state=CANCELLED"), "second read: {second}");
    let q = chair(&d).queue(1).await.map_err(fail("queue"))?;
    ensure!(q.iter().all(|r| !r.state.is_live()), "live requests remain: {q:?}");
    d.shutdown().await;
    Ok("protocol request/cancel and badge read/read both end CANCELLED".into())
}

async fn grant_and_revoke_notifications() -> Outcome {
    let d = start(|_| {}).await;
    let alice = participant(&d, 10, "alice").await;
    let bob = participant(&d, 11, "bob").await;
    let u = alice.request_floor(1).await.map_err(fail("request"))?;
    let chair = chair(&d);
    let id = RequestId(u.request_id);
    chair.command(&ChairCommand::on_request(ChairVerb::Accept, id)).await.map_err(fail("accept"))?;
    let g = alice
        .await_status(u.request_id, RequestState::Granted, Duration::from_secs(5))
        .await
        .map_err(fail("grant notice"))?;
    chair.command(&ChairCommand::on_request(ChairVerb::Revoke, id)).await.map_err(fail("revoke"))?;
    let r = alice
        .await_status(u.request_id, RequestState::Revoked, Duration::from_secs(5))
        .await
        .map_err(fail("revoke notice"))?;
    ensure!(r.seq > g.seq, "revoke seq {:?} not after grant seq {:?}", r.seq, g.seq);
    tokio::time::sleep(Duration::from_millis(100)).await;
    let leaked = bob.received().iter().filter(|m| m.primitive() == Primitive::FloorRequestStatus).count();
    ensure!(leaked == 0, "another participant got {leaked} status messages for alice's request");
    d.shutdown().await;
    Ok("owner received GRANTED then REVOKED; nobody else did".into())
}

async fn snapshot_every_step() -> Outcome {
    let d = start(|_| {}).await;
    let scenario = golden()?;
    let mut runner = Runner::new(target(&d));
    let report = runner.run(&scenario).await;
    ensure!(report.passed(), "{report}");
    ensure!(report.steps.len() == scenario.steps.len(), "{} of {} steps", report.steps.len(), scenario.steps.len());
    let mut seen = 0;
    for step in &report.steps {
        ensure!(step.snapshots.contains_key(&1), "no snapshot after line {}", step.line);
        seen = seen.max(step.snapshots[&1].len());
    }
    // Unauthenticated read, as a projected screen would do.
    let anon = floorctl_client::GatewayClient::new(&format!("http://{}", d.http_addr), CONF);
    let q = anon.queue(1).await.map_err(fail("anonymous queue"))?;
    ensure!(q.len() == 3, "anonymous queue has {} entries", q.len());
    drop(runner);
    d.shutdown().await;
    Ok(format!("{} snapshots, up to {seen} requests listed", report.steps.len()))
}

async fn revoke_all_in_one_command() -> Outcome {
    let d = start(|c| c.policy = FloorPolicy::new(3)).await;
    let chair = chair(&d);
    let mut owners = Vec::new();
    for user in 10..13 {
        let c = participant(&d, user, "remote").await;
        let u = c.request_floor(1).await.map_err(fail("request"))?;
        chair
            .command(&ChairCommand::on_request(ChairVerb::Accept, RequestId(u.request_id)))
            .await
            .map_err(fail("accept"))?;
        owners.push((c, u.request_id));
    }
    let granted =
        |q: &[floorctl_core::FloorRequestRecord]| q.iter().filter(|r| r.state == RequestState::Granted).count();
    ensure!(granted(&chair.queue(1).await.map_err(fail("queue"))?) == 3, "setup did not grant three");
    let result = chair.command(&ChairCommand::revoke_all(FloorId(1))).await.map_err(fail("revoke_all"))?;
    ensure!(result.records.len() == 3, "revoke_all returned {} records", result.records.len());
    ensure!(granted(&chair.queue(1).await.map_err(fail("queue"))?) == 0, "grants remain after revoke_all");
    for (c, id) in &owners {
        c.await_status(*id, RequestState::Revoked, Duration::from_secs(5)).await.map_err(fail("revoke notice"))?;
    }
    d.shutdown().await;
    Ok("3 grants revoked by one command, every owner notified".into())
}

async fn auto_grant_without_chair() -> Outcome {
    let d = start(|c| c.policy = FloorPolicy { max_granted: 2, auto_grant: true }).await;
    let mut got = Vec::new();
    let mut sessions = Vec::new();
    for user in 10..13 {
        let c = participant(&d, user, "remote").await;
        got.push(c.request_floor(1).await.map_err(fail("request"))?);
        sessions.push(c);
    }
    let states: Vec<_> = got.iter().map(|u| u.state).collect();
    use RequestState::*;
    ensure!(states == [Granted, Granted, Pending], "replies {states:?}");
    sessions[0].release_floor(got[0].request_id).await.map_err(fail("release"))?;
    sessions[2]
        .await_status(got[2].request_id, Granted, Duration::from_secs(5))
        .await
        .map_err(fail("grant on release"))?;
    d.shutdown().await;
    Ok("requests granted on arrival up to the cap and on release, no chair involved".into())
}

/// Per session: the FloorRequestStatus messages it got, as (request, new state, seq).
fn targeted(log: &floorctl_client::scenario::SessionLog) -> Vec<(u16, RequestState, u64)> {
    log.messages
        .iter()
        .filter_map(|m| RequestUpdate::from_message(m).map(|u| (u.request_id, u.state, u.seq.unwrap_or(0))))
        .collect()
}

async fn notification_completeness() -> Outcome {
    let d = start(|_| {}).await;
    let mut events = open_stream(&d).await?;
    let before = d.conference().metrics().await.map_err(|e| e.message)?;
    let mut runner = Runner::new(target(&d));
    let report = runner.run(&golden()?).await;
    ensure!(report.passed(), "{report}");
    runner.settle(Duration::from_millis(200)).await;
    let after = d.conference().metrics().await.map_err(|e| e.message)?;
    let stream = drain(&mut events, Duration::from_millis(300)).await;

    // Transitions as the event stream reports them, grouped by owner.
    let mut transitions: BTreeMap<u64, Vec<(u16, RequestState, u64)>> = BTreeMap::new();
    let mut total = 0usize;
    for (kind, data) in stream.iter().filter(|(k, _)| k == "state") {
        let _ = kind;
        let req = &data["request"];
        let state: RequestState = data["new_state"].as_str().unwrap_or("").parse()?;
        transitions.entry(req["user_id"].as_u64().unwrap_or(0)).or_default().push((
            req["request_id"].as_u64().unwrap_or(0) as u16,
            state,
            data["seq"].as_u64().unwrap_or(0),
        ));
        total += 1;
    }
    ensure!(total > 0, "the event stream carried no transitions");

    let logs = runner.session_logs();
    let mut received = 0usize;
    for log in &logs {
        let got = targeted(log);
        received += got.len();
        let want = transitions.get(&u64::from(log.user_id)).cloned().unwrap_or_default();
        ensure!(got == want, "{} (user {}) got {got:?}, stream says {want:?}", log.actor, log.user_id);
        let seqs: Vec<u64> = log.messages.iter().filter_map(message_seq).collect();
        ensure!(seqs.windows(2).all(|w| w[0] <= w[1]), "{} saw seqs out of order: {seqs:?}", log.actor);
    }
    ensure!(received == total, "{received} targeted status messages for {total} transitions");
    let sent = after.targeted_status - before.targeted_status;
    let counted = after.transitions - before.transitions;
    ensure!(
        sent as usize == total && counted as usize == total,
        "daemon counted {sent} targeted messages and {counted} transitions, stream had {total}"
    );
    drop(runner);
    d.shutdown().await;
    Ok(format!("{total} transitions, {received} targeted status messages over {} sessions, in seq order", logs.len()))
}

// Runner

type Check = Pin<Box<dyn Future<Output = Outcome>>>;

fn blocking(f: fn() -> Outcome) -> Check {
    Box::pin(async move { tokio::task::spawn_blocking(f).await.unwrap_or_else(|e| Err(format!("panicked: {e}"))) })
}

fn main() {
    let rt = tokio::runtime::Runtime::new().expect("runtime");
    let checks: Vec<(&str, Check)> = vec![
        ("golden scenario", Box::pin(golden_scenario())),
        ("single-grant accept/promote narrative", Box::pin(single_grant_narrative())),
        ("codec round trip and fuzz", blocking(codec_round_trip)),
        ("queue matches brute-force model", blocking(oracle_equivalence)),
        ("grant cap over random sequences", blocking(grant_cap)),
        ("participants can withdraw a request", Box::pin(request_and_cancel())),
        ("owner told of grant and revoke", Box::pin(grant_and_revoke_notifications())),
        ("queue snapshot at every step", Box::pin(snapshot_every_step())),
        ("revoke_all in one command", Box::pin(revoke_all_in_one_command())),
        ("auto-grant without chair", Box::pin(auto_grant_without_chair())),
        ("notification completeness", Box::pin(notification_completeness())),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        let started = Instant::now();
        let outcome = rt.block_on(async {
            match AssertUnwindSafe(check).catch_unwind().await {
                Ok(o) => o,
                Err(_) => Err("panicked".into()),
            }
        });
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail} [{:.1?}]", started.elapsed()),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
