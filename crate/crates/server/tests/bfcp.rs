mod common;

use std::time::Duration;

use common::*;
use floorctl_core::{FloorPolicy, RequestState};
use floorctl_wire::{Attribute, AttributeValue, BfcpMessage, ErrorCode, Primitive, RequestStatus, StatusCode};
use serde_json::json;

const QUIET: Duration = Duration::from_millis(150);

fn chair_action(peer: &mut Peer, request: u16, status: StatusCode) -> BfcpMessage {
    peer.message(Primitive::ChairAction).with(AttributeValue::FloorRequestInformation {
        floor_request_id: request,
        attributes: vec![Attribute::new(AttributeValue::OverallRequestStatus {
            floor_request_id: request,
            attributes: vec![Attribute::new(AttributeValue::RequestStatus(RequestStatus {
                status,
                queue_position: 0,
            }))],
        })],
    })
}

#[tokio::test]
async fn hello_is_echoed_and_idempotent() {
    let daemon = start(|_| {}).await;
    let mut p = Peer::connect(daemon.bfcp_addr, 2).await;
    let hello = BfcpMessage::new(Primitive::Hello, 1, 5, 2);
    let ack = p.call(hello.clone()).await;
    assert_eq!(ack, BfcpMessage::new(Primitive::HelloAck, 1, 5, 2));
    let again = p.call(hello).await;
    assert_eq!(again.primitive(), Primitive::HelloAck);
    daemon.shutdown().await;
}

#[tokio::test]
async fn unknown_conference_gets_error_and_connection_stays() {
    let daemon = start(|_| {}).await;
    let mut p = Peer::connect(daemon.bfcp_addr, 2).await;
    let reply = p.call(BfcpMessage::new(Primitive::Hello, 99, 7, 2)).await;
    assert_eq!(error_code(&reply), Some(ErrorCode::ConferenceDoesNotExist));
    assert_eq!(reply.header.conference_id, 99);
    assert_eq!(p.hello("u2").await.primitive(), Primitive::HelloAck);
    daemon.shutdown().await;
}

#[tokio::test]
async fn remote_request_behind_local_user_is_second() {
    let daemon = start(|_| {}).await;
    let mut user1 = Peer::connect(daemon.bfcp_addr, 101).await;
    user1.hello("User1").await;
    let first = status(&user1.request(1).await).unwrap();
    assert_eq!((first.status, first.position), (StatusCode::Pending, 1));

    let mut remote = Peer::connect(daemon.bfcp_addr, 7).await;
    remote.hello("spromano").await;
    let reply = remote.request(1).await;
    let s = status(&reply).unwrap();
    assert_eq!((s.status, s.position), (StatusCode::Pending, 2));
    assert_ne!(s.id, first.id);

    let api = Api::new(&daemon);
    assert_eq!(rows(&api.queue(1).await), vec![row("User1", "PENDING", 1), row("spromano", "PENDING", 2)]);
    assert_eq!(api.queue(1).await[1]["origin"], "BFCP_CLIENT");
    daemon.shutdown().await;
}

#[tokio::test]
async fn duplicate_request_is_refused_without_queue_change() {
    let daemon = start(|_| {}).await;
    let api = Api::new(&daemon);
    let mut p = Peer::connect(daemon.bfcp_addr, 3).await;
    p.hello("alice").await;
    p.request(1).await;
    let before = api.queue(1).await;
    let reply = p.request(1).await;
    assert_eq!(error_code(&reply), Some(ErrorCode::MaxFloorRequestsReached));
    assert!(reply.attributes.iter().any(|a| matches!(&a.value, AttributeValue::ErrorInfo(i) if i.contains("already"))));
    assert_eq!(api.queue(1).await, before);
    daemon.shutdown().await;
}

#[tokio::test]
async fn unknown_floor_is_refused() {
    let daemon = start(|_| {}).await;
    let mut p = Peer::connect(daemon.bfcp_addr, 3).await;
    assert_eq!(error_code(&p.request(42).await), Some(ErrorCode::InvalidFloorId));
    daemon.shutdown().await;
}

#[tokio::test]
async fn auto_grant_reply_is_granted() {
    let daemon = start(|c| c.policy = FloorPolicy { max_granted: 1, auto_grant: true }).await;
    let mut p = Peer::connect(daemon.bfcp_addr, 3).await;
    let s = status(&p.request(1).await).unwrap();
    assert_eq!(s.status, StatusCode::Granted);
    let mut q = Peer::connect(daemon.bfcp_addr, 4).await;
    let s = status(&q.request(1).await).unwrap();
    assert_eq!((s.status, s.position), (StatusCode::Pending, 1));
    daemon.shutdown().await;
}

#[tokio::test]
async fn release_by_holder_promotes_next_accepted() {
    let daemon = start(|_| {}).await;
    let api = Api::new(&daemon);
    let mut a = Peer::connect(daemon.bfcp_addr, 3).await;
    let mut b = Peer::connect(daemon.bfcp_addr, 4).await;
    let ra = status(&a.request(1).await).unwrap().id;
    let rb = status(&b.request(1).await).unwrap().id;
    assert_eq!(api.command(json!({"action": "accept", "request_id": ra})).await.0, 200);
    assert_eq!(api.command(json!({"action": "accept", "request_id": rb})).await.0, 200);
    a.await_status(ra, StatusCode::Granted).await;
    b.await_status(rb, StatusCode::Accepted).await;

    let s = status(&a.release(ra).await).unwrap();
    assert_eq!(s.status, StatusCode::Released);
    b.await_status(rb, StatusCode::Granted).await;
    daemon.shutdown().await;
}

#[tokio::test]
async fn release_while_pending_cancels() {
    let daemon = start(|_| {}).await;
    let mut a = Peer::connect(daemon.bfcp_addr, 3).await;
    let ra = status(&a.request(1).await).unwrap().id;
    let s = status(&a.release(ra).await).unwrap();
    assert_eq!((s.id, s.status), (ra, StatusCode::Cancelled));
    daemon.shutdown().await;
}

#[tokio::test]
async fn release_of_another_users_request_is_refused() {
    let daemon = start(|_| {}).await;
    let api = Api::new(&daemon);
    let mut a = Peer::connect(daemon.bfcp_addr, 3).await;
    let mut b = Peer::connect(daemon.bfcp_addr, 4).await;
    let ra = status(&a.request(1).await).unwrap().id;
    let before = api.queue(1).await;
    assert_eq!(error_code(&b.release(ra).await), Some(ErrorCode::UnauthorizedOperation));
    assert_eq!(error_code(&b.release(999).await), Some(ErrorCode::FloorRequestIdDoesNotExist));
    assert_eq!(api.queue(1).await, before);
    daemon.shutdown().await;
}

#[tokio::test]
async fn session_is_bound_to_its_first_user() {
    let daemon = start(|_| {}).await;
    let mut a = Peer::connect(daemon.bfcp_addr, 3).await;
    a.hello("alice").await;
    a.user = 4;
    assert_eq!(error_code(&a.request(1).await), Some(ErrorCode::UnauthorizedOperation));
    daemon.shutdown().await;
}

#[tokio::test]
async fn one_chair_at_a_time() {
    let daemon = start(|_| {}).await;
    let mut chair = Peer::connect(daemon.bfcp_addr, 50).await;
    assert_eq!(chair.chair_hello(TOKEN).await.primitive(), Primitive::HelloAck);
    let mut second = Peer::connect(daemon.bfcp_addr, 51).await;
    assert_eq!(error_code(&second.chair_hello(TOKEN).await), Some(ErrorCode::UnauthorizedOperation));
    let mut liar = Peer::connect(daemon.bfcp_addr, 52).await;
    assert_eq!(error_code(&liar.chair_hello("guess").await), Some(ErrorCode::UnauthorizedOperation));

    // Once the first chair leaves, another may log in.
    drop(chair);
    let mut ok = false;
    for _ in 0..50 {
        if second.chair_hello(TOKEN).await.primitive() == Primitive::HelloAck {
            ok = true;
            break;
        }
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
    assert!(ok, "chair seat never freed");
    daemon.shutdown().await;
}

#[tokio::test]
async fn chair_actions_over_the_protocol() {
    let daemon = start(|_| {}).await;
    let mut chair = Peer::connect(daemon.bfcp_addr, 50).await;
    chair.chair_hello(TOKEN).await;
    let mut remote = Peer::connect(daemon.bfcp_addr, 7).await;
    remote.hello("spromano").await;
    let id = status(&remote.request(1).await).unwrap().id;
    // The chair hears about the new request.
    chair.await_status(id, StatusCode::Pending).await;

    let action = chair_action(&mut chair, id, StatusCode::Accepted);
    assert_eq!(chair.call(action).await.primitive(), Primitive::ChairActionAck);
    remote.await_status(id, StatusCode::Granted).await;

    let action = chair_action(&mut chair, id, StatusCode::Revoked);
    assert_eq!(chair.call(action).await.primitive(), Primitive::ChairActionAck);
    remote.await_status(id, StatusCode::Revoked).await;
    let floor_status = remote.drain(QUIET).await.into_iter().rfind(|m| m.primitive() == Primitive::FloorStatus);
    let fs = floor_status.expect("a FloorStatus after the revoke");
    assert_eq!(fs.floor_ids().collect::<Vec<_>>(), vec![1]);
    assert_eq!(fs.floor_request_information().count(), 0, "nothing live after the revoke");

    // Acting on a finished request mirrors the core error.
    let action = chair_action(&mut chair, id, StatusCode::Accepted);
    assert_eq!(error_code(&chair.call(action).await), Some(ErrorCode::GenericError));
    daemon.shutdown().await;
}

#[tokio::test]
async fn participant_chair_action_is_unauthorized() {
    let daemon = start(|_| {}).await;
    let mut p = Peer::connect(daemon.bfcp_addr, 3).await;
    let id = status(&p.request(1).await).unwrap().id;
    let action = chair_action(&mut p, id, StatusCode::Accepted);
    assert_eq!(error_code(&p.call(action).await), Some(ErrorCode::UnauthorizedOperation));
    assert_eq!(rows(&Api::new(&daemon).queue(1).await)[0].1, "PENDING");
    daemon.shutdown().await;
}

#[tokio::test]
async fn server_only_primitives_are_refused() {
    let daemon = start(|_| {}).await;
    let mut p = Peer::connect(daemon.bfcp_addr, 3).await;
    let msg = p.message(Primitive::FloorStatus);
    assert_eq!(error_code(&p.call(msg).await), Some(ErrorCode::GenericError));
    daemon.shutdown().await;
}

#[tokio::test]
async fn queries_are_answered() {
    let daemon = start(|_| {}).await;
    let mut p = Peer::connect(daemon.bfcp_addr, 3).await;
    let id = status(&p.request(1).await).unwrap().id;
    p.drain(QUIET).await;

    let q = p.message(Primitive::FloorRequestQuery).with(AttributeValue::FloorRequestId(id));
    let s = status(&p.call(q).await).unwrap();
    assert_eq!((s.id, s.status, s.position), (id, StatusCode::Pending, 1));

    let q = p.message(Primitive::UserQuery);
    let reply = p.call(q).await;
    assert_eq!(reply.primitive(), Primitive::UserStatus);
    assert_eq!(reply.floor_request_information().map(|(i, _)| i).collect::<Vec<_>>(), vec![id]);

    let q = p.message(Primitive::FloorQuery).with(AttributeValue::FloorId(1));
    let reply = p.call(q).await;
    assert_eq!(reply.primitive(), Primitive::FloorStatus);
    assert_eq!(reply.floor_request_information().count(), 1);
    daemon.shutdown().await;
}

#[tokio::test]
async fn notifications_use_even_transaction_ids() {
    let daemon = start(|_| {}).await;
    let api = Api::new(&daemon);
    let mut p = Peer::connect(daemon.bfcp_addr, 3).await;
    let id = status(&p.request(1).await).unwrap().id;
    api.command(json!({"action": "accept", "request_id": id})).await;
    p.await_status(id, StatusCode::Granted).await;
    let all = p.drain(QUIET).await;
    assert!(!all.is_empty());
    for m in all {
        let tx = m.header.transaction_id;
        assert!(tx != 0 && tx % 2 == 0, "server-initiated {} used tx {tx}", m.primitive());
    }
    daemon.shutdown().await;
}

/// One accept event with three connected participants: exactly one targeted
/// status for the owner and one FloorStatus for each session.
#[tokio::test]
async fn fan_out_counts() {
    let daemon = start(|_| {}).await;
    let api = Api::new(&daemon);
    let mut peers = Vec::new();
    for user in [3, 4, 5] {
        let mut p = Peer::connect(daemon.bfcp_addr, user).await;
        p.hello(&format!("u{user}")).await;
        peers.push(p);
    }
    // Someone already holds the floor, so the accept is a single
    // PENDING -> ACCEPTED event.
    let holder = status(&peers[1].request(1).await).unwrap().id;
    api.command(json!({"action": "accept", "request_id": holder})).await;
    let id = status(&peers[0].request(1).await).unwrap().id;
    for p in &mut peers {
        p.drain(QUIET).await;
    }
    let before = daemon.conference().metrics().await.unwrap();

    api.command(json!({"action": "accept", "request_id": id})).await;
    let mut targeted = 0;
    let mut broadcast = 0;
    for (i, p) in peers.iter_mut().enumerate() {
        for m in p.drain(QUIET).await {
            match m.primitive() {
                Primitive::FloorRequestStatus => {
                    assert_eq!(i, 0, "status leaked to a non-owner");
                    targeted += 1;
                }
                Primitive::FloorStatus => broadcast += 1,
                other => panic!("unexpected {other}"),
            }
        }
    }
    assert_eq!((targeted, broadcast), (1, 3));
    let after = daemon.conference().metrics().await.unwrap();
    assert_eq!(after.transitions - before.transitions, 1);
    assert_eq!(after.targeted_status - before.targeted_status, 1);
    assert_eq!(after.floor_status - before.floor_status, 3);
    daemon.shutdown().await;
}

#[tokio::test]
async fn events_for_departed_users_still_reach_the_others() {
    let daemon = start(|_| {}).await;
    let api = Api::new(&daemon);
    let mut watcher = Peer::connect(daemon.bfcp_addr, 9).await;
    watcher.hello("watcher").await;
    let web = api.join("alice").await;
    let token = web["token"].as_str().unwrap();
    let (code, rec) = api.floor_action(token, json!({"kind": "request", "floor_id": 1})).await;
    assert_eq!(code, 200);
    watcher.drain(QUIET).await;
    api.command(json!({"action": "accept", "request_id": rec["request_id"]})).await;
    let got = watcher.drain(QUIET).await;
    assert_eq!(got.len(), 1);
    assert_eq!(got[0].primitive(), Primitive::FloorStatus);
    daemon.shutdown().await;
}

#[tokio::test]
async fn notifications_arrive_in_event_order() {
    let daemon = start(|c| c.policy = FloorPolicy::new(2)).await;
    let api = Api::new(&daemon);
    let mut peers = Vec::new();
    let mut ids = Vec::new();
    for user in [3, 4, 5, 6] {
        let mut p = Peer::connect(daemon.bfcp_addr, user).await;
        ids.push(status(&p.request(1).await).unwrap().id);
        peers.push(p);
    }
    for id in &ids {
        api.command(json!({"action": "accept", "request_id": id})).await;
    }
    api.command(json!({"action": "revoke_all", "floor_id": 1})).await;
    for p in &mut peers {
        let seqs: Vec<u64> = p
            .drain(QUIET)
            .await
            .iter()
            .filter_map(|m| status(m).and_then(|s| s.seq).or_else(|| floor_status_seq(m)))
            .collect();
        assert!(seqs.windows(2).all(|w| w[0] <= w[1]), "out of order: {seqs:?}");
    }
    daemon.shutdown().await;
}

#[tokio::test]
async fn disconnect_cancels_live_requests_and_promotes() {
    let daemon = start(|_| {}).await;
    let api = Api::new(&daemon);
    let mut a = Peer::connect(daemon.bfcp_addr, 3).await;
    let mut b = Peer::connect(daemon.bfcp_addr, 4).await;
    let ra = status(&a.request(1).await).unwrap().id;
    let rb = status(&b.request(1).await).unwrap().id;
    api.command(json!({"action": "accept", "request_id": ra})).await;
    api.command(json!({"action": "accept", "request_id": rb})).await;
    drop(a);
    b.await_status(rb, StatusCode::Granted).await;
    let q = api.queue(1).await;
    let states: Vec<_> =
        q.as_array().unwrap().iter().map(|e| (e["request_id"].as_u64().unwrap(), e["state"].clone())).collect();
    assert!(states.contains(&(u64::from(ra), json!(RequestState::Released.as_str()))));
    daemon.shutdown().await;
}

#[tokio::test]
async fn silent_session_is_probed_then_closed() {
    let daemon = start(|c| {
        c.session.idle_probe = Duration::from_millis(200);
        c.session.probe_timeout = Duration::from_millis(200);
    })
    .await;
    let mut p = Peer::connect(daemon.bfcp_addr, 3).await;
    p.request(1).await;
    let probe = p.recv().await;
    let probe = if probe.primitive() == Primitive::FloorStatus { p.recv().await } else { probe };
    assert_eq!(probe.primitive(), Primitive::Hello);
    assert!(probe.header.transaction_id % 2 == 0);
    assert!(p.closed(Duration::from_secs(2)).await, "no answer to the probe should close the session");
    tokio::time::sleep(Duration::from_millis(50)).await;
    assert_eq!(rows(&Api::new(&daemon).queue(1).await)[0].1, "CANCELLED");
    daemon.shutdown().await;
}

#[tokio::test]
async fn answered_probe_keeps_session() {
    let daemon = start(|c| {
        c.session.idle_probe = Duration::from_millis(200);
        c.session.probe_timeout = Duration::from_millis(300);
    })
    .await;
    let mut p = Peer::connect(daemon.bfcp_addr, 3).await;
    p.hello("x").await;
    for _ in 0..3 {
        let probe = p.recv().await;
        assert_eq!(probe.primitive(), Primitive::Hello);
        p.send(&probe.reply(Primitive::HelloAck)).await;
    }
    assert_eq!(p.hello("x").await.primitive(), Primitive::HelloAck);
    daemon.shutdown().await;
}

#[tokio::test]
async fn framing_errors_are_reported_then_dropped() {
    let daemon = start(|_| {}).await;
    let mut p = Peer::connect(daemon.bfcp_addr, 3).await;
    let mut bytes = BfcpMessage::new(Primitive::Hello, 1, 9, 3).encode().unwrap();
    bytes[0] = (2 << 5) | (bytes[0] & 0x1f);
    p.send_bytes(&bytes).await;
    let reply = p.recv().await;
    assert_eq!(error_code(&reply), Some(ErrorCode::UnsupportedVersion));
    assert_eq!(reply.header.transaction_id, 9);
    assert!(p.closed(Duration::from_secs(2)).await);
    daemon.shutdown().await;
}

#[tokio::test]
async fn undecodable_message_gets_error_and_session_survives() {
    let daemon = start(|_| {}).await;
    let mut p = Peer::connect(daemon.bfcp_addr, 3).await;
    let mut bytes = BfcpMessage::new(Primitive::Hello, 1, 11, 3).encode().unwrap();
    bytes[1] = 77;
    p.send_bytes(&bytes).await;
    assert_eq!(error_code(&p.recv().await), Some(ErrorCode::UnknownPrimitive));
    assert_eq!(p.hello("still here").await.primitive(), Primitive::HelloAck);
    daemon.shutdown().await;
}
