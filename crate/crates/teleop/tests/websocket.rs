use std::net::SocketAddr;
use std::time::{Duration, Instant};

use futures_util::{SinkExt, StreamExt};
use serde_json::{json, Value};
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::{TcpListener, TcpStream};
use tokio_tungstenite::tungstenite::Message;

use screwsim_teleop::server::serve;
use screwsim_teleop::GatewayConfig;

async fn start() -> SocketAddr {
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(serve(listener, GatewayConfig::default(), std::future::pending()));
    addr
}

async fn http_get(addr: SocketAddr, path: &str) -> Value {
    let mut s = TcpStream::connect(addr).await.unwrap();
    s.write_all(format!("GET {path} HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n").as_bytes())
        .await
        .unwrap();
    let mut buf = String::new();
    s.read_to_string(&mut buf).await.unwrap();
    let body = buf.split("\r\n\r\n").nth(1).unwrap();
    serde_json::from_str(body).unwrap()
}

fn frame(seq: u64, yaw: f64) -> Message {
    let j = json!({"pitch_rad": 0.0, "yaw_rad": yaw});
    Message::Text(
        json!({"type": "frame", "seq": seq, "t_ms": seq as f64 * 20.0, "joints": [j, j, j], "screw": 0.3})
            .to_string()
            .into(),
    )
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn scripted_pilot_session() {
    let addr = start().await;

    let policy = http_get(addr, "/policy").await;
    let limit = policy["device_limit"]["yaw_rad"].as_f64().unwrap();
    assert!((limit - 80f64.to_radians()).abs() < 1e-12);
    assert_eq!(policy["n_joints"], 3);

    let (ws, _) = tokio_tungstenite::connect_async(format!("ws://{addr}/ws")).await.unwrap();
    let (mut tx, mut rx) = ws.split();

    // a second pilot is turned away
    let (mut other, _) = tokio_tungstenite::connect_async(format!("ws://{addr}/ws")).await.unwrap();
    let refused: Value = match other.next().await.unwrap().unwrap() {
        Message::Text(t) => serde_json::from_str(&t).unwrap(),
        m => panic!("unexpected {m:?}"),
    };
    assert_eq!(refused["type"], "error");
    assert_eq!(refused["code"], "occupied");

    let sender = tokio::spawn(async move {
        let mut iv = tokio::time::interval(Duration::from_millis(20));
        for seq in 1..=50u64 {
            iv.tick().await;
            let yaw = 0.9 * limit * (seq as f64 / 10.0).sin();
            tx.send(frame(seq, yaw)).await.unwrap();
        }
        // a stale frame is silently dropped
        tx.send(frame(3, 0.0)).await.unwrap();
        tx
    });

    let start = Instant::now();
    let mut states = Vec::new();
    while start.elapsed() < Duration::from_millis(1000) {
        let Ok(Some(Ok(msg))) = tokio::time::timeout(Duration::from_millis(200), rx.next()).await else {
            continue;
        };
        if let Message::Text(t) = msg {
            let v: Value = serde_json::from_str(&t).unwrap();
            assert_ne!(v["type"], "error", "{v}");
            states.push(v);
        }
    }
    let mut tx = sender.await.unwrap();

    assert!(states.len() >= 30, "only {} states in 1 s", states.len());
    for s in &states {
        assert_eq!(s["type"], "state");
        for key in ["t_ms", "pose", "joints", "clamped", "speeds", "misses"] {
            assert!(s.get(key).is_some(), "missing {key}");
        }
        assert!(s["clamped"].as_array().unwrap().iter().all(|c| c == false));
    }
    let t: Vec<f64> = states.iter().map(|s| s["t_ms"].as_f64().unwrap()).collect();
    assert!(t.windows(2).all(|w| w[1] >= w[0]));

    tokio::time::sleep(Duration::from_millis(100)).await;
    let stats = http_get(addr, "/stats").await;
    assert_eq!(stats["dropped"], 1);
    assert!(stats["forwarded"].as_u64().unwrap() >= 30);

    // malformed input gets an error, not a disconnect
    tx.send(Message::Text("{\"type\":\"frame\"}".into())).await.unwrap();
    let mut got_error = false;
    for _ in 0..200 {
        if let Some(Ok(Message::Text(t))) = rx.next().await {
            let v: Value = serde_json::from_str(&t).unwrap();
            if v["type"] == "error" {
                assert_eq!(v["code"], "bad_message");
                got_error = true;
                break;
            }
        }
    }
    assert!(got_error);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn observers_receive_telemetry_but_cannot_steer() {
    let addr = start().await;
    let (mut obs, _) = tokio_tungstenite::connect_async(format!("ws://{addr}/observe")).await.unwrap();
    let first = tokio::time::timeout(Duration::from_secs(2), obs.next()).await.unwrap().unwrap().unwrap();
    let v: Value = serde_json::from_str(first.to_text().unwrap()).unwrap();
    assert_eq!(v["type"], "state");

    obs.send(frame(1, 0.1)).await.unwrap();
    let mut refused = false;
    for _ in 0..200 {
        let msg = obs.next().await.unwrap().unwrap();
        let v: Value = serde_json::from_str(msg.to_text().unwrap()).unwrap();
        if v["type"] == "error" {
            assert_eq!(v["code"], "not_pilot");
            refused = true;
            break;
        }
    }
    assert!(refused);
}
