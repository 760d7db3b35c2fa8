use std::io::{BufRead, BufReader};
use std::net::SocketAddr;
use std::sync::mpsc;
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use anyhow::Result;
use keyscroll::server::{serve, AppState};
use keyscroll::AppConfig;
use keyscroll_core::synth::Distribution;
use keyscroll_core::{EngineConfig, IndexedTable};
use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde_json::{json, Value};

const H: usize = 10;

fn table(rows: usize, latency_ms: u64) -> IndexedTable {
    let mut config = AppConfig::synthetic(Distribution::Composite, rows);
    config.slow_latency_ms = latency_ms;
    config.load_table(7).unwrap()
}

fn engine_config() -> EngineConfig {
    let mut config = EngineConfig::with_height(H);
    config.warmup_enabled = false;
    config
}

/// Serves on an ephemeral port; the table comes from `loader`.
fn start<F>(loader: F) -> (String, Arc<AppState>)
where
    F: FnOnce() -> Result<IndexedTable> + Send + 'static,
{
    let (tx, rx) = mpsc::channel::<SocketAddr>();
    let state = AppState::new();
    state.load(engine_config(), loader);
    let served = Arc::clone(&state);
    thread::spawn(move || {
        let runtime = tokio::runtime::Runtime::new().unwrap();
        runtime.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            serve(listener, served).await.unwrap();
        });
    });
    (format!("http://{}", rx.recv().unwrap()), state)
}

fn wait_ready(client: &Client, base: &str) {
    let deadline = Instant::now() + Duration::from_secs(30);
    while client.get(format!("{base}/api/meta")).send().unwrap().status() != StatusCode::OK {
        assert!(Instant::now() < deadline, "service never became ready");
        thread::sleep(Duration::from_millis(20));
    }
}

fn started(rows: usize, latency_ms: u64) -> (String, Arc<AppState>, Client) {
    let (base, state) = start(move || Ok(table(rows, latency_ms)));
    let client = Client::new();
    wait_ready(&client, &base);
    (base, state, client)
}

fn keys_of(window: &Value) -> Vec<Value> {
    window["rows"].as_array().unwrap().iter().map(|r| r["key"].clone()).collect()
}

fn oracle_keys(t: &IndexedTable, from: usize, n: usize) -> Vec<Value> {
    (from..(from + n).min(t.len()))
        .map(|i| Value::Array(t.row_at(i).unwrap().key.iter().map(keyscroll::wire::value_to_json).collect()))
        .collect()
}

#[test]
fn unavailable_until_loaded() {
    let (gate_tx, gate_rx) = mpsc::channel::<()>();
    let (base, _state) = start(move || {
        gate_rx.recv().unwrap();
        Ok(table(100, 0))
    });
    let client = Client::new();
    for path in ["/api/meta", "/api/window?lambda=0", "/api/events"] {
        assert_eq!(client.get(format!("{base}{path}")).send().unwrap().status(), 503, "{path}");
    }
    let r = client.post(format!("{base}/api/release")).send().unwrap();
    assert_eq!(r.status(), 503);
    gate_tx.send(()).unwrap();
    wait_ready(&client, &base);

    let (base, _state) = start(|| anyhow::bail!("disk on fire"));
    thread::sleep(Duration::from_millis(100));
    let r = client.get(format!("{base}/api/meta")).send().unwrap();
    assert_eq!(r.status(), 503);
    assert!(r.text().unwrap().contains("disk on fire"));
}

#[test]
fn meta_window_locate_step() {
    let (base, state, client) = started(2_000, 0);
    let table = Arc::clone(state.engine().unwrap().table());
    state.engine().unwrap().wait_idle(Duration::from_secs(10));

    let meta: Value = client.get(format!("{base}/api/meta")).send().unwrap().json().unwrap();
    assert_eq!(meta["h"], H);
    assert_eq!(meta["lambda_max"], 1_999);
    assert_eq!(meta["schema"][0], json!({ "name": "street", "kind": "string", "max_length": 16 }));
    assert_eq!(meta["payload_columns"], json!([]));

    let w: Value = client.get(format!("{base}/api/window?lambda=0")).send().unwrap().json().unwrap();
    assert_eq!(keys_of(&w), oracle_keys(&table, 0, H));
    assert_eq!(w["lambda"], 0);
    let first = table.ordinal_at(0).unwrap().to_string();
    assert_eq!(w["rows"][0]["ordinal"], json!(first));

    let w: Value = client.get(format!("{base}/api/window?lambda=999999")).send().unwrap().json().unwrap();
    assert_eq!(keys_of(&w), oracle_keys(&table, 2_000 - H, H));

    let min_key = oracle_keys(&table, 0, 1).remove(0);
    let w: Value = client
        .post(format!("{base}/api/locate"))
        .json(&json!({ "keys": min_key }))
        .send()
        .unwrap()
        .json()
        .unwrap();
    assert_eq!(w["lambda_estimate"], 0);
    assert_eq!(keys_of(&w), oracle_keys(&table, 0, H));

    let anchor = oracle_keys(&table, 700, 1).remove(0);
    let w: Value = client
        .post(format!("{base}/api/locate"))
        .json(&json!({ "keys": anchor }))
        .send()
        .unwrap()
        .json()
        .unwrap();
    assert_eq!(keys_of(&w), oracle_keys(&table, 700, H));
    for (n, at) in [(1, 701), (-4, 697), (20, 717)] {
        let w: Value = client
            .post(format!("{base}/api/step"))
            .json(&json!({ "n": n }))
            .send()
            .unwrap()
            .json()
            .unwrap();
        assert_eq!(keys_of(&w), oracle_keys(&table, at, H), "step {n}");
    }
}

#[test]
fn malformed_requests() {
    let (base, _state, client) = started(200, 0);
    for path in ["/api/window", "/api/window?lambda=-1", "/api/window?lambda=x", "/api/window?lambda=1.5"] {
        assert_eq!(client.get(format!("{base}{path}")).send().unwrap().status(), 400, "{path}");
    }
    let bodies = [
        "not json",
        "{}",
        r#"{"keys": "Ленина"}"#,
        r#"{"keys": ["Ленина"]}"#,
        r#"{"keys": ["Ленина", "3"]}"#,
        r#"{"keys": ["Lenina", 3]}"#,
        r#"{"keys": ["очень длинная улица", 3]}"#,
    ];
    for body in bodies {
        let r = client.post(format!("{base}/api/locate")).body(body).send().unwrap();
        assert_eq!(r.status(), 400, "{body}");
        let err: Value = r.json().unwrap();
        assert!(err["error"].is_string());
    }
    for body in ["{}", r#"{"n": 0}"#, r#"{"n": "1"}"#, "[1]"] {
        let r = client.post(format!("{base}/api/step")).body(body).send().unwrap();
        assert_eq!(r.status(), 400, "{body}");
    }
}

#[test]
fn release_pushes_thumb_correction() {
    let latency = Duration::from_millis(300);
    let (base, state, _) = started(20_000, latency.as_millis() as u64);
    let table = Arc::clone(state.engine().unwrap().table());
    let client = Client::builder().timeout(Duration::from_secs(60)).build().unwrap();
    let events = client.get(format!("{base}/api/events")).send().unwrap();
    assert_eq!(events.status(), 200);
    assert_eq!(events.headers()["content-type"], "application/x-ndjson");
    let mut lines = BufReader::new(events).lines();

    let t = Instant::now();
    let w: Value = client.get(format!("{base}/api/window?lambda=600")).send().unwrap().json().unwrap();
    assert!(t.elapsed() < latency, "window took {:?}", t.elapsed());
    let generation = w["generation"].as_u64().unwrap();
    let first_key = keys_of(&w).remove(0);
    let exact = (0..table.len()).find(|&i| oracle_keys(&table, i, 1)[0] == first_key).unwrap();

    let t = Instant::now();
    let r = client.post(format!("{base}/api/release")).send().unwrap();
    assert_eq!(r.status(), StatusCode::ACCEPTED);
    assert_eq!(r.json::<Value>().unwrap()["scheduled"], true);
    let w: Value = client.get(format!("{base}/api/window?lambda=600")).send().unwrap().json().unwrap();
    assert!(t.elapsed() < latency, "release and window took {:?}", t.elapsed());
    let later = w["generation"].as_u64().unwrap();
    client.post(format!("{base}/api/release")).send().unwrap();

    let mut seen = Vec::new();
    let corrected = loop {
        let event: Value = serde_json::from_str(&lines.next().unwrap().unwrap()).unwrap();
        seen.push(event.clone());
        if event["type"] == "ThumbCorrected" {
            break event;
        }
    };
    assert_eq!(corrected["generation"], later);
    assert_eq!(corrected["lambda"], exact as u64);
    let kinds: Vec<(String, u64)> = seen
        .iter()
        .filter(|e| e["type"] == "WindowChanged")
        .map(|e| (e["type"].as_str().unwrap().to_owned(), e["generation"].as_u64().unwrap()))
        .collect();
    assert_eq!(
        kinds,
        vec![("WindowChanged".to_owned(), generation), ("WindowChanged".to_owned(), later)]
    );
    assert!(seen.iter().any(|e| e["type"] == "LambdaMaxChanged" && e["lambda_max"] == 19_999));
}
