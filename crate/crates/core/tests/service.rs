use std::io::{Read, Write};
use std::net::{TcpStream, UdpSocket};
use std::path::Path;
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use sonomat::material::MaterialTable;
use sonomat::osc::{encode_osc, OscArg, OscMessage};
use sonomat::scene::fixtures;
use sonomat::server::{ServeConfig, Server, StatsSnapshot};
use sonomat::wav::read_wav;
use tungstenite::Message;

fn start(scene: Option<&Path>, capture: Option<&Path>) -> Server {
    let config = ServeConfig {
        osc_port: 0,
        ws_port: 0,
        scene_dir: scene.map(Path::to_path_buf),
        capture: capture.map(Path::to_path_buf),
        ..ServeConfig::default()
    };
    Server::start(config, Arc::new(MaterialTable::shipped())).unwrap()
}

fn send(server: &Server, msg: &OscMessage) {
    let s = UdpSocket::bind("127.0.0.1:0").unwrap();
    s.send_to(&encode_osc(msg).unwrap(), server.osc_addr()).unwrap();
}

fn wait_for(server: &Server, what: impl Fn(&StatsSnapshot) -> bool) -> StatsSnapshot {
    let t = Instant::now();
    loop {
        let s = server.stats();
        if what(&s) {
            return s;
        }
        assert!(t.elapsed() < Duration::from_secs(10), "timed out: {s:?}");
        thread::sleep(Duration::from_millis(2));
    }
}

fn tap(material: &str, force: f32) -> OscMessage {
    OscMessage::new("/tap/material", vec![OscArg::Str(material.into()), OscArg::Float(force)])
}

#[test]
fn udp_tap_is_heard_quickly_and_captured() {
    let dir = tempfile::tempdir().unwrap();
    let cap = dir.path().join("cap.wav");
    let server = start(None, Some(&cap));
    // warm the model cache, then measure a fresh strike
    send(&server, &tap("glass", 0.8));
    wait_for(&server, |s| s.voices_started >= 1);
    send(&server, &tap("glass", 0.8));
    let s = wait_for(&server, |s| s.voices_started >= 2);
    assert!(s.last_latency_ms <= 50.0, "{s:?}");
    let grown = read_wav(&cap).map(|b| b.samples.len()).unwrap_or(0);
    thread::sleep(Duration::from_millis(600));
    let later = read_wav(&cap).unwrap().samples.len();
    assert!(later > grown, "capture should grow: {grown} -> {later}");
    server.shutdown();
    let b = read_wav(&cap).unwrap();
    assert!(b.peak() > 0.01 && b.peak() <= 1.0);
    assert!(b.samples.iter().all(|s| s.is_finite()));
}

#[test]
fn garbage_is_dropped_and_service_continues() {
    let server = start(None, None);
    let s = UdpSocket::bind("127.0.0.1:0").unwrap();
    for junk in [&b"hello"[..], &[0xff; 64], b"/tap/material\0\0\0,sf\0"] {
        s.send_to(junk, server.osc_addr()).unwrap();
    }
    send(&server, &tap("unobtainium", 1.0));
    wait_for(&server, |s| s.dropped >= 4);
    send(&server, &tap("wood", 0.5));
    let st = wait_for(&server, |s| s.voices_started >= 1);
    assert_eq!(st.taps, 1);
    server.shutdown();
}

fn ws_request(server: &Server, body: &str) -> serde_json::Value {
    let (mut ws, _) = tungstenite::connect(format!("ws://{}/", server.ws_addr())).unwrap();
    ws.send(Message::text(body)).unwrap();
    let reply = loop {
        match ws.read().unwrap() {
            Message::Text(t) => break t.to_string(),
            _ => continue,
        }
    };
    let _ = ws.close(None);
    serde_json::from_str(&reply).unwrap()
}

fn http_get(server: &Server, path: &str) -> (u16, Vec<u8>) {
    let mut s = TcpStream::connect(server.ws_addr()).unwrap();
    write!(s, "GET {path} HTTP/1.1\r\nHost: x\r\nConnection: close\r\n\r\n").unwrap();
    let mut all = Vec::new();
    s.read_to_end(&mut all).unwrap();
    let split = all.windows(4).position(|w| w == b"\r\n\r\n").unwrap();
    let head = String::from_utf8_lossy(&all[..split]).to_string();
    let code = head.split_whitespace().nth(1).unwrap().parse().unwrap();
    (code, all[split + 4..].to_vec())
}

#[test]
fn scene_world_taps_and_assets() {
    let table = MaterialTable::shipped();
    let dir = tempfile::tempdir().unwrap();
    fixtures::write_scene(dir.path(), &fixtures::grid_scene(&table), Some(&fixtures::grid_backdrop(&table))).unwrap();
    let server = start(Some(dir.path()), None);

    let p = fixtures::grid_point(&table, "Wood").unwrap();
    let v = ws_request(&server, &format!(r#"{{"type":"tap","x":{},"y":{},"z":{},"force":0.6}}"#, p.x, p.y, p.z));
    assert_eq!(v["type"], "result", "{v}");
    assert_eq!(v["material"], "Wood");
    assert_eq!(v["tally"]["Wood"], 5);
    assert!(v["t60_estimate_s"].as_f64().unwrap() > 0.1);
    assert!(v["wav_b64"].as_str().unwrap().len() > 1000);

    let v = ws_request(&server, r#"{"type":"tap","x":0,"y":0,"z":-5,"force":1}"#);
    assert_eq!(v["type"], "error");
    let v = ws_request(&server, "not json");
    assert_eq!(v["type"], "error");

    // the same tap over OSC is rendered
    send(&server, &OscMessage::new("/tap/world", vec![
        OscArg::Float(p.x as f32),
        OscArg::Float(p.y as f32),
        OscArg::Float(p.z as f32),
        OscArg::Float(1.0),
    ]));
    wait_for(&server, |s| s.voices_started >= 1);

    let (code, body) = http_get(&server, "/scene/index.json");
    assert_eq!(code, 200);
    let index: serde_json::Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(index["masks"].as_array().unwrap().len(), 5);
    assert_eq!(index["backdrop"], "backdrop.png");
    assert_eq!(index["masks"][0]["meta"]["width"], 960);
    let (code, body) = http_get(&server, "/scene/mask_000.png");
    assert_eq!(code, 200);
    assert_eq!(&body[1..4], b"PNG");
    assert_eq!(http_get(&server, "/scene/backdrop.png").0, 200);
    assert_eq!(http_get(&server, "/scene/../Cargo.toml").0, 404);
    assert_eq!(http_get(&server, "/elsewhere").0, 404);
    server.shutdown();
}

#[test]
fn concurrent_websocket_clients() {
    let server = Arc::new(start(None, None));
    let handles: Vec<_> = ["Glass", "Wood", "Metal", "Cork"]
        .into_iter()
        .map(|m| {
            let server = server.clone();
            thread::spawn(move || {
                for _ in 0..3 {
                    let v = ws_request(&server, &format!(r#"{{"type":"tap","material":"{m}","force":0.5}}"#));
                    assert_eq!(v["material"], m);
                }
            })
        })
        .collect();
    for h in handles {
        h.join().unwrap();
    }
    let v = ws_request(&server, r#"{"type":"stats"}"#);
    assert_eq!(v["type"], "stats");
    Arc::try_unwrap(server).ok().unwrap().shutdown();
}

#[test]
fn busy_port_is_reported() {
    let holder = UdpSocket::bind("127.0.0.1:0").unwrap();
    let config = ServeConfig {
        osc_port: holder.local_addr().unwrap().port(),
        ws_port: 0,
        ..ServeConfig::default()
    };
    assert!(Server::start(config, Arc::new(MaterialTable::shipped())).is_err());
}
