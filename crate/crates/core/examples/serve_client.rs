//! Starts the engine on ephemeral ports, taps it over UDP and WebSocket,
//! and prints what comes back.

use std::net::UdpSocket;
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use sonomat::material::MaterialTable;
use sonomat::osc::{encode_osc, OscArg, OscMessage};
use sonomat::server::{ServeConfig, Server};
use tungstenite::Message;

fn main() {
    let server = Server::start(
        ServeConfig {
            osc_port: 0,
            ws_port: 0,
            ..ServeConfig::default()
        },
        Arc::new(MaterialTable::shipped()),
    )
    .unwrap();
    println!("osc {}  ws {}", server.osc_addr(), server.ws_addr());

    let udp = UdpSocket::bind("127.0.0.1:0").unwrap();
    for name in ["Glass", "Wood", "Metal"] {
        let msg = OscMessage::new("/tap/material", vec![OscArg::Str(name.into()), OscArg::Float(0.8)]);
        udp.send_to(&encode_osc(&msg).unwrap(), server.osc_addr()).unwrap();
        thread::sleep(Duration::from_millis(60));
        let s = server.stats();
        println!("{name:<6} tap-to-sound {:.1} ms", s.last_latency_ms);
    }

    let (mut ws, _) = tungstenite::connect(format!("ws://{}/", server.ws_addr())).unwrap();
    ws.send(Message::text(r#"{"type":"tap","material":"Ceramic","force":1.0}"#)).unwrap();
    if let Message::Text(t) = ws.read().unwrap() {
        let v: serde_json::Value = serde_json::from_str(&t).unwrap();
        println!(
            "ws result: {} modes {} f11 {} Hz, {} bytes of base64 audio",
            v["material"], v["model"]["modes"], v["model"]["f11_hz"], v["wav_b64"].as_str().map_or(0, str::len)
        );
    }
    ws.send(Message::text(r#"{"type":"stats"}"#)).unwrap();
    if let Message::Text(t) = ws.read().unwrap() {
        println!("ws stats: {t}");
    }
    let _ = ws.close(None);
    server.shutdown();
}
