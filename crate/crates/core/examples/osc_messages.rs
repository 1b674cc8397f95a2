//! Encodes the control messages the engine understands, shows their wire
//! bytes, and decodes them back into commands.

use sonomat::osc::{decode_osc, encode_osc, Command, TapRequest};

fn hex(bytes: &[u8]) -> String {
    bytes.chunks(4).map(|c| c.iter().map(|b| format!("{b:02x}")).collect::<String>()).collect::<Vec<_>>().join(" ")
}

fn main() {
    let commands = [
        Command::Tap(TapRequest::Material {
            material: "glass".into(),
            force: 0.8,
        }),
        Command::Tap(TapRequest::World {
            x: 0.1,
            y: -0.05,
            z: 2.0,
            force: 1.0,
        }),
        Command::SetPlateMaterial("Metal".into()),
    ];
    for cmd in &commands {
        let bytes = encode_osc(&cmd.to_osc()).unwrap();
        let back = Command::from_osc(&decode_osc(&bytes).unwrap()).unwrap();
        println!("{} ({} bytes)\n  {}\n  -> {back:?}", cmd.to_osc().address, bytes.len(), hex(&bytes));
    }
    for bad in [&b"/tap"[..], b"/tap/material\0\0\0,sf\0", b"nope\0\0\0\0"] {
        println!("{:?}: {}", String::from_utf8_lossy(bad), decode_osc(bad).unwrap_err());
    }
    let json = r#"{"type":"tap","material":"Wood","force":0.5}"#;
    println!("{json} -> {:?}", TapRequest::from_json(json));
}
