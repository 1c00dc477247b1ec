//! Encodes a masked and a plaintext upload in the binary wire format and
//! decodes them again.

use std::collections::BTreeMap;

use fedmmf::secagg::wire::{decode_message, encode_message, Payload, WireMessage};
use fedmmf::secagg::{encode, FieldParams};

fn main() -> fedmmf::Result<()> {
    let params = FieldParams::default();
    let grad = vec![0.25, -1.5];

    let plain = WireMessage {
        party_id: 3,
        round: 12,
        heartbeat: true,
        k: 2,
        payload: Payload::Plain(BTreeMap::from([(40, grad.clone())])),
    };
    let masked = WireMessage {
        party_id: 4,
        round: 12,
        heartbeat: true,
        k: 2,
        payload: Payload::Masked(BTreeMap::from([(40, encode(&grad, &params)?)])),
    };

    for msg in [plain, masked] {
        let bytes = encode_message(&msg)?;
        let hex: String = bytes.iter().map(|b| format!("{b:02x}")).collect::<Vec<_>>().join(" ");
        println!("{} bytes: {hex}", bytes.len());
        assert_eq!(decode_message(&bytes)?, msg);
    }

    let mut corrupt = encode_message(&WireMessage {
        party_id: 0,
        round: 0,
        heartbeat: false,
        k: 2,
        payload: Payload::Plain(BTreeMap::new()),
    })?;
    corrupt[0] = b'X';
    println!("bad magic: {}", decode_message(&corrupt).unwrap_err());
    Ok(())
}
