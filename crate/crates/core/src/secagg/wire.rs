//! Per-round upload message.
//!
//! All integers little-endian:
//!
//! ```text
//! offset  size  field
//! 0       4     magic "FMMF"
//! 4       1     version (1)
//! 5       1     group tag: 0 = secure (plaintext), 1 = insecure (masked)
//! 6       1     heartbeat: 1 = alive, 0 = announcing dropout
//! 7       1     reserved, 0
//! 8       4     party_id (u32)
//! 12      4     round (u32)
//! 16      4     k (u32)
//! 20      4     n_items (u32)
//! 24      ...   n_items x { item_id (u32), k x entry (u64) }
//! ```
//!
//! Masked entries are field elements in `[0, l)`; plaintext entries are the
//! IEEE-754 bit patterns of the f64 gradient components, so plaintext sums
//! stay bit-exact across the wire.

use std::collections::BTreeMap;

use super::field::FieldVector;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"FMMF";
pub const WIRE_VERSION: u8 = 1;
const HEADER_LEN: usize = 24;

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Plain(BTreeMap<usize, Vec<f64>>),
    Masked(BTreeMap<usize, FieldVector>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct WireMessage {
    pub party_id: u32,
    pub round: u32,
    pub heartbeat: bool,
    pub k: u32,
    pub payload: Payload,
}

fn narrow(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Wire(format!("{what} {v} does not fit in u32")))
}

pub fn encode_message(msg: &WireMessage) -> Result<Vec<u8>> {
    let k = msg.k as usize;
    let (tag, n_items) = match &msg.payload {
        Payload::Plain(m) => (0u8, m.len()),
        Payload::Masked(m) => (1u8, m.len()),
    };
    let mut out = Vec::with_capacity(HEADER_LEN + n_items * (4 + 8 * k));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[WIRE_VERSION, tag, msg.heartbeat as u8, 0]);
    out.extend_from_slice(&msg.party_id.to_le_bytes());
    out.extend_from_slice(&msg.round.to_le_bytes());
    out.extend_from_slice(&msg.k.to_le_bytes());
    out.extend_from_slice(&narrow(n_items, "item count")?.to_le_bytes());
    let mut entry = |item: usize, words: &mut dyn Iterator<Item = u64>, len: usize| -> Result<()> {
        if len != k {
            return Err(Error::Wire(format!("item {item} has {len} entries, header says {k}")));
        }
        out.extend_from_slice(&narrow(item, "item id")?.to_le_bytes());
        words.for_each(|w| out.extend_from_slice(&w.to_le_bytes()));
        Ok(())
    };
    match &msg.payload {
        Payload::Plain(m) => {
            for (&item, g) in m {
                entry(item, &mut g.iter().map(|v| v.to_bits()), g.len())?;
            }
        }
        Payload::Masked(m) => {
            for (&item, fv) in m {
                entry(item, &mut fv.0.iter().copied(), fv.len())?;
            }
        }
    }
    Ok(out)
}

pub fn decode_message(bytes: &[u8]) -> Result<WireMessage> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Wire(format!("{} bytes is shorter than the header", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::Wire("bad magic".into()));
    }
    if bytes[4] != WIRE_VERSION {
        return Err(Error::Wire(format!("unsupported version {}", bytes[4])));
    }
    let tag = bytes[5];
    let heartbeat = match bytes[6] {
        0 => false,
        1 => true,
        b => return Err(Error::Wire(format!("bad heartbeat byte {b}"))),
    };
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"));
    let party_id = word(8);
    let round = word(12);
    let k = word(16);
    let n_items = word(20) as usize;
    let entry_len = 4 + 8 * k as usize;
    if bytes.len() != HEADER_LEN + n_items * entry_len {
        return Err(Error::Wire(format!(
            "length {} does not match {n_items} items of dimension {k}",
            bytes.len()
        )));
    }
    let entries = (0..n_items).map(|n| {
        let at = HEADER_LEN + n * entry_len;
        let item = word(at) as usize;
        let words: Vec<u64> = (0..k as usize)
            .map(|j| {
                let w = at + 4 + 8 * j;
                u64::from_le_bytes(bytes[w..w + 8].try_into().expect("8 bytes"))
            })
            .collect();
        (item, words)
    });
    let payload = match tag {
        0 => Payload::Plain(
            entries
                .map(|(item, words)| (item, words.into_iter().map(f64::from_bits).collect()))
                .collect(),
        ),
        1 => Payload::Masked(entries.map(|(item, words)| (item, FieldVector(words))).collect()),
        t => return Err(Error::Wire(format!("unknown group tag {t}"))),
    };
    Ok(WireMessage {
        party_id,
        round,
        heartbeat,
        k,
        payload,
    })
}
