//! Canonical dataset cache.
//!
//! Two interchangeable encodings, both bit-exact under round-trip:
//!
//! **Binary** (little-endian throughout):
//! ```text
//! magic   b"PSQD"
//! version u32 = 1
//! n_users u64, n_items u64
//! users   n_users × (len u32, utf-8 bytes)        dense-id order
//! items   n_items × (len u32, utf-8 bytes)        dense-id order
//! seqs    n_users × (len u32, len × (item u32, timestamp i64))
//! splits  n_users × (tag u8: 0 none / 1 some, [valid u64, test u64])
//! ```
//!
//! **NDJSON**: one header object, one `users` object, one `items`
//! object (dense-id order pins id assignment), then one `seq` object
//! per user with `[item, timestamp]` pairs in dense item ids.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use sha2::{Digest, Sha256};

use super::{InteractionDataset, SplitPoints};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"PSQD";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CacheFormat {
    Binary,
    Ndjson,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::io(path, e)
}

pub fn save_cache(ds: &InteractionDataset, path: &Path, format: CacheFormat) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    match format {
        CacheFormat::Binary => {
            w.write_all(&encode_binary(ds)).map_err(io_err(path))?;
        }
        CacheFormat::Ndjson => write_ndjson(ds, &mut w).map_err(io_err(path))?,
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

pub fn load_cache(path: &Path) -> Result<InteractionDataset> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut r = BufReader::new(file);
    let mut head = [0u8; 4];
    r.read_exact(&mut head).map_err(io_err(path))?;
    if &head == MAGIC {
        let mut rest = Vec::new();
        r.read_to_end(&mut rest).map_err(io_err(path))?;
        decode_binary(&rest)
    } else {
        // Not binary: re-read as NDJSON from the start.
        let mut text = String::new();
        let file = File::open(path).map_err(io_err(path))?;
        BufReader::new(file)
            .read_to_string(&mut text)
            .map_err(io_err(path))?;
        read_ndjson(&text)
    }
}

/// Hex SHA-256 of the canonical binary encoding; used as the dataset
/// identity in checkpoints and reports.
pub fn fingerprint(ds: &InteractionDataset) -> String {
    let bytes = encode_binary(ds);
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    hex(&hasher.finalize())
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub(crate) fn encode_binary(ds: &InteractionDataset) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.write_u32::<LittleEndian>(VERSION).unwrap();
    out.write_u64::<LittleEndian>(ds.users.len() as u64).unwrap();
    out.write_u64::<LittleEndian>(ds.items.len() as u64).unwrap();
    for name in ds.users.iter().chain(ds.items.iter()) {
        out.write_u32::<LittleEndian>(name.len() as u32).unwrap();
        out.extend_from_slice(name.as_bytes());
    }
    for seq in &ds.sequences {
        out.write_u32::<LittleEndian>(seq.len() as u32).unwrap();
        for &(item, ts) in seq {
            out.write_u32::<LittleEndian>(item).unwrap();
            out.write_i64::<LittleEndian>(ts).unwrap();
        }
    }
    for split in &ds.splits {
        match split {
            None => out.write_u8(0).unwrap(),
            Some(sp) => {
                out.write_u8(1).unwrap();
                out.write_u64::<LittleEndian>(sp.valid as u64).unwrap();
                out.write_u64::<LittleEndian>(sp.test as u64).unwrap();
            }
        }
    }
    out
}

fn decode_binary(mut r: &[u8]) -> Result<InteractionDataset> {
    let bad = |what: &str| Error::data(format!("corrupt dataset cache: {what}"));
    let version = r.read_u32::<LittleEndian>().map_err(|_| bad("version"))?;
    if version != VERSION {
        return Err(Error::data(format!(
            "unsupported dataset cache version {version}"
        )));
    }
    let n_users = r.read_u64::<LittleEndian>().map_err(|_| bad("n_users"))? as usize;
    let n_items = r.read_u64::<LittleEndian>().map_err(|_| bad("n_items"))? as usize;
    let read_name = |r: &mut &[u8]| -> Result<String> {
        let len = r.read_u32::<LittleEndian>().map_err(|_| bad("name len"))? as usize;
        let mut buf = vec![0u8; len];
        r.read_exact(&mut buf).map_err(|_| bad("name bytes"))?;
        String::from_utf8(buf).map_err(|_| bad("name utf-8"))
    };
    let users: Vec<String> = (0..n_users)
        .map(|_| read_name(&mut r))
        .collect::<Result<_>>()?;
    let items: Vec<String> = (0..n_items)
        .map(|_| read_name(&mut r))
        .collect::<Result<_>>()?;
    let mut sequences = Vec::with_capacity(n_users);
    for _ in 0..n_users {
        let len = r.read_u32::<LittleEndian>().map_err(|_| bad("seq len"))? as usize;
        let mut seq = Vec::with_capacity(len);
        for _ in 0..len {
            let item = r.read_u32::<LittleEndian>().map_err(|_| bad("item"))?;
            let ts = r.read_i64::<LittleEndian>().map_err(|_| bad("timestamp"))?;
            if item as usize >= n_items {
                return Err(bad("item id out of range"));
            }
            seq.push((item, ts));
        }
        sequences.push(seq);
    }
    let mut splits = Vec::with_capacity(n_users);
    for _ in 0..n_users {
        let tag = r.read_u8().map_err(|_| bad("split tag"))?;
        splits.push(match tag {
            0 => None,
            1 => {
                let valid = r.read_u64::<LittleEndian>().map_err(|_| bad("valid"))? as usize;
                let test = r.read_u64::<LittleEndian>().map_err(|_| bad("test"))? as usize;
                Some(SplitPoints { valid, test })
            }
            _ => return Err(bad("split tag value")),
        });
    }
    InteractionDataset::from_parts(users, items, sequences, splits)
}

#[derive(serde::Serialize, serde::Deserialize)]
struct JsonHeader {
    kind: String,
    version: u32,
}

#[derive(serde::Serialize, serde::Deserialize)]
struct JsonNames {
    kind: String,
    ids: Vec<String>,
}

#[derive(serde::Serialize, serde::Deserialize)]
struct JsonSeq {
    kind: String,
    user: u32,
    events: Vec<(u32, i64)>,
    valid: Option<u64>,
    test: Option<u64>,
}

fn write_ndjson<W: Write>(ds: &InteractionDataset, w: &mut W) -> std::io::Result<()> {
    let header = JsonHeader {
        kind: "header".into(),
        version: VERSION,
    };
    serde_json::to_writer(&mut *w, &header)?;
    w.write_all(b"\n")?;
    for (kind, ids) in [("users", &ds.users), ("items", &ds.items)] {
        let names = JsonNames {
            kind: kind.into(),
            ids: ids.clone(),
        };
        serde_json::to_writer(&mut *w, &names)?;
        w.write_all(b"\n")?;
    }
    for (u, seq) in ds.sequences.iter().enumerate() {
        let rec = JsonSeq {
            kind: "seq".into(),
            user: u as u32,
            events: seq.clone(),
            valid: ds.splits[u].map(|sp| sp.valid as u64),
            test: ds.splits[u].map(|sp| sp.test as u64),
        };
        serde_json::to_writer(&mut *w, &rec)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

fn read_ndjson(text: &str) -> Result<InteractionDataset> {
    let bad = |what: &str| Error::data(format!("corrupt ndjson dataset cache: {what}"));
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: JsonHeader =
        serde_json::from_str(lines.next().ok_or_else(|| bad("missing header"))?)
            .map_err(|e| bad(&format!("header: {e}")))?;
    if header.version != VERSION {
        return Err(bad("version"));
    }
    let users: JsonNames = serde_json::from_str(lines.next().ok_or_else(|| bad("missing users"))?)
        .map_err(|e| bad(&format!("users: {e}")))?;
    let items: JsonNames = serde_json::from_str(lines.next().ok_or_else(|| bad("missing items"))?)
        .map_err(|e| bad(&format!("items: {e}")))?;
    let mut sequences = vec![Vec::new(); users.ids.len()];
    let mut splits = vec![None; users.ids.len()];
    for line in lines {
        let rec: JsonSeq = serde_json::from_str(line).map_err(|e| bad(&format!("seq: {e}")))?;
        let u = rec.user as usize;
        if u >= sequences.len() {
            return Err(bad("user id out of range"));
        }
        sequences[u] = rec.events;
        if let (Some(valid), Some(test)) = (rec.valid, rec.test) {
            splits[u] = Some(SplitPoints {
                valid: valid as usize,
                test: test as usize,
            });
        }
    }
    InteractionDataset::from_parts(users.ids, items.ids, sequences, splits)
}
