//! Columnar binary cache for popularity tables.
//!
//! Layout (little-endian):
//! ```text
//! magic    b"PSQP", version u32 = 1
//! kind     u8 (0 fixed-width, 1 calendar)
//! origin   i64, fine_len i64, coarse_fine_ratio u32
//! gamma    f64, include_inactive u8
//! k, m, n  u32 each, offset i64        (window geometry)
//! n_items, n_fine, n_coarse  u64 each
//! then per-item period-major arrays:
//!   active_from_fine   n_items × i64
//!   active_from_coarse n_items × i64
//!   fine_counts        n_items × n_fine   × u32
//!   coarse_counts      n_items × n_coarse × u32
//!   discounted         n_items × n_coarse × f64
//!   pct_fine           n_items × n_fine   × f32
//!   pct_coarse         n_items × n_coarse × f32
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::{BucketingKind, PopConfig, PopularityTable, TimeBucketing, WindowParams};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"PSQP";
const VERSION: u32 = 1;

pub fn save_pop_cache(table: &PopularityTable, windows: &WindowParams, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_all(table, windows, &mut w).map_err(|e| Error::io(path, e))
}

fn write_all<W: Write>(
    table: &PopularityTable,
    windows: &WindowParams,
    w: &mut W,
) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(VERSION)?;
    w.write_u8(match table.bucketing.kind {
        BucketingKind::FixedWidth => 0,
        BucketingKind::Calendar => 1,
    })?;
    w.write_i64::<LittleEndian>(table.bucketing.origin)?;
    w.write_i64::<LittleEndian>(table.bucketing.fine_len)?;
    w.write_u32::<LittleEndian>(table.bucketing.coarse_fine_ratio)?;
    w.write_f64::<LittleEndian>(table.config.gamma)?;
    w.write_u8(table.config.include_inactive as u8)?;
    w.write_u32::<LittleEndian>(windows.k as u32)?;
    w.write_u32::<LittleEndian>(windows.m as u32)?;
    w.write_u32::<LittleEndian>(windows.n as u32)?;
    w.write_i64::<LittleEndian>(windows.offset)?;
    w.write_u64::<LittleEndian>(table.n_items as u64)?;
    w.write_u64::<LittleEndian>(table.n_fine as u64)?;
    w.write_u64::<LittleEndian>(table.n_coarse as u64)?;
    let parts = table.raw_parts();
    for &x in parts.active_from_fine {
        w.write_i64::<LittleEndian>(x)?;
    }
    for &x in parts.active_from_coarse {
        w.write_i64::<LittleEndian>(x)?;
    }
    for &x in parts.fine_counts {
        w.write_u32::<LittleEndian>(x)?;
    }
    for &x in parts.coarse_counts {
        w.write_u32::<LittleEndian>(x)?;
    }
    for &x in parts.discounted {
        w.write_f64::<LittleEndian>(x)?;
    }
    for &x in parts.pct_fine {
        w.write_f32::<LittleEndian>(x)?;
    }
    for &x in parts.pct_coarse {
        w.write_f32::<LittleEndian>(x)?;
    }
    w.flush()
}

pub fn load_pop_cache(path: &Path) -> Result<(PopularityTable, WindowParams)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    read_all(&mut r).map_err(|e| match e {
        ReadErr::Io(e) => Error::io(path, e),
        ReadErr::Bad(msg) => Error::data(format!("corrupt popularity cache {}: {msg}", path.display())),
    })
}

enum ReadErr {
    Io(std::io::Error),
    Bad(String),
}

impl From<std::io::Error> for ReadErr {
    fn from(e: std::io::Error) -> Self {
        ReadErr::Io(e)
    }
}

fn read_all<R: Read>(r: &mut R) -> std::result::Result<(PopularityTable, WindowParams), ReadErr> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(ReadErr::Bad("bad magic".into()));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != VERSION {
        return Err(ReadErr::Bad(format!("unsupported version {version}")));
    }
    let kind = match r.read_u8()? {
        0 => BucketingKind::FixedWidth,
        1 => BucketingKind::Calendar,
        x => return Err(ReadErr::Bad(format!("bad bucketing kind {x}"))),
    };
    let origin = r.read_i64::<LittleEndian>()?;
    let fine_len = r.read_i64::<LittleEndian>()?;
    let ratio = r.read_u32::<LittleEndian>()?;
    let gamma = r.read_f64::<LittleEndian>()?;
    let include_inactive = r.read_u8()? != 0;
    let k = r.read_u32::<LittleEndian>()? as usize;
    let m = r.read_u32::<LittleEndian>()? as usize;
    let n = r.read_u32::<LittleEndian>()? as usize;
    let offset = r.read_i64::<LittleEndian>()?;
    let n_items = r.read_u64::<LittleEndian>()? as usize;
    let n_fine = r.read_u64::<LittleEndian>()? as usize;
    let n_coarse = r.read_u64::<LittleEndian>()? as usize;

    let bucketing = TimeBucketing::from_raw(kind, origin, fine_len, ratio)
        .map_err(|e| ReadErr::Bad(e.to_string()))?;
    let windows = WindowParams::new(k, m, n, offset).map_err(|e| ReadErr::Bad(e.to_string()))?;

    let mut active_from_fine = vec![0i64; n_items];
    let mut active_from_coarse = vec![0i64; n_items];
    r.read_i64_into::<LittleEndian>(&mut active_from_fine)?;
    r.read_i64_into::<LittleEndian>(&mut active_from_coarse)?;
    let mut fine_counts = vec![0u32; n_items * n_fine];
    let mut coarse_counts = vec![0u32; n_items * n_coarse];
    r.read_u32_into::<LittleEndian>(&mut fine_counts)?;
    r.read_u32_into::<LittleEndian>(&mut coarse_counts)?;
    let mut discounted = vec![0f64; n_items * n_coarse];
    r.read_f64_into::<LittleEndian>(&mut discounted)?;
    let mut pct_fine = vec![0f32; n_items * n_fine];
    let mut pct_coarse = vec![0f32; n_items * n_coarse];
    r.read_f32_into::<LittleEndian>(&mut pct_fine)?;
    r.read_f32_into::<LittleEndian>(&mut pct_coarse)?;

    let table = PopularityTable::from_raw_parts(
        bucketing,
        PopConfig {
            gamma,
            include_inactive,
        },
        n_items,
        n_fine,
        n_coarse,
        fine_counts,
        coarse_counts,
        discounted,
        pct_coarse,
        pct_fine,
        active_from_fine,
        active_from_coarse,
    );
    Ok((table, windows))
}
