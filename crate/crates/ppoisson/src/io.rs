//! Field serialization.
//!
//! CSV: a header `vertex,c0,c1,...` followed by one row per vertex.
//!
//! Binary layout (all little-endian):
//!
//! | offset | size | content                     |
//! |--------|------|-----------------------------|
//! | 0      | 8    | magic `PPFIELD\0`           |
//! | 8      | 4    | format version (u32, = 1)   |
//! | 12     | 8    | vertex count (u64)          |
//! | 20     | 4    | component count (u32)       |
//! | 24     | 8·V·C| values, vertex-major `f64`  |

use std::io::{BufRead, Read, Write};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"PPFIELD\0";
pub const VERSION: u32 = 1;

/// Per-vertex data with `components` values per vertex, vertex-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldData {
    pub components: usize,
    pub values: Vec<f64>,
}

impl FieldData {
    pub fn scalar(values: Vec<f64>) -> Self {
        FieldData { components: 1, values }
    }

    pub fn vertices(&self) -> usize {
        self.values.len() / self.components.max(1)
    }
}

pub fn write_csv(mut w: impl Write, field: &FieldData) -> Result<()> {
    write!(w, "vertex")?;
    for c in 0..field.components {
        write!(w, ",c{c}")?;
    }
    writeln!(w)?;
    for v in 0..field.vertices() {
        write!(w, "{v}")?;
        for c in 0..field.components {
            // `{:?}` round-trips f64 exactly
            write!(w, ",{:?}", field.values[v * field.components + c])?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn read_csv(r: impl BufRead) -> Result<FieldData> {
    let mut lines = r.lines();
    let header = lines.next().ok_or_else(|| Error::Format("empty CSV".into()))??;
    let components = header.split(',').count().saturating_sub(1);
    if components == 0 {
        return Err(Error::Format("CSV header has no value columns".into()));
    }
    let mut values = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut cols = line.split(',');
        let id: usize =
            cols.next().and_then(|s| s.trim().parse().ok()).ok_or_else(|| Error::Parse { line: i + 2, msg: "bad vertex id".into() })?;
        if id != values.len() / components {
            return Err(Error::Parse { line: i + 2, msg: format!("vertex id {id} out of sequence") });
        }
        let row: Vec<f64> = cols
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse { line: i + 2, msg: e.to_string() })?;
        if row.len() != components {
            return Err(Error::Parse { line: i + 2, msg: format!("expected {components} values") });
        }
        values.extend(row);
    }
    Ok(FieldData { components, values })
}

pub fn write_binary(mut w: impl Write, field: &FieldData) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(field.vertices() as u64).to_le_bytes())?;
    w.write_all(&(field.components as u32).to_le_bytes())?;
    for x in &field.values {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_binary(mut r: impl Read) -> Result<FieldData> {
    let mut head = [0u8; 24];
    r.read_exact(&mut head)?;
    if &head[0..8] != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let version = u32::from_le_bytes(head[8..12].try_into().unwrap());
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let nv = u64::from_le_bytes(head[12..20].try_into().unwrap()) as usize;
    let components = u32::from_le_bytes(head[20..24].try_into().unwrap()) as usize;
    let mut buf = vec![0u8; 8 * nv * components];
    r.read_exact(&mut buf)?;
    let values = buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Ok(FieldData { components, values })
}
