//! Binary dataset files and CSV import.
//!
//! Layout: `DRSA`, format version (u32 LE), rows and cols (u64 LE each),
//! row-major f64 LE values, then a u64 LE length and that many bytes of
//! UTF-8 JSON holding scaling metadata, splits and provenance.

use std::path::Path;

use diresa_core::data::{Scaling, Split};
use diresa_core::{data::Dataset, Matrix};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::fsutil;

pub const MAGIC: &[u8; 4] = b"DRSA";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 8 + 8;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Trailer {
    scaling: Option<Scaling>,
    splits: Vec<Split>,
    provenance: String,
}

pub fn encode_dataset(ds: &Dataset) -> Vec<u8> {
    let trailer = serde_json::to_vec(&Trailer {
        scaling: ds.scaling.clone(),
        splits: ds.splits.clone(),
        provenance: ds.provenance.clone(),
    })
    .expect("trailer serializes");
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * ds.data.as_slice().len() + 8 + trailer.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(ds.n_samples() as u64).to_le_bytes());
    out.extend_from_slice(&(ds.n_features() as u64).to_le_bytes());
    for v in ds.data.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&(trailer.len() as u64).to_le_bytes());
    out.extend_from_slice(&trailer);
    out
}

/// Cursor over a byte slice whose errors report the byte offset.
struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(CliError::format(
                self.path,
                self.bytes.len() as u64,
                format!("truncated {what}: need {n} bytes at offset {}", self.pos),
            )),
        }
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn err(&self, offset: usize, message: impl Into<String>) -> CliError {
        CliError::format(self.path, offset as u64, message)
    }
}

/// Parses a dataset file image; `path` is only used in error messages.
pub fn decode_dataset(bytes: &[u8], path: &Path) -> Result<Dataset> {
    let mut r = Reader { bytes, pos: 0, path };
    let magic = r.take(4, "magic")?;
    if magic != MAGIC {
        return Err(r.err(0, format!("bad magic {magic:?}, expected \"DRSA\"")));
    }
    let version = r.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(r.err(4, format!("unsupported format version {version}")));
    }
    let rows = r.u64("row count")?;
    let cols = r.u64("column count")?;
    let count = rows
        .checked_mul(cols)
        .and_then(|c| c.checked_mul(8))
        .and_then(|c| usize::try_from(c).ok())
        .ok_or_else(|| r.err(8, format!("shape {rows}×{cols} overflows")))?;
    let data_start = r.pos;
    let raw = r.take(count, "data block")?;
    let values: Vec<f64> = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    let trailer_at = r.pos;
    let len = r.u64("trailer length")?;
    let len = usize::try_from(len).map_err(|_| r.err(trailer_at, "trailer length overflows"))?;
    let json_at = r.pos;
    let json = r.take(len, "trailer")?;
    if r.pos != bytes.len() {
        return Err(r.err(r.pos, format!("{} trailing bytes after trailer", bytes.len() - r.pos)));
    }
    let trailer: Trailer = serde_json::from_slice(json).map_err(|e| {
        // serde_json reports line/column; the trailer is one line
        r.err(json_at + e.column().saturating_sub(1), format!("invalid trailer JSON: {e}"))
    })?;
    let data = Matrix::from_vec(rows as usize, cols as usize, values)
        .map_err(|e| r.err(data_start, e.to_string()))?;
    let ds = Dataset {
        data,
        scaling: trailer.scaling,
        splits: trailer.splits,
        provenance: trailer.provenance,
    };
    ds.validate().map_err(|e| r.err(json_at, e.to_string()))?;
    Ok(ds)
}

pub fn save_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    fsutil::atomic_write(path, &encode_dataset(ds))
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    decode_dataset(&fsutil::read(path)?, path)
}

/// Reads comma-separated numeric rows. A first line with any non-numeric
/// field is treated as a header. The result has no splits or scaling.
pub fn import_csv(path: &Path) -> Result<Dataset> {
    let bytes = fsutil::read(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(bytes.as_slice());
    let mut values = Vec::new();
    let mut cols = None;
    let mut rows = 0usize;
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| {
            let offset = e.position().map_or(0, |p| p.byte());
            CliError::format(path, offset, e.to_string())
        })?;
        let offset = record.position().map_or(0, |p| p.byte());
        let parsed: std::result::Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        let row = match parsed {
            Ok(row) => row,
            Err(_) if i == 0 => continue,
            Err(e) => {
                return Err(CliError::format(path, offset, format!("line {}: {e}", i + 1)));
            }
        };
        match cols {
            None => cols = Some(row.len()),
            Some(c) if c != row.len() => {
                return Err(CliError::format(
                    path,
                    offset,
                    format!("line {} has {} fields, expected {c}", i + 1, row.len()),
                ));
            }
            _ => {}
        }
        values.extend(row);
        rows += 1;
    }
    let cols = cols.ok_or_else(|| CliError::format(path, 0, "no numeric rows"))?;
    let data = Matrix::from_vec(rows, cols, values)?;
    Ok(Dataset::unsplit(data, format!("csv import of {}", path.display())))
}
