//! Interchange formats for embedding tables.
//!
//! CSV: UTF-8, header `id,label,d0,...,d{D-1}`, one record per line, LF
//! endings, RFC-4180 quoting when a field needs it.
//!
//! Binary (little-endian throughout):
//!
//! ```text
//! "MMDE" | version: u8 = 1 | record_count: u32 | dim: u32
//! per record: id_len: u16 | id: utf-8 | label_len: u16 | label: utf-8 | dim x f32
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::table::{EmbeddingRecord, EmbeddingTable};

pub const MAGIC: &[u8; 4] = b"MMDE";
pub const BINARY_VERSION: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Csv,
    Binary,
}

impl TableFormat {
    /// Format implied by a file extension (`.csv` or anything else as binary).
    pub fn from_extension(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => TableFormat::Csv,
            _ => TableFormat::Binary,
        }
    }

    /// Sniffs the magic bytes of an existing file.
    pub fn detect(path: &Path) -> Result<Self> {
        let mut head = [0u8; 4];
        let mut f = File::open(path)?;
        let n = f.read(&mut head)?;
        Ok(if n == 4 && &head == MAGIC {
            TableFormat::Binary
        } else {
            TableFormat::Csv
        })
    }
}

pub fn load_table(path: &Path, format: TableFormat) -> Result<EmbeddingTable> {
    let file = File::open(path)?;
    let tag = path.display().to_string();
    match format {
        TableFormat::Csv => read_csv(BufReader::new(file), tag),
        TableFormat::Binary => read_binary(BufReader::new(file), tag),
    }
}

pub fn save_table(table: &EmbeddingTable, path: &Path, format: TableFormat) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    match format {
        TableFormat::Csv => write_csv(table, &mut w)?,
        TableFormat::Binary => write_binary(table, &mut w)?,
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(reader: R, source_tag: String) -> Result<EmbeddingTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.len() < 3 || &header[0] != "id" || &header[1] != "label" {
        return Err(Error::MalformedHeader(
            "expected `id,label,d0,...`".to_string(),
        ));
    }
    let dim = header.len() - 2;
    for (k, name) in header.iter().skip(2).enumerate() {
        if name != format!("d{k}") {
            return Err(Error::MalformedHeader(format!(
                "column {} is {name:?}, expected \"d{k}\"",
                k + 2
            )));
        }
    }

    let mut records = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != dim + 2 {
            return Err(Error::RaggedRow {
                row,
                expected: dim,
                found: rec.len().saturating_sub(2),
            });
        }
        let mut vector = Vec::with_capacity(dim);
        for (column, field) in rec.iter().skip(2).enumerate() {
            let v: f32 = field.trim().parse().map_err(|_| Error::BadNumber {
                row,
                value: field.to_string(),
            })?;
            if !v.is_finite() {
                return Err(Error::NonFinite { row, column });
            }
            vector.push(v);
        }
        records.push(EmbeddingRecord {
            id: rec[0].to_string(),
            group_label: rec[1].to_string(),
            vector,
        });
    }
    EmbeddingTable::new(records, source_tag)
}

pub fn write_csv<W: Write>(table: &EmbeddingTable, w: W) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w);
    let mut header = vec!["id".to_string(), "label".to_string()];
    header.extend((0..table.dim()).map(|k| format!("d{k}")));
    wtr.write_record(&header)?;
    let mut row: Vec<String> = Vec::with_capacity(table.dim() + 2);
    for rec in table.records() {
        row.clear();
        row.push(rec.id.clone());
        row.push(rec.group_label.clone());
        // Shortest representation that parses back to the same f32.
        row.extend(rec.vector.iter().map(|v| v.to_string()));
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_binary<W: Write>(table: &EmbeddingTable, w: &mut W) -> Result<()> {
    let count = u32::try_from(table.len())
        .map_err(|_| Error::BadBinary("too many records for u32 count".into()))?;
    let dim = u32::try_from(table.dim())
        .map_err(|_| Error::BadBinary("dimension exceeds u32".into()))?;
    w.write_all(MAGIC)?;
    w.write_all(&[BINARY_VERSION])?;
    w.write_all(&count.to_le_bytes())?;
    w.write_all(&dim.to_le_bytes())?;
    for rec in table.records() {
        write_str(w, &rec.id)?;
        write_str(w, &rec.group_label)?;
        for v in &rec.vector {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn write_str<W: Write>(w: &mut W, s: &str) -> Result<()> {
    let len = u16::try_from(s.len())
        .map_err(|_| Error::BadBinary(format!("string of {} bytes exceeds u16 length", s.len())))?;
    w.write_all(&len.to_le_bytes())?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

pub fn read_binary<R: Read>(mut r: R, source_tag: String) -> Result<EmbeddingTable> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| Error::BadBinary("truncated header".into()))?;
    if &magic != MAGIC {
        return Err(Error::BadBinary("bad magic".into()));
    }
    let mut version = [0u8; 1];
    r.read_exact(&mut version)
        .map_err(|_| Error::BadBinary("truncated header".into()))?;
    if version[0] != BINARY_VERSION {
        return Err(Error::BadBinary(format!(
            "unsupported version {}",
            version[0]
        )));
    }
    let count = read_u32(&mut r).map_err(|_| Error::BadBinary("truncated header".into()))? as usize;
    let dim = read_u32(&mut r).map_err(|_| Error::BadBinary("truncated header".into()))? as usize;

    let mut records = Vec::with_capacity(count.min(1 << 20));
    let mut buf = vec![0u8; dim * 4];
    for row in 0..count {
        let truncated = |_| Error::BadBinary(format!("row {row}: truncated record"));
        let id = read_str(&mut r, row)?;
        let group_label = read_str(&mut r, row)?;
        r.read_exact(&mut buf).map_err(truncated)?;
        let vector = buf
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        records.push(EmbeddingRecord {
            id,
            group_label,
            vector,
        });
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(Error::BadBinary("trailing bytes after last record".into()));
    }
    EmbeddingTable::new(records, source_tag)
}

fn read_u32<R: Read>(r: &mut R) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_str<R: Read>(r: &mut R, row: usize) -> Result<String> {
    let mut len = [0u8; 2];
    r.read_exact(&mut len)
        .map_err(|_| Error::BadBinary(format!("row {row}: truncated record")))?;
    let mut bytes = vec![0u8; u16::from_le_bytes(len) as usize];
    r.read_exact(&mut bytes)
        .map_err(|_| Error::BadBinary(format!("row {row}: truncated record")))?;
    String::from_utf8(bytes).map_err(|_| Error::BadBinary(format!("row {row}: invalid utf-8")))
}
