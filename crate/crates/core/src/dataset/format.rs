//! Matrix files: a small text CSV form and a little-endian binary form.
//!
//! Both store one sample per row (designs: `m × d`; snapshots:
//! `n_samples × field_dim`).
//!
//! CSV: first line `# rows=<n> cols=<m> tag=<tag>`, then `n` lines of `m`
//! comma-separated values. Binary: `MFRM`, u32 version (1), u64 rows,
//! u64 cols, then `rows * cols` f64 values in column-major order.
//!
//! A zero-byte file reads as an empty matrix.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;

use super::{DesignMatrix, Fidelity, SnapshotMatrix};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"MFRM";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 8 + 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Encoding {
    #[default]
    Binary,
    Csv,
}

/// A decoded matrix file.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixFile {
    pub values: DMatrix<f64>,
    /// Free-form label from the CSV header; empty for binary files.
    pub tag: String,
}

/// Write `bytes` to a sibling temp file, then rename over `path`.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let name = path
        .file_name()
        .ok_or_else(|| Error::invalid(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(
        ".{}.tmp{}",
        name.to_string_lossy(),
        std::process::id()
    ));
    let res = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = res {
        let _ = fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}

pub fn encode_binary(m: &DMatrix<f64>) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * m.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(m.nrows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.ncols() as u64).to_le_bytes());
    for v in m.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn encode_csv(m: &DMatrix<f64>, tag: &str) -> String {
    let mut out = format!("# rows={} cols={} tag={}\n", m.nrows(), m.ncols(), tag);
    for i in 0..m.nrows() {
        let line: Vec<String> = m.row(i).iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

fn format_err(path: &Path, offset: usize, msg: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        offset: offset as u64,
        msg: msg.into(),
    }
}

fn read_u64(bytes: &[u8], at: usize) -> u64 {
    u64::from_le_bytes(bytes[at..at + 8].try_into().expect("8 bytes"))
}

pub fn decode_binary(path: &Path, bytes: &[u8]) -> Result<DMatrix<f64>> {
    if bytes.len() < HEADER_LEN {
        return Err(format_err(path, bytes.len(), "truncated header"));
    }
    if &bytes[..4] != MAGIC {
        return Err(format_err(path, 0, "bad magic"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(format_err(path, 4, format!("unsupported version {version}")));
    }
    let rows = read_u64(bytes, 8) as usize;
    let cols = read_u64(bytes, 16) as usize;
    let n = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| format_err(path, 8, "matrix size overflows"))?;
    let body = &bytes[HEADER_LEN..];
    if body.len() < n {
        let whole = HEADER_LEN + body.len() / 8 * 8;
        return Err(format_err(
            path,
            whole,
            format!("truncated data: expected {} values, file holds {}", rows * cols, body.len() / 8),
        ));
    }
    if body.len() > n {
        return Err(format_err(path, HEADER_LEN + n, "trailing bytes after data"));
    }
    let data = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect::<Vec<_>>();
    Ok(DMatrix::from_vec(rows, cols, data))
}

pub fn decode_csv(path: &Path, text: &str) -> Result<MatrixFile> {
    let mut offset = 0usize;
    let mut lines = text.split_inclusive('\n');
    let header = lines.next().unwrap_or("");
    let (rows, cols, tag) = parse_header(header.trim_end())
        .ok_or_else(|| format_err(path, 0, "expected header '# rows=<n> cols=<m> tag=<tag>'"))?;
    offset += header.len();
    let mut data = Vec::with_capacity(rows * cols);
    let mut seen = 0;
    for line in lines {
        let body = line.trim_end();
        if body.is_empty() {
            offset += line.len();
            continue;
        }
        if seen == rows {
            return Err(format_err(path, offset, format!("more than {rows} data rows")));
        }
        let mut n = 0;
        let mut field_at = offset;
        for field in body.split(',') {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| format_err(path, field_at, format!("bad number '{}'", field.trim())))?;
            data.push(v);
            n += 1;
            field_at += field.len() + 1;
        }
        if n != cols {
            return Err(format_err(path, offset, format!("row {seen} has {n} values, expected {cols}")));
        }
        seen += 1;
        offset += line.len();
    }
    if seen != rows {
        return Err(format_err(
            path,
            offset,
            format!("truncated: header declares {rows} rows, found {seen}"),
        ));
    }
    Ok(MatrixFile {
        values: DMatrix::from_row_slice(rows, cols, &data),
        tag,
    })
}

fn parse_header(line: &str) -> Option<(usize, usize, String)> {
    let rest = line.strip_prefix('#')?.trim();
    let mut rows = None;
    let mut cols = None;
    let mut tag = String::new();
    for part in rest.split_whitespace() {
        let (k, v) = part.split_once('=')?;
        match k {
            "rows" => rows = v.parse().ok(),
            "cols" => cols = v.parse().ok(),
            "tag" => tag = v.to_string(),
            _ => {}
        }
    }
    Some((rows?, cols?, tag))
}

/// Read either encoding, detected from the leading bytes.
pub fn read_matrix(path: &Path) -> Result<MatrixFile> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.is_empty() {
        return Ok(MatrixFile {
            values: DMatrix::zeros(0, 0),
            tag: String::new(),
        });
    }
    if bytes.starts_with(MAGIC) {
        return Ok(MatrixFile {
            values: decode_binary(path, &bytes)?,
            tag: String::new(),
        });
    }
    let text = std::str::from_utf8(&bytes).map_err(|e| format_err(path, e.valid_up_to(), "not UTF-8 text"))?;
    decode_csv(path, text)
}

pub fn write_matrix(path: &Path, m: &DMatrix<f64>, tag: &str, enc: Encoding) -> Result<()> {
    match enc {
        Encoding::Binary => atomic_write(path, &encode_binary(m)),
        Encoding::Csv => atomic_write(path, encode_csv(m, tag).as_bytes()),
    }
}

pub fn write_designs(path: &Path, designs: &DesignMatrix, enc: Encoding) -> Result<()> {
    write_matrix(path, designs.values(), "design", enc)
}

/// Read designs. An empty file yields `Ok(None)`.
pub fn read_designs(path: &Path) -> Result<Option<DesignMatrix>> {
    let f = read_matrix(path)?;
    if f.values.nrows() == 0 {
        return Ok(None);
    }
    DesignMatrix::new(f.values).map(Some).map_err(|e| match e {
        Error::Data(msg) => Error::Data(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn write_snapshots(path: &Path, snaps: &SnapshotMatrix, enc: Encoding) -> Result<()> {
    write_matrix(path, &snaps.values().transpose(), &snaps.fidelity.to_string(), enc)
}

/// Read snapshots stored one sample per row. The fidelity comes from the
/// CSV tag when present, else `default_fidelity`.
pub fn read_snapshots(path: &Path, default_fidelity: Fidelity) -> Result<SnapshotMatrix> {
    let f = read_matrix(path)?;
    if f.values.ncols() == 0 {
        return Err(Error::Data(format!("{}: snapshot file is empty", path.display())));
    }
    let fidelity = f.tag.parse().unwrap_or(default_fidelity);
    SnapshotMatrix::new(f.values.transpose(), fidelity).map_err(|e| match e {
        Error::Data(msg) => Error::Data(format!("{}: {msg}", path.display())),
        other => other,
    })
}
