//! Embedding files, their label sidecars and JSONL manifests.
//!
//! An embedding file is `"EMBF"`, version byte `0x01`, `count` and `dim` as
//! little-endian `u32`, then `count·dim` little-endian `f32` values row by
//! row. `<path>.labels` holds one class name per row and `<path>.classes`
//! the ordered class table.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use srctrace_core::embedding::{check_unique_ids, EmbeddingSet, ManifestEntry};

use crate::error::{format_err, io_err, Result, StoreError};

pub const MAGIC: &[u8; 4] = b"EMBF";
pub const VERSION: u8 = 0x01;
pub const HEADER_LEN: usize = 13;

/// `path` with `suffix` appended to its file name.
pub fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut name = OsString::from(path.as_os_str());
    name.push(suffix);
    PathBuf::from(name)
}

pub fn labels_path(path: &Path) -> PathBuf {
    sidecar(path, ".labels")
}

pub fn classes_path(path: &Path) -> PathBuf {
    sidecar(path, ".classes")
}

/// Writes the binary block and returns the number of bytes written.
pub fn write_block<W: Write>(mut w: W, count: usize, dim: usize, data: &[f32]) -> std::io::Result<u64> {
    assert_eq!(data.len(), count * dim, "block size does not match its header");
    let too_big = |_| std::io::Error::new(std::io::ErrorKind::InvalidInput, "dimension exceeds u32");
    w.write_all(MAGIC)?;
    w.write_all(&[VERSION])?;
    w.write_all(&u32::try_from(count).map_err(too_big)?.to_le_bytes())?;
    w.write_all(&u32::try_from(dim).map_err(too_big)?.to_le_bytes())?;
    let mut buf = Vec::with_capacity(data.len() * 4);
    for v in data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok((HEADER_LEN + buf.len()) as u64)
}

/// Reads one binary block as `(count, dim, data)`.
pub fn read_block<R: Read>(mut r: R) -> std::io::Result<(usize, usize, Vec<f32>)> {
    let bad = |msg: &str| std::io::Error::new(std::io::ErrorKind::InvalidData, msg.to_owned());
    let mut head = [0u8; HEADER_LEN];
    r.read_exact(&mut head)?;
    if &head[..4] != MAGIC {
        return Err(bad("not an embedding file (bad magic)"));
    }
    if head[4] != VERSION {
        return Err(bad(&format!("unsupported version {}", head[4])));
    }
    let count = u32::from_le_bytes(head[5..9].try_into().unwrap()) as usize;
    let dim = u32::from_le_bytes(head[9..13].try_into().unwrap()) as usize;
    let n = count
        .checked_mul(dim)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| bad("header size overflows"))?;
    let mut bytes = vec![0u8; n];
    r.read_exact(&mut bytes)?;
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((count, dim, data))
}

fn write_lines<'a>(path: &Path, lines: impl IntoIterator<Item = &'a str>) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    for l in lines {
        writeln!(w, "{l}").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let file = File::open(path).map_err(io_err(path))?;
    BufReader::new(file)
        .lines()
        .collect::<std::io::Result<Vec<_>>>()
        .map_err(io_err(path))
}

/// Writes the matrix, the per-row label names and the class table. Returns
/// the size of the binary file.
pub fn write_embeddings(set: &EmbeddingSet, path: &Path) -> Result<u64> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    let n = write_block(&mut w, set.count(), set.dim(), set.data()).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))?;
    let names = set.class_names();
    write_lines(&labels_path(path), set.labels().iter().map(|&l| names[l as usize].as_str()))?;
    write_lines(&classes_path(path), names.iter().map(String::as_str))?;
    Ok(n)
}

/// Reads a file written by [`write_embeddings`]. Without a `.classes` table,
/// class ids follow first appearance in `.labels`.
pub fn read_embeddings(path: &Path) -> Result<EmbeddingSet> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut r = BufReader::new(file);
    let (count, dim, data) = read_block(&mut r).map_err(|e| format_err(path, e.to_string()))?;
    let mut rest = [0u8; 1];
    if r.read(&mut rest).map_err(io_err(path))? != 0 {
        return Err(format_err(path, "trailing bytes after the embedding block"));
    }
    if dim == 0 {
        return Err(format_err(path, "dim must be at least 1"));
    }

    let lpath = labels_path(path);
    let row_names = read_lines(&lpath)?;
    if row_names.len() != count {
        return Err(format_err(&lpath, format!("{} labels for {count} rows", row_names.len())));
    }
    let cpath = classes_path(path);
    let mut classes = if cpath.exists() { read_lines(&cpath)? } else { Vec::new() };
    let fixed = !classes.is_empty();
    let mut labels = Vec::with_capacity(count);
    for (i, name) in row_names.iter().enumerate() {
        let id = match classes.iter().position(|c| c == name) {
            Some(id) => id,
            None if fixed => {
                return Err(StoreError::Parse {
                    path: lpath,
                    line: i + 1,
                    msg: format!("class `{name}` is not listed in {}", cpath.display()),
                })
            }
            None => {
                classes.push(name.clone());
                classes.len() - 1
            }
        };
        labels.push(id as u32);
    }
    Ok(EmbeddingSet::new(data, dim, labels, classes)?)
}

/// One JSON object per non-empty line, in file order; `sample_id`s must be unique.
pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let mut out = Vec::new();
    for (i, line) in read_lines(path)?.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let entry: ManifestEntry = serde_json::from_str(line).map_err(|e| StoreError::Parse {
            path: path.to_owned(),
            line: i + 1,
            msg: e.to_string(),
        })?;
        out.push(entry);
    }
    check_unique_ids(&out)?;
    Ok(out)
}

pub fn write_manifest(entries: &[ManifestEntry], path: &Path) -> Result<()> {
    let lines: Vec<String> = entries
        .iter()
        .map(|e| serde_json::to_string(e).expect("manifest entries serialise"))
        .collect();
    write_lines(path, lines.iter().map(String::as_str))
}
