//! Tree files: a compact binary layout and a tab-separated text form.
//!
//! Binary layout, all integers little-endian:
//!
//! | bytes | content |
//! |-------|---------|
//! | 4     | `COEV` |
//! | 1     | version `0x01` |
//! | 1     | flags, bit 0 set when birth times follow |
//! | 8     | vertex count `n` |
//! | 8n    | parent indices, root parent `0xFFFFFFFFFFFFFFFF` |
//! | 8n    | optional `f64` birth times |

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::growth::{TreeState, ROOT_PARENT};

pub const MAGIC: &[u8; 4] = b"COEV";
pub const VERSION: u8 = 0x01;
const FLAG_BIRTHS: u8 = 1;
const ROOT_U64: u64 = u64::MAX;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("not a tree file (bad magic)")]
    BadMagic,
    #[error("unsupported tree file version {0}")]
    UnsupportedVersion(u8),
    #[error("tree file is truncated")]
    TruncatedFile,
    #[error("tree violates an invariant: {0}")]
    InvariantViolation(String),
    #[error("malformed text tree at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Bin,
    Tsv,
}

impl Format {
    /// `.tsv` selects text, anything else binary.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("tsv") => Format::Tsv,
            _ => Format::Bin,
        }
    }
}

pub fn write_bin<W: Write>(tree: &TreeState, mut w: W) -> std::io::Result<()> {
    let flags = if tree.birth_time.is_some() { FLAG_BIRTHS } else { 0 };
    w.write_all(MAGIC)?;
    w.write_all(&[VERSION, flags])?;
    w.write_all(&(tree.n() as u64).to_le_bytes())?;
    for &p in &tree.parent {
        let p = if p == ROOT_PARENT { ROOT_U64 } else { p as u64 };
        w.write_all(&p.to_le_bytes())?;
    }
    if let Some(b) = &tree.birth_time {
        for t in b {
            w.write_all(&t.to_le_bytes())?;
        }
    }
    w.flush()
}

pub fn to_bytes(tree: &TreeState) -> Vec<u8> {
    let mut out = Vec::with_capacity(14 + 16 * tree.n());
    write_bin(tree, &mut out).expect("writing to memory");
    out
}

fn take<'a>(buf: &mut &'a [u8], n: usize) -> Result<&'a [u8], IoError> {
    if buf.len() < n {
        return Err(IoError::TruncatedFile);
    }
    let (head, rest) = buf.split_at(n);
    *buf = rest;
    Ok(head)
}

fn u64_at(b: &[u8]) -> u64 {
    u64::from_le_bytes(b.try_into().unwrap())
}

/// Parses and revalidates a binary tree.
pub fn from_bytes(mut buf: &[u8]) -> Result<TreeState, IoError> {
    if take(&mut buf, 4).map_err(|_| IoError::BadMagic)? != MAGIC {
        return Err(IoError::BadMagic);
    }
    let header = take(&mut buf, 2)?;
    if header[0] != VERSION {
        return Err(IoError::UnsupportedVersion(header[0]));
    }
    let flags = header[1];
    let n = u64_at(take(&mut buf, 8)?);
    if n == 0 || n > u32::MAX as u64 {
        return Err(IoError::InvariantViolation(format!("vertex count {n}")));
    }
    let n = n as usize;
    let raw = take(&mut buf, 8 * n)?;
    let mut parent = Vec::with_capacity(n);
    for (i, chunk) in raw.chunks_exact(8).enumerate() {
        let p = u64_at(chunk);
        parent.push(match p {
            ROOT_U64 => ROOT_PARENT,
            p if p < i as u64 => p as u32,
            p => {
                return Err(IoError::InvariantViolation(format!(
                    "parent[{i}] = {p} is not an earlier vertex"
                )))
            }
        });
    }
    let mut tree = TreeState::from_parents(parent).map_err(IoError::InvariantViolation)?;
    if flags & FLAG_BIRTHS != 0 {
        let raw = take(&mut buf, 8 * n)?;
        tree.birth_time = Some(
            raw.chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        );
    }
    tree.validate().map_err(IoError::InvariantViolation)?;
    Ok(tree)
}

pub fn write_tsv<W: Write>(tree: &TreeState, mut w: W) -> std::io::Result<()> {
    for (i, (&p, &d)) in tree.parent.iter().zip(&tree.depth).enumerate() {
        if p == ROOT_PARENT {
            writeln!(w, "{i}\t-1\t{d}")?;
        } else {
            writeln!(w, "{i}\t{p}\t{d}")?;
        }
    }
    w.flush()
}

pub fn read_tsv<R: Read>(r: R) -> Result<TreeState, IoError> {
    let mut parent = Vec::new();
    let mut depth = Vec::new();
    for (line_no, line) in BufReader::new(r).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |msg: &str| IoError::Parse {
            line: line_no + 1,
            msg: msg.to_string(),
        };
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 3 {
            return Err(bad("expected index, parent and depth"));
        }
        let idx: usize = f[0].parse().map_err(|_| bad("bad index"))?;
        if idx != parent.len() {
            return Err(bad("indices must be consecutive from 0"));
        }
        let p: i64 = f[1].parse().map_err(|_| bad("bad parent"))?;
        parent.push(if p < 0 { ROOT_PARENT } else { p as u32 });
        depth.push(f[2].parse().map_err(|_| bad("bad depth"))?);
    }
    let tree = TreeState {
        parent,
        depth,
        birth_time: None,
        provenance: None,
    };
    tree.validate().map_err(IoError::InvariantViolation)?;
    Ok(tree)
}

pub fn serialize_tree(tree: &TreeState, path: &Path, format: Format) -> Result<(), IoError> {
    let w = BufWriter::new(std::fs::File::create(path)?);
    match format {
        Format::Bin => write_bin(tree, w)?,
        Format::Tsv => write_tsv(tree, w)?,
    }
    Ok(())
}

/// Loads either format, sniffing the magic bytes.
pub fn load_tree(path: &Path) -> Result<TreeState, IoError> {
    let bytes = std::fs::read(path)?;
    if bytes.starts_with(MAGIC) || Format::from_path(path) == Format::Bin {
        from_bytes(&bytes)
    } else {
        read_tsv(&bytes[..])
    }
}
