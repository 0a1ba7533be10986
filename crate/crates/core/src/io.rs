//! Artifact I/O: the binary matrix format, plain-text key/value files,
//! atomic writes, and content fingerprints.
//!
//! Every persisted tensor uses one self-describing layout regardless of the
//! crate's working precision: an 8-byte magic, two little-endian `u64`
//! dimensions (rows, columns), then row-major little-endian `f64` values.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;
use sha2::{Digest, Sha256};

use crate::error::{CoreError, Result};
use crate::Real;

/// Magic prefix of binary matrix files.
pub const MATRIX_MAGIC: [u8; 8] = *b"ADVIDSM1";

/// Write a matrix to `w` in the binary matrix format.
pub fn write_matrix_to(w: &mut impl Write, matrix: &Array2<Real>) -> std::io::Result<()> {
    w.write_all(&MATRIX_MAGIC)?;
    w.write_all(&(matrix.nrows() as u64).to_le_bytes())?;
    w.write_all(&(matrix.ncols() as u64).to_le_bytes())?;
    let mut buf = Vec::with_capacity(matrix.ncols() * 8);
    for row in matrix.rows() {
        buf.clear();
        for &v in row {
            buf.extend_from_slice(&(v as f64).to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

/// Read a matrix in the binary matrix format from `r`.
///
/// `path` is only used to annotate errors.
pub fn read_matrix_from(r: &mut impl Read, path: &Path) -> Result<Array2<Real>> {
    let io_err = |e| CoreError::io(path, e);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(io_err)?;
    if magic != MATRIX_MAGIC {
        return Err(CoreError::format(path, "bad matrix magic"));
    }
    let mut dim = [0u8; 8];
    r.read_exact(&mut dim).map_err(io_err)?;
    let rows = u64::from_le_bytes(dim) as usize;
    r.read_exact(&mut dim).map_err(io_err)?;
    let cols = u64::from_le_bytes(dim) as usize;
    let count = rows
        .checked_mul(cols)
        .ok_or_else(|| CoreError::format(path, "matrix dimensions overflow"))?;
    let mut bytes = vec![0u8; count * 8];
    r.read_exact(&mut bytes).map_err(io_err)?;
    let data: Vec<Real> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")) as Real)
        .collect();
    Array2::from_shape_vec((rows, cols), data)
        .map_err(|e| CoreError::format(path, format!("bad matrix shape: {e}")))
}

/// Write a single matrix to its own file, atomically.
pub fn save_matrix(path: &Path, matrix: &Array2<Real>) -> Result<()> {
    write_atomic(path, |w| {
        write_matrix_to(w, matrix).map_err(|e| CoreError::io(path, e))
    })
}

/// Load a single matrix from a file written by [`save_matrix`].
pub fn load_matrix(path: &Path) -> Result<Array2<Real>> {
    let file = File::open(path).map_err(|e| CoreError::io(path, e))?;
    let mut reader = BufReader::new(file);
    let matrix = read_matrix_from(&mut reader, path)?;
    // Trailing garbage means the file is not what we wrote.
    let mut rest = [0u8; 1];
    match reader.read(&mut rest) {
        Ok(0) => Ok(matrix),
        Ok(_) => Err(CoreError::format(path, "trailing bytes after matrix")),
        Err(e) => Err(CoreError::io(path, e)),
    }
}

/// Write a file atomically: contents go to a temp file in the same
/// directory which is renamed over `path` only on success.
pub fn write_atomic(path: &Path, fill: impl FnOnce(&mut BufWriter<&mut File>) -> Result<()>) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let mut tmp = match dir {
        Some(d) => tempfile::NamedTempFile::new_in(d),
        None => tempfile::NamedTempFile::new(),
    }
    .map_err(|e| CoreError::io(path, e))?;
    {
        let mut writer = BufWriter::new(tmp.as_file_mut());
        fill(&mut writer)?;
        writer.flush().map_err(|e| CoreError::io(path, e))?;
    }
    tmp.persist(path)
        .map_err(|e| CoreError::io(path, e.error))?;
    Ok(())
}

/// Parse a plain-text key/value file into ordered `(key, rest-of-line)`
/// pairs. Keys may repeat; blank lines and `#` comments are skipped.
pub fn parse_kv(text: &str) -> Vec<(String, String)> {
    text.lines()
        .map(str::trim_end)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| match l.split_once(' ') {
            Some((k, v)) => (k.to_string(), v.trim().to_string()),
            None => (l.to_string(), String::new()),
        })
        .collect()
}

/// Read a whole text file, with path-annotated errors.
pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| CoreError::io(path, e))
}

/// Hex SHA-256 of raw bytes.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// Content fingerprint of a matrix: hash of dimensions plus canonical
/// 64-bit little-endian values, independent of the working precision.
pub fn fingerprint_matrix(matrix: &Array2<Real>) -> String {
    let mut hasher = Sha256::new();
    hasher.update((matrix.nrows() as u64).to_le_bytes());
    hasher.update((matrix.ncols() as u64).to_le_bytes());
    for &v in matrix.iter() {
        hasher.update((v as f64).to_le_bytes());
    }
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}
