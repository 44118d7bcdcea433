//! Flat binary serialization of coefficient vectors.
//!
//! Layout: a 16-byte header (8-byte magic `STOKESEQ`, little-endian u64
//! length) followed by the values as little-endian binary64.

use std::io::{self, Read, Write};

pub const MAGIC: &[u8; 8] = b"STOKESEQ";

pub fn write_coeffs(mut w: impl Write, coeffs: &[f64]) -> io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&(coeffs.len() as u64).to_le_bytes())?;
    for &v in coeffs {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_coeffs(mut r: impl Read) -> io::Result<Vec<f64>> {
    let mut header = [0u8; 16];
    r.read_exact(&mut header)?;
    if &header[..8] != MAGIC {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "bad magic"));
    }
    let len = u64::from_le_bytes(header[8..].try_into().unwrap()) as usize;
    let mut out = Vec::with_capacity(len);
    let mut buf = [0u8; 8];
    for _ in 0..len {
        r.read_exact(&mut buf)?;
        out.push(f64::from_le_bytes(buf));
    }
    Ok(out)
}

pub fn save_coeffs(path: impl AsRef<std::path::Path>, coeffs: &[f64]) -> io::Result<()> {
    write_coeffs(std::fs::File::create(path)?, coeffs)
}

pub fn load_coeffs(path: impl AsRef<std::path::Path>) -> io::Result<Vec<f64>> {
    read_coeffs(std::fs::File::open(path)?)
}
