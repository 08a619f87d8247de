//! Point cloud file formats.
//!
//! Binary `AFPC` layout (all integers and floats little-endian):
//!
//! | bytes      | content                              |
//! |------------|--------------------------------------|
//! | 4          | magic `AFPC`                         |
//! | 2          | version (`u16`, currently 1)         |
//! | 4          | point count N (`u32`)                |
//! | 24·N       | coordinates, `f64` x y z per point   |
//! | 1          | normals flag (0 or 1)                |
//! | 24·N       | normals, present only when flag is 1 |
//!
//! ASCII XYZ files hold one whitespace-separated `x y z` triple per line;
//! blank lines and lines starting with `#` are skipped.

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::geometry::{GeometryError, PointCloud};

pub const AFPC_MAGIC: &[u8; 4] = b"AFPC";
pub const AFPC_VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum CloudIoError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not an AFPC file (bad magic)")]
    BadMagic,
    #[error("unsupported AFPC version {0}")]
    Version(u16),
    #[error("truncated AFPC payload")]
    Truncated,
    #[error("invalid normals flag {0}")]
    BadFlag(u8),
    #[error("trailing bytes after AFPC payload")]
    Trailing,
    #[error("line {line}: expected three numbers")]
    BadLine { line: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

pub fn encode_afpc(cloud: &PointCloud) -> Vec<u8> {
    let n = cloud.len();
    let mut out = Vec::with_capacity(11 + 24 * n * 2);
    out.extend_from_slice(AFPC_MAGIC);
    out.extend_from_slice(&AFPC_VERSION.to_le_bytes());
    out.extend_from_slice(&(n as u32).to_le_bytes());
    for p in cloud.points() {
        for c in p {
            out.extend_from_slice(&c.to_le_bytes());
        }
    }
    match cloud.normals() {
        Some(ns) => {
            out.push(1);
            for v in ns {
                for c in v {
                    out.extend_from_slice(&c.to_le_bytes());
                }
            }
        }
        None => out.push(0),
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CloudIoError> {
        let end = self.pos.checked_add(n).ok_or(CloudIoError::Truncated)?;
        let s = self.buf.get(self.pos..end).ok_or(CloudIoError::Truncated)?;
        self.pos = end;
        Ok(s)
    }

    fn f64(&mut self) -> Result<f64, CloudIoError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn triples(&mut self, n: usize) -> Result<Vec<[f64; 3]>, CloudIoError> {
        // guard against absurd counts before allocating
        if self.buf.len().saturating_sub(self.pos) < n.saturating_mul(24) {
            return Err(CloudIoError::Truncated);
        }
        (0..n)
            .map(|_| Ok([self.f64()?, self.f64()?, self.f64()?]))
            .collect()
    }
}

pub fn decode_afpc(id: &str, bytes: &[u8]) -> Result<PointCloud, CloudIoError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4)? != AFPC_MAGIC {
        return Err(CloudIoError::BadMagic);
    }
    let version = u16::from_le_bytes(r.take(2)?.try_into().unwrap());
    if version != AFPC_VERSION {
        return Err(CloudIoError::Version(version));
    }
    let n = u32::from_le_bytes(r.take(4)?.try_into().unwrap()) as usize;
    let points = r.triples(n)?;
    let normals = match r.take(1)?[0] {
        0 => None,
        1 => Some(r.triples(n)?),
        f => return Err(CloudIoError::BadFlag(f)),
    };
    if r.pos != bytes.len() {
        return Err(CloudIoError::Trailing);
    }
    Ok(PointCloud::with_normals(id, points, normals)?)
}

pub fn parse_xyz(id: &str, text: &str) -> Result<PointCloud, CloudIoError> {
    let mut points = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|_| CloudIoError::BadLine { line: i + 1 })?;
        if vals.len() != 3 {
            return Err(CloudIoError::BadLine { line: i + 1 });
        }
        points.push([vals[0], vals[1], vals[2]]);
    }
    Ok(PointCloud::new(id, points)?)
}

/// Decodes either format, sniffing the AFPC magic. The id is supplied by the caller.
pub fn decode_cloud(id: &str, bytes: &[u8]) -> Result<PointCloud, CloudIoError> {
    if bytes.starts_with(AFPC_MAGIC) {
        decode_afpc(id, bytes)
    } else {
        let text = std::str::from_utf8(bytes).map_err(|_| CloudIoError::BadMagic)?;
        parse_xyz(id, text)
    }
}

/// Reads a cloud file; the id is the file stem.
pub fn read_cloud(path: &Path) -> Result<PointCloud, CloudIoError> {
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    decode_cloud(&id, &fs::read(path)?)
}

pub fn write_afpc(path: &Path, cloud: &PointCloud) -> Result<(), CloudIoError> {
    fs::write(path, encode_afpc(cloud))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        let c = PointCloud::new("a", vec![[1.0, 2.0, 3.0]]).unwrap();
        let b = encode_afpc(&c);
        assert_eq!(&b[..4], b"AFPC");
        assert_eq!(&b[4..6], &[1, 0]);
        assert_eq!(&b[6..10], &[1, 0, 0, 0]);
        assert_eq!(b.len(), 10 + 24 + 1);
        assert_eq!(f64::from_le_bytes(b[10..18].try_into().unwrap()), 1.0);
        assert_eq!(*b.last().unwrap(), 0);
    }

    #[test]
    fn round_trip_with_normals() {
        let c = PointCloud::with_normals(
            "a",
            vec![[1.0, 2.0, 3.0], [-0.5, 0.0, 1e-300]],
            Some(vec![[0.0, 0.0, 1.0], [1.0, 0.0, 0.0]]),
        )
        .unwrap();
        let back = decode_afpc("a", &encode_afpc(&c)).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn rejects_corrupt_payloads() {
        let c = PointCloud::new("a", vec![[1.0, 2.0, 3.0]]).unwrap();
        let good = encode_afpc(&c);
        assert!(matches!(decode_afpc("a", &good[..20]), Err(CloudIoError::Truncated)));
        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(decode_afpc("a", &bad), Err(CloudIoError::BadMagic)));
        let mut bad = good.clone();
        bad[4] = 9;
        assert!(matches!(decode_afpc("a", &bad), Err(CloudIoError::Version(9))));
        let mut bad = good.clone();
        *bad.last_mut().unwrap() = 7;
        assert!(matches!(decode_afpc("a", &bad), Err(CloudIoError::BadFlag(7))));
        let mut bad = good;
        bad.push(0);
        assert!(matches!(decode_afpc("a", &bad), Err(CloudIoError::Trailing)));
    }

    #[test]
    fn huge_count_does_not_allocate() {
        let mut b = Vec::new();
        b.extend_from_slice(b"AFPC");
        b.extend_from_slice(&1u16.to_le_bytes());
        b.extend_from_slice(&u32::MAX.to_le_bytes());
        assert!(matches!(decode_afpc("a", &b), Err(CloudIoError::Truncated)));
    }

    #[test]
    fn xyz_parsing() {
        let c = decode_cloud("x", b"# header\n1 2 3\n\n4.5 -1 0\n").unwrap();
        assert_eq!(c.points(), &[[1.0, 2.0, 3.0], [4.5, -1.0, 0.0]]);
        assert!(matches!(
            parse_xyz("x", "1 2\n"),
            Err(CloudIoError::BadLine { line: 1 })
        ));
        assert!(matches!(parse_xyz("x", ""), Err(CloudIoError::Geometry(_))));
    }
}
