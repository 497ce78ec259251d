//! Binary PGM (P5) frames.

use std::fs;
use std::path::{Path, PathBuf};

use super::ApsFrame;
use crate::error::{Error, Result};

fn malformed(path: &Path, msg: &str) -> Error {
    Error::Malformed { location: path.display().to_string(), message: msg.to_string() }
}

/// Decodes a P5 image with maxval <= 255 into `(width, height, pixels)`.
pub fn decode_pgm(bytes: &[u8], path: &Path) -> Result<(u32, u32, Vec<u8>)> {
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(malformed(path, "truncated header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| malformed(path, "non-ASCII header"))?);
    }
    if fields[0] != "P5" {
        return Err(malformed(path, "not a binary PGM (P5)"));
    }
    let num = |s: &str| s.parse::<u32>().map_err(|_| malformed(path, "bad header number"));
    let (w, h, maxval) = (num(fields[1])?, num(fields[2])?, num(fields[3])?);
    if maxval == 0 || maxval > 255 {
        return Err(malformed(path, "only 8-bit PGM is supported"));
    }
    pos += 1;
    let n = w as usize * h as usize;
    if bytes.len() < pos + n {
        return Err(malformed(path, "truncated pixel data"));
    }
    Ok((w, h, bytes[pos..pos + n].to_vec()))
}

pub fn encode_pgm(width: u32, height: u32, pixels: &[u8]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    out
}

/// Reads a frame; the timestamp is the file stem.
pub fn read_frame(path: &Path) -> Result<ApsFrame> {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
    let t = stem
        .parse::<i64>()
        .map_err(|_| malformed(path, "frame file name must be its timestamp in microseconds"))?;
    let (w, h, data) = decode_pgm(&fs::read(path)?, path)?;
    ApsFrame::new(w, h, data, t)
}

pub fn write_frame(frame: &ApsFrame, dir: &Path) -> Result<PathBuf> {
    let path = dir.join(format!("{}.pgm", frame.t));
    fs::write(&path, encode_pgm(frame.width, frame.height, &frame.data))?;
    Ok(path)
}

/// Every `*.pgm` in `dir`, sorted by timestamp.
pub fn read_frames(dir: &Path) -> Result<Vec<ApsFrame>> {
    let mut frames = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm")) {
            frames.push(read_frame(&path)?);
        }
    }
    frames.sort_by_key(|f| f.t);
    Ok(frames)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_with_comment() {
        let bytes = b"P5\n# made by hand\n3 2\n255\n\x00\x01\x02\x03\x04\x05";
        let (w, h, d) = decode_pgm(bytes, Path::new("x")).unwrap();
        assert_eq!((w, h), (3, 2));
        assert_eq!(d, vec![0, 1, 2, 3, 4, 5]);
        assert_eq!(decode_pgm(&encode_pgm(3, 2, &d), Path::new("x")).unwrap(), (3, 2, d));
    }

    #[test]
    fn rejects_ascii_pgm() {
        assert!(decode_pgm(b"P2\n1 1\n255\n0", Path::new("x")).is_err());
    }
}
