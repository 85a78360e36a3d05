use std::path::Path;

use super::Image;
use crate::error::{Error, Result};

/// Binary PGM: `P5\n<w> <h>\n255\n` followed by the raw bytes.
pub fn encode_pgm(image: &Image) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", image.width, image.height).into_bytes();
    out.extend_from_slice(&image.pixels);
    out
}

pub fn write_pgm(path: &Path, image: &Image) -> Result<()> {
    std::fs::write(path, encode_pgm(image)).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, message: &str) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        message: message.to_string(),
    }
}

/// Parses the exact layout written by [`encode_pgm`] (comments are not supported).
pub fn decode_pgm(path: &Path, bytes: &[u8]) -> Result<Image> {
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(parse_err(path, "truncated PGM header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| parse_err(path, "bad header"))?);
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    if fields[0] != "P5" {
        return Err(parse_err(path, "not a binary PGM"));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| parse_err(path, "bad header number"));
    let (width, height, maxval) = (num(fields[1])?, num(fields[2])?, num(fields[3])?);
    if maxval != 255 {
        return Err(parse_err(path, "maxval must be 255"));
    }
    let raster = bytes.get(pos..).unwrap_or(&[]);
    if raster.len() != width * height {
        return Err(parse_err(path, "raster size does not match header"));
    }
    Ok(Image {
        width,
        height,
        pixels: raster.to_vec(),
    })
}

pub fn read_pgm(path: &Path) -> Result<Image> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(path, &bytes)
}
