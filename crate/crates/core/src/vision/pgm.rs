//! Netpbm graymap I/O for depth maps: one unit per millimetre, binary
//! 16-bit big-endian samples on write.
//! https://netpbm.sourceforge.net/doc/pgm.html

use std::path::Path;

use super::{DepthImage, VisionError};

pub const MAXVAL: u32 = 65535;

/// Encodes depth (metres) as a binary 16-bit PGM in millimetres.
pub fn encode_pgm(img: &DepthImage) -> Vec<u8> {
    let header = format!("P5\n{} {}\n{MAXVAL}\n", img.width, img.height);
    let mut out = Vec::with_capacity(header.len() + img.data.len() * 2);
    out.extend_from_slice(header.as_bytes());
    for &d in &img.data {
        let mm = (d * 1000.0).round().clamp(0.0, MAXVAL as f64) as u16;
        out.extend_from_slice(&mm.to_be_bytes());
    }
    out
}

struct Header {
    magic: [u8; 2],
    width: usize,
    height: usize,
    maxval: u32,
    data_start: usize,
}

fn parse_header(bytes: &[u8], origin: &str) -> Result<Header, VisionError> {
    let err = |msg: String| VisionError::Format {
        path: origin.to_string(),
        line: 1,
        msg,
    };
    if bytes.len() < 2 || !matches!(&bytes[..2], b"P5" | b"P2") {
        return Err(err("missing P5/P2 magic".into()));
    }
    let mut pos = 2;
    let mut fields = [0u64; 3];
    for field in &mut fields {
        // Whitespace and comments between header tokens.
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(err("truncated header".into()));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| err("header value out of range".into()))?;
    }
    // Exactly one whitespace byte separates the header from the raster.
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(err("missing whitespace after maxval".into()));
    }
    let [w, h, maxval] = fields;
    if w == 0 || h == 0 || maxval == 0 || maxval > MAXVAL as u64 {
        return Err(err(format!("invalid header {w}x{h} maxval {maxval}")));
    }
    Ok(Header {
        magic: [bytes[0], bytes[1]],
        width: w as usize,
        height: h as usize,
        maxval: maxval as u32,
        data_start: pos + 1,
    })
}

/// Decodes a P5 (8- or 16-bit) or P2 graymap whose samples are millimetres.
pub fn decode_pgm(bytes: &[u8], origin: &str) -> Result<DepthImage, VisionError> {
    let h = parse_header(bytes, origin)?;
    let n = h.width * h.height;
    let raster = &bytes[h.data_start..];
    let err = |msg: String| VisionError::Format {
        path: origin.to_string(),
        line: 1,
        msg,
    };
    let samples: Vec<u32> = if &h.magic == b"P5" {
        let wide = h.maxval > 255;
        let need = if wide { 2 * n } else { n };
        if raster.len() < need {
            return Err(err(format!("raster has {} bytes, need {need}", raster.len())));
        }
        if wide {
            raster[..need]
                .chunks_exact(2)
                .map(|c| u16::from_be_bytes([c[0], c[1]]) as u32)
                .collect()
        } else {
            raster[..n].iter().map(|&b| b as u32).collect()
        }
    } else {
        let text = std::str::from_utf8(raster).map_err(|_| err("non-ASCII P2 raster".into()))?;
        let vals: Result<Vec<u32>, _> = text.split_ascii_whitespace().take(n).map(str::parse).collect();
        let vals = vals.map_err(|_| err("unparsable P2 sample".into()))?;
        if vals.len() < n {
            return Err(err(format!("raster has {} samples, need {n}", vals.len())));
        }
        vals
    };
    if let Some(bad) = samples.iter().find(|&&v| v > h.maxval) {
        return Err(err(format!("sample {bad} exceeds maxval {}", h.maxval)));
    }
    DepthImage::new(
        h.width,
        h.height,
        samples.into_iter().map(|v| v as f64 / 1000.0).collect(),
    )
}

pub fn write_pgm(path: &Path, img: &DepthImage) -> Result<(), VisionError> {
    std::fs::write(path, encode_pgm(img)).map_err(|e| VisionError::io(path, e))
}

pub fn read_pgm(path: &Path) -> Result<DepthImage, VisionError> {
    let bytes = std::fs::read(path).map_err(|e| VisionError::io(path, e))?;
    decode_pgm(&bytes, &path.display().to_string())
}

/// Rounds depth to the millimetre grid the file format stores.
pub fn quantize(img: &DepthImage) -> DepthImage {
    DepthImage {
        width: img.width,
        height: img.height,
        data: img
            .data
            .iter()
            .map(|d| (d * 1000.0).round().clamp(0.0, MAXVAL as f64) / 1000.0)
            .collect(),
    }
}
