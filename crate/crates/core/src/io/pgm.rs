//! PGM images (P2 ASCII and P5 binary), maxval 255 or 65535, scaled to
//! [0, 1] floats on read.

use std::path::Path;

use super::{atomic_write, parse_err};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct Image<S> {
    pub height: usize,
    pub width: usize,
    /// Row-major, in [0, 1].
    pub pixels: Vec<S>,
}

/// Header tokens: magic, width, height, maxval. `#` comments may appear
/// anywhere between tokens. Returns (magic, width, height, maxval, payload
/// offset into `bytes`).
fn parse_header<'a>(bytes: &'a [u8], path: &Path) -> Result<(&'a str, usize, usize, u32, usize)> {
    let mut tokens: Vec<(usize, &str)> = Vec::new(); // (end offset, token)
    let mut pos = 0usize;
    while tokens.len() < 4 {
        // skip whitespace and comments
        while pos < bytes.len() {
            if bytes[pos].is_ascii_whitespace() {
                pos += 1;
            } else if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                break;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(parse_err(path, 0, "truncated PGM header"));
        }
        let tok = std::str::from_utf8(&bytes[start..pos])
            .map_err(|_| parse_err(path, 0, "non-ASCII PGM header"))?;
        tokens.push((pos, tok));
    }
    let magic = tokens[0].1;
    if magic != "P2" && magic != "P5" {
        return Err(parse_err(path, 1, format!("bad magic {magic:?}, expected P2 or P5")));
    }
    let parse_num = |t: &str, what: &str| {
        t.parse::<u64>()
            .map_err(|e| parse_err(path, 0, format!("bad {what}: {e}")))
    };
    let width = parse_num(tokens[1].1, "width")? as usize;
    let height = parse_num(tokens[2].1, "height")? as usize;
    let maxval = parse_num(tokens[3].1, "maxval")? as u32;
    if maxval != 255 && maxval != 65535 {
        return Err(parse_err(path, 0, format!("unsupported maxval {maxval}")));
    }
    // exactly one whitespace byte separates maxval from a P5 payload
    let payload = tokens[3].0 + 1;
    Ok((magic, width, height, maxval, payload))
}

pub fn parse_pgm_bytes<S: Scalar>(bytes: &[u8], path: &Path) -> Result<Image<S>> {
    let (magic, width, height, maxval, payload) = parse_header(bytes, path)?;
    let n = width * height;
    let inv = 1.0 / maxval as f64;
    let mut pixels = Vec::with_capacity(n);

    if magic == "P2" {
        let text = std::str::from_utf8(&bytes[payload.saturating_sub(1)..])
            .map_err(|_| parse_err(path, 0, "non-ASCII P2 payload"))?;
        for tok in text.split_whitespace() {
            let v: u32 = tok
                .parse()
                .map_err(|e| parse_err(path, 0, format!("bad sample {tok:?}: {e}")))?;
            if v > maxval {
                return Err(parse_err(path, 0, format!("sample {v} exceeds maxval {maxval}")));
            }
            pixels.push(S::c(v as f64 * inv));
            if pixels.len() == n {
                break;
            }
        }
        if pixels.len() != n {
            return Err(parse_err(
                path,
                0,
                format!("expected {n} samples, found {}", pixels.len()),
            ));
        }
    } else {
        let bytes_per = if maxval == 255 { 1 } else { 2 };
        let want = n * bytes_per;
        let data = &bytes[payload..];
        if data.len() < want {
            return Err(parse_err(
                path,
                0,
                format!("expected {want} payload bytes, found {}", data.len()),
            ));
        }
        for i in 0..n {
            let v = if bytes_per == 1 {
                data[i] as u32
            } else {
                // 16-bit samples are big-endian per the format
                u16::from_be_bytes([data[2 * i], data[2 * i + 1]]) as u32
            };
            pixels.push(S::c(v as f64 * inv));
        }
    }
    Ok(Image {
        height,
        width,
        pixels,
    })
}

pub fn parse_pgm<S: Scalar>(path: &Path) -> Result<Image<S>> {
    let bytes = std::fs::read(path)?;
    parse_pgm_bytes(&bytes, path)
}

/// Binary P5 with the requested maxval (255 or 65535). Values are clamped
/// to [0, 1] and rounded to the nearest representable level.
pub fn write_pgm<S: Scalar>(img: &Image<S>, maxval: u32, path: &Path) -> Result<()> {
    if maxval != 255 && maxval != 65535 {
        return Err(Error::config(format!("unsupported maxval {maxval}")));
    }
    if img.pixels.len() != img.height * img.width {
        return Err(Error::dim("pixel buffer does not match dims"));
    }
    let mut out = format!("P5\n{} {}\n{}\n", img.width, img.height, maxval).into_bytes();
    for p in &img.pixels {
        let v = (p.to_f64_lossy().clamp(0.0, 1.0) * maxval as f64).round() as u32;
        if maxval == 255 {
            out.push(v as u8);
        } else {
            out.extend_from_slice(&(v as u16).to_be_bytes());
        }
    }
    atomic_write(path, &out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn p2_eight_bit_scaling() {
        let text = b"P2\n2 2\n255\n0 255\n128 64\n";
        let img: Image<f64> = parse_pgm_bytes(text, Path::new("t.pgm")).unwrap();
        assert_eq!(img.pixels[0], 0.0);
        assert_eq!(img.pixels[1], 1.0);
        assert!((img.pixels[2] - 128.0 / 255.0).abs() < 1e-12);
        assert!((img.pixels[3] - 64.0 / 255.0).abs() < 1e-12);
    }

    #[test]
    fn sixteen_bit_round_trip_preserves_precision() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("img.pgm");
        let pixels: Vec<f64> = (0..16).map(|i| (i * 4111 % 65536) as f64 / 65535.0).collect();
        let img = Image {
            height: 4,
            width: 4,
            pixels: pixels.clone(),
        };
        write_pgm(&img, 65535, &p).unwrap();
        let back: Image<f64> = parse_pgm(&p).unwrap();
        for (a, b) in back.pixels.iter().zip(&pixels) {
            assert_eq!(a, b); // representable levels round-trip exactly
        }
    }

    #[test]
    fn eight_bit_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("img8.pgm");
        let pixels: Vec<f64> = (0..6).map(|i| (i * 51) as f64 / 255.0).collect();
        let img = Image {
            height: 2,
            width: 3,
            pixels: pixels.clone(),
        };
        write_pgm(&img, 255, &p).unwrap();
        let back: Image<f64> = parse_pgm(&p).unwrap();
        assert_eq!(back.pixels, pixels);
    }

    #[test]
    fn truncated_payload_reports_byte_counts() {
        let mut bytes = b"P5\n4 4\n255\n".to_vec();
        bytes.extend_from_slice(&[7u8; 5]); // need 16
        let err = parse_pgm_bytes::<f64>(&bytes, Path::new("short.pgm")).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("16") && msg.contains('5'), "{msg}");
    }

    #[test]
    fn bad_magic_rejected() {
        let err = parse_pgm_bytes::<f64>(b"P6\n1 1\n255\n\0", Path::new("x")).unwrap_err();
        assert!(err.to_string().contains("magic"));
    }
}
