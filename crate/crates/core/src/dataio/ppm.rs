use std::path::Path;

use crate::dataio::RawFrame;
use crate::error::{Error, Result};

/// Decodes a binary `P6` image with maxval 255.
///
/// Header tokens may be separated by arbitrary whitespace and `#` comments.
/// Exactly one whitespace byte separates the maxval from the payload.
pub fn decode_ppm(bytes: &[u8]) -> Result<RawFrame> {
    let mut pos = 0;
    let magic = next_token(bytes, &mut pos)?;
    if magic != b"P6" {
        return Err(Error::Ppm(format!(
            "bad magic {:?}, expected \"P6\"",
            String::from_utf8_lossy(magic)
        )));
    }
    let width = parse_number(next_token(bytes, &mut pos)?, "width")?;
    let height = parse_number(next_token(bytes, &mut pos)?, "height")?;
    let maxval = parse_number(next_token(bytes, &mut pos)?, "maxval")?;
    if maxval != 255 {
        return Err(Error::Ppm(format!(
            "maxval {maxval} unsupported, expected 255"
        )));
    }
    if width == 0 || height == 0 {
        return Err(Error::Ppm(format!("empty image {width}x{height}")));
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(Error::Ppm("missing whitespace after maxval".into())),
    }
    let expected = 3 * width * height;
    let payload = &bytes[pos..];
    if payload.len() < expected {
        return Err(Error::Ppm(format!(
            "payload has {} bytes, expected {expected}",
            payload.len()
        )));
    }
    if payload.len() > expected {
        return Err(Error::Ppm(format!(
            "{} trailing bytes after payload",
            payload.len() - expected
        )));
    }
    Ok(RawFrame {
        width,
        height,
        pixels: payload.to_vec(),
    })
}

pub fn encode_ppm(frame: &RawFrame) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", frame.width, frame.height).into_bytes();
    out.extend_from_slice(&frame.pixels);
    out
}

pub fn read_ppm(path: &Path) -> Result<RawFrame> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_ppm(&bytes).map_err(|e| match e {
        Error::Ppm(msg) => Error::Ppm(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn write_ppm(path: &Path, frame: &RawFrame) -> Result<()> {
    std::fs::write(path, encode_ppm(frame)).map_err(|e| Error::io(path, e))
}

fn next_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a [u8]> {
    loop {
        match bytes.get(*pos) {
            Some(b) if b.is_ascii_whitespace() => *pos += 1,
            Some(b'#') => {
                while let Some(&b) = bytes.get(*pos) {
                    *pos += 1;
                    if b == b'\n' {
                        break;
                    }
                }
            }
            Some(_) => break,
            None => return Err(Error::Ppm("unexpected end of header".into())),
        }
    }
    let start = *pos;
    while let Some(b) = bytes.get(*pos) {
        if b.is_ascii_whitespace() || *b == b'#' {
            break;
        }
        *pos += 1;
    }
    Ok(&bytes[start..*pos])
}

fn parse_number(token: &[u8], what: &str) -> Result<usize> {
    std::str::from_utf8(token)
        .ok()
        .filter(|s| s.bytes().all(|b| b.is_ascii_digit()))
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| {
            Error::Ppm(format!(
                "invalid {what} {:?}",
                String::from_utf8_lossy(token)
            ))
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decodes_single_white_pixel() {
        let frame = decode_ppm(b"P6\n1 1\n255\n\xff\xff\xff").unwrap();
        assert_eq!((frame.width, frame.height), (1, 1));
        assert_eq!(frame.pixels, vec![255, 255, 255]);
    }

    #[test]
    fn header_comments_are_skipped() {
        let frame =
            decode_ppm(b"P6 # made by hand\n2 # w\n1\n255\n\x01\x02\x03\x04\x05\x06").unwrap();
        assert_eq!(frame.pixels, vec![1, 2, 3, 4, 5, 6]);
        assert_eq!((frame.width, frame.height), (2, 1));
    }

    #[test]
    fn rejects_bad_headers() {
        assert!(matches!(
            decode_ppm(b"P3\n1 1\n255\n\0\0\0"),
            Err(Error::Ppm(_))
        ));
        assert!(
            matches!(decode_ppm(b"P6\n1 1\n65535\n\0\0\0"), Err(Error::Ppm(m)) if m.contains("maxval"))
        );
        assert!(matches!(
            decode_ppm(b"P6\n1 x\n255\n\0\0\0"),
            Err(Error::Ppm(_))
        ));
        assert!(
            matches!(decode_ppm(b"P6\n2 2\n255\n\0\0\0"), Err(Error::Ppm(m)) if m.contains("payload"))
        );
        assert!(
            matches!(decode_ppm(b"P6\n1 1\n255\n\0\0\0\0"), Err(Error::Ppm(m)) if m.contains("trailing"))
        );
        assert!(matches!(decode_ppm(b"P6\n1 1"), Err(Error::Ppm(_))));
    }

    #[test]
    fn encode_matches_header_layout() {
        let frame = RawFrame {
            width: 2,
            height: 1,
            pixels: vec![0, 1, 2, 3, 4, 5],
        };
        let bytes = encode_ppm(&frame);
        assert!(bytes.starts_with(b"P6\n2 1\n255\n"));
        assert_eq!(decode_ppm(&bytes).unwrap(), frame);
    }
}
