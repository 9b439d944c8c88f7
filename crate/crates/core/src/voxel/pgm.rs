//! Netpbm greyscale (PGM) reading and writing.
//!
//! Supports the ASCII (`P2`) and binary (`P5`) variants with a maxval of 255
//! or 65535. Sixteen-bit binary samples are big-endian, as the format requires.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PgmFormat {
    Ascii,
    Binary,
}

/// A decoded PGM raster, samples row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PgmImage {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    pub pixels: Vec<u16>,
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn skip_whitespace_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            let b = self.bytes[self.pos];
            if b == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    /// Reads a decimal unsigned integer token, returning it with its start offset.
    fn number(&mut self, what: &str) -> Result<(u64, usize)> {
        self.skip_whitespace_and_comments();
        let start = self.pos;
        if start >= self.bytes.len() {
            return Err(Error::parse(start, format!("unexpected end of data reading {what}")));
        }
        let mut value: u64 = 0;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            value = value
                .checked_mul(10)
                .and_then(|v| v.checked_add(u64::from(self.bytes[self.pos] - b'0')))
                .ok_or_else(|| Error::parse(start, format!("{what} overflows")))?;
            self.pos += 1;
        }
        if self.pos == start {
            return Err(Error::parse(start, format!("expected {what}")));
        }
        if self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() && self.bytes[self.pos] != b'#' {
            return Err(Error::parse(self.pos, format!("unexpected byte after {what}")));
        }
        Ok((value, start))
    }
}

/// Decodes a P2 or P5 image.
pub fn decode(bytes: &[u8]) -> Result<PgmImage> {
    if bytes.len() < 2 {
        return Err(Error::parse(0, "missing magic number"));
    }
    let format = match &bytes[..2] {
        b"P2" => PgmFormat::Ascii,
        b"P5" => PgmFormat::Binary,
        _ => return Err(Error::parse(0, "magic number is not P2 or P5")),
    };
    let mut cur = Cursor { bytes, pos: 2 };
    if cur.pos < bytes.len() && !bytes[cur.pos].is_ascii_whitespace() {
        return Err(Error::parse(cur.pos, "expected whitespace after magic number"));
    }
    let (width, w_at) = cur.number("width")?;
    let (height, h_at) = cur.number("height")?;
    let (maxval, m_at) = cur.number("maxval")?;
    if width == 0 {
        return Err(Error::parse(w_at, "width must be at least 1"));
    }
    if height == 0 {
        return Err(Error::parse(h_at, "height must be at least 1"));
    }
    if maxval != 255 && maxval != 65535 {
        return Err(Error::parse(
            m_at,
            format!("unsupported maxval {maxval}; expected 255 or 65535"),
        ));
    }
    let (width, height) = (width as usize, height as usize);
    let count = width
        .checked_mul(height)
        .ok_or_else(|| Error::parse(w_at, "image dimensions overflow"))?;
    let maxval = maxval as u16;

    let mut pixels = Vec::with_capacity(count);
    match format {
        PgmFormat::Ascii => {
            for i in 0..count {
                let (v, at) = cur.number(&format!("pixel {i}"))?;
                if v > u64::from(maxval) {
                    return Err(Error::parse(at, format!("pixel {v} exceeds maxval {maxval}")));
                }
                pixels.push(v as u16);
            }
        }
        PgmFormat::Binary => {
            // Exactly one whitespace byte separates maxval from the raster.
            if cur.pos >= bytes.len() {
                return Err(Error::parse(cur.pos, "truncated payload: missing raster"));
            }
            cur.pos += 1;
            let sample = if maxval > 255 { 2 } else { 1 };
            let need = count * sample;
            let available = bytes.len() - cur.pos;
            if available < need {
                return Err(Error::parse(
                    bytes.len(),
                    format!("truncated payload: expected {need} raster bytes, found {available}"),
                ));
            }
            for i in 0..count {
                let at = cur.pos + i * sample;
                let v = if sample == 2 {
                    u16::from_be_bytes([bytes[at], bytes[at + 1]])
                } else {
                    u16::from(bytes[at])
                };
                if v > maxval {
                    return Err(Error::parse(at, format!("pixel {v} exceeds maxval {maxval}")));
                }
                pixels.push(v);
            }
        }
    }
    Ok(PgmImage {
        width,
        height,
        maxval,
        pixels,
    })
}

/// Encodes an image with a canonical single-line header.
pub fn encode(image: &PgmImage, format: PgmFormat) -> Vec<u8> {
    let magic = match format {
        PgmFormat::Ascii => "P2",
        PgmFormat::Binary => "P5",
    };
    let mut out = format!("{magic}\n{} {}\n{}\n", image.width, image.height, image.maxval).into_bytes();
    match format {
        PgmFormat::Ascii => {
            for row in image.pixels.chunks(image.width) {
                let line: Vec<String> = row.iter().map(u16::to_string).collect();
                out.extend_from_slice(line.join(" ").as_bytes());
                out.push(b'\n');
            }
        }
        PgmFormat::Binary => {
            for &p in &image.pixels {
                if image.maxval > 255 {
                    out.extend_from_slice(&p.to_be_bytes());
                } else {
                    out.push(p as u8);
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ascii_with_comments() {
        let img = decode(b"P2\n# a comment\n2 1\n255\n0 # trailing\n255\n").unwrap();
        assert_eq!((img.width, img.height, img.maxval), (2, 1, 255));
        assert_eq!(img.pixels, vec![0, 255]);
    }

    #[test]
    fn binary_sixteen_bit_is_big_endian() {
        let mut bytes = b"P5 1 2 65535\n".to_vec();
        bytes.extend_from_slice(&[0x01, 0x02, 0xff, 0xff]);
        let img = decode(&bytes).unwrap();
        assert_eq!(img.pixels, vec![0x0102, 0xffff]);
    }

    #[test]
    fn bad_magic_reports_offset_zero() {
        match decode(b"P6\n1 1\n255\n\0") {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unsupported_maxval_points_at_the_token() {
        match decode(b"P2\n1 1\n100\n5\n") {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 7),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn truncated_binary_raster() {
        let err = decode(b"P5\n2 2\n255\n\x01\x02").unwrap_err();
        assert!(matches!(err, Error::Parse { offset: 13, .. }), "{err}");
    }

    #[test]
    fn truncated_ascii_raster() {
        let err = decode(b"P2\n2 2\n255\n1 2 3").unwrap_err();
        assert!(matches!(err, Error::Parse { offset: 16, .. }), "{err}");
    }

    #[test]
    fn pixel_above_maxval_in_ascii() {
        let err = decode(b"P2\n1 1\n255\n256\n").unwrap_err();
        assert!(matches!(err, Error::Parse { offset: 11, .. }), "{err}");
    }

    #[test]
    fn non_numeric_pixel_token() {
        let err = decode(b"P2\n1 1\n255\nx\n").unwrap_err();
        assert!(matches!(err, Error::Parse { offset: 11, .. }), "{err}");
    }

    #[test]
    fn encode_is_canonical_and_decodable() {
        let img = PgmImage {
            width: 3,
            height: 2,
            maxval: 255,
            pixels: vec![0, 1, 2, 253, 254, 255],
        };
        for format in [PgmFormat::Ascii, PgmFormat::Binary] {
            let bytes = encode(&img, format);
            assert_eq!(decode(&bytes).unwrap(), img);
            assert_eq!(encode(&decode(&bytes).unwrap(), format), bytes);
        }
    }
}
