//! Binary PPM (P6, maxval 255).

use crate::image::RawImage;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PpmError {
    #[error("byte {offset}: {message}")]
    Malformed { offset: usize, message: String },
    #[error("unsupported PPM variant: {0}")]
    Unsupported(String),
}

fn malformed(offset: usize, message: impl Into<String>) -> PpmError {
    PpmError::Malformed { offset, message: message.into() }
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' && self.bytes[self.pos] != b'\r' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize, PpmError> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(malformed(start, format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| malformed(start, format!("{what} out of range")))
    }
}

pub fn decode_ppm(bytes: &[u8]) -> Result<RawImage, PpmError> {
    if bytes.len() < 2 {
        return Err(malformed(0, "missing magic number"));
    }
    match &bytes[..2] {
        b"P6" => {}
        m @ (b"P1" | b"P2" | b"P3" | b"P4" | b"P5" | b"P7") => {
            return Err(PpmError::Unsupported(String::from_utf8_lossy(m).into_owned()))
        }
        _ => return Err(malformed(0, "not a PPM file")),
    }
    let mut h = Header { bytes, pos: 2 };
    if h.pos < bytes.len() && !bytes[h.pos].is_ascii_whitespace() && bytes[h.pos] != b'#' {
        return Err(malformed(h.pos, "expected whitespace after magic number"));
    }
    let width = h.number("width")?;
    let height = h.number("height")?;
    let maxval = h.number("maxval")?;
    if maxval != 255 {
        return Err(PpmError::Unsupported(format!("maxval {maxval}")));
    }
    match bytes.get(h.pos) {
        Some(c) if c.is_ascii_whitespace() => h.pos += 1,
        _ => return Err(malformed(h.pos, "expected a single whitespace before pixel data")),
    }
    let need = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(3))
        .ok_or_else(|| malformed(h.pos, "image dimensions overflow"))?;
    let data = &bytes[h.pos..];
    if data.len() < need {
        return Err(malformed(bytes.len(), format!("truncated pixel data: {} of {need} bytes", data.len())));
    }
    RawImage::new(width, height, data[..need].to_vec()).map_err(|e| malformed(h.pos, e.to_string()))
}

pub fn encode_ppm(img: &RawImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.data());
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_pixels() {
        let img = decode_ppm(b"P6\n2 1\n255\n\xff\x00\x00\x00\xff\x00").unwrap();
        assert_eq!((img.width(), img.height()), (2, 1));
        assert_eq!(img.data(), &[0xFF, 0, 0, 0, 0xFF, 0]);
        assert_eq!(decode_ppm(&encode_ppm(&img)).unwrap(), img);
    }

    #[test]
    fn comments_skipped() {
        let img = decode_ppm(b"P6 # made by hand\n# another\n1 # w\n1\n255\n\x01\x02\x03").unwrap();
        assert_eq!(img.pixel(0, 0), [1, 2, 3]);
    }

    #[test]
    fn rejects() {
        assert!(matches!(decode_ppm(b"P3\n1 1\n255\n0 0 0"), Err(PpmError::Unsupported(_))));
        assert!(matches!(decode_ppm(b"P6\n1 1\n65535\n\0\0\0\0\0\0"), Err(PpmError::Unsupported(_))));
        assert!(matches!(decode_ppm(b"P6\n2 2\n255\n\0\0\0"), Err(PpmError::Malformed { .. })));
        assert!(matches!(decode_ppm(b"P6\nx 2\n255\n"), Err(PpmError::Malformed { offset: 3, .. })));
        assert!(decode_ppm(b"").is_err());
    }

    proptest! {
        #[test]
        fn decoder_is_total(bytes in proptest::collection::vec(any::<u8>(), 0..64)) {
            let _ = decode_ppm(&bytes);
            let mut with_magic = b"P6 ".to_vec();
            with_magic.extend(&bytes);
            let _ = decode_ppm(&with_magic);
        }
    }
}
