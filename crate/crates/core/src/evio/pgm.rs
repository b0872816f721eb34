use std::io::{self, Write};

use super::Frame;

#[derive(Debug, thiserror::Error)]
pub enum PgmError {
    #[error("not a binary PGM (missing P5 magic)")]
    Magic,
    #[error("malformed PGM header")]
    Header,
    #[error("unsupported maxval {0}, only 255 is accepted")]
    Maxval(u32),
    #[error("pixel data truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
}

/// `frame_<index:06>.pgm`
pub fn frame_file_name(window_index: u64) -> String {
    format!("frame_{window_index:06}.pgm")
}

/// Writes `frame` as binary PGM: `P5\n<w> <h>\n255\n` followed by raw rows.
pub fn write_frame_pgm<W: Write>(frame: &Frame, mut sink: W) -> io::Result<()> {
    write!(sink, "P5\n{} {}\n255\n", frame.width, frame.height)?;
    sink.write_all(&frame.pixels)?;
    sink.flush()
}

/// Parses a binary PGM with maxval 255 into `(width, height, pixels)`.
///
/// Accepts arbitrary whitespace and `#` comments in the header, as other
/// writers produce them.
pub fn read_pgm(data: &[u8]) -> Result<(u32, u32, Vec<u8>), PgmError> {
    if !data.starts_with(b"P5") {
        return Err(PgmError::Magic);
    }
    let mut pos = 2;
    let mut fields = [0u32; 3];
    for field in fields.iter_mut() {
        loop {
            match data.get(pos) {
                Some(b'#') => {
                    while data.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                _ => break,
            }
        }
        let start = pos;
        while data.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        *field = std::str::from_utf8(&data[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or(PgmError::Header)?;
    }
    // exactly one whitespace byte separates header and raster
    if !data.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(PgmError::Header);
    }
    pos += 1;
    let [w, h, maxval] = fields;
    if maxval != 255 {
        return Err(PgmError::Maxval(maxval));
    }
    let expected = w as usize * h as usize;
    let raster = &data[pos..];
    if raster.len() < expected {
        return Err(PgmError::Truncated {
            expected,
            found: raster.len(),
        });
    }
    Ok((w, h, raster[..expected].to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evio::SensorGeometry;
    use proptest::prelude::*;

    fn frame(w: u16, h: u16, pixels: Vec<u8>) -> Frame {
        Frame {
            width: w,
            height: h,
            pixels,
            t_end: 0,
            window_index: 0,
        }
    }

    #[test]
    fn two_by_one() {
        let mut out = Vec::new();
        write_frame_pgm(&frame(2, 1, vec![0, 255]), &mut out).unwrap();
        assert_eq!(out, b"P5\n2 1\n255\n\x00\xff");
    }

    #[test]
    fn one_by_one() {
        let mut out = Vec::new();
        write_frame_pgm(&frame(1, 1, vec![128]), &mut out).unwrap();
        assert_eq!(out, b"P5\n1 1\n255\n\x80");
    }

    #[test]
    fn hd_header_round_trip() {
        let f = Frame::filled(SensorGeometry::HD, 128, 0, 0);
        let mut out = Vec::new();
        write_frame_pgm(&f, &mut out).unwrap();
        let (w, h, px) = read_pgm(&out).unwrap();
        assert_eq!((w, h), (1280, 720));
        assert_eq!(px.len(), 921_600);
        assert!(out.starts_with(b"P5\n1280 720\n255\n"));
    }

    #[test]
    fn file_names() {
        assert_eq!(frame_file_name(0), "frame_000000.pgm");
        assert_eq!(frame_file_name(1234567), "frame_1234567.pgm");
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(read_pgm(b"P6\n1 1\n255\n\0"), Err(PgmError::Magic)));
        assert!(matches!(read_pgm(b"P5\n1 1\n65535\n\0\0"), Err(PgmError::Maxval(65535))));
        assert!(matches!(
            read_pgm(b"P5\n2 2\n255\n\0"),
            Err(PgmError::Truncated { expected: 4, found: 1 })
        ));
        assert!(read_pgm(b"P5 # c\n1 1\n255\n\x07").is_ok());
    }

    proptest! {
        #[test]
        fn pgm_round_trip((w, h, px) in (1u16..20, 1u16..20).prop_flat_map(|(w, h)| {
            (Just(w), Just(h), proptest::collection::vec(any::<u8>(), w as usize * h as usize))
        })) {
            let mut out = Vec::new();
            write_frame_pgm(&frame(w, h, px.clone()), &mut out).unwrap();
            let (rw, rh, rpx) = read_pgm(&out).unwrap();
            prop_assert_eq!((rw, rh), (w as u32, h as u32));
            prop_assert_eq!(rpx, px);
        }
    }
}
