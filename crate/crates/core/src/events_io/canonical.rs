//! Canonical EVT format.
//!
//! ```text
//! EVT1 <width> <height> <count>\n
//! count x 16-byte little-endian records:
//!   u16 x | u16 y | u8 polarity (0 negative, 1 positive) | 3 zero pad bytes | u64 t
//! ```

use std::path::Path;

use super::{EventRecord, EventStream, EventsError, Polarity, Result, MAX_TIMESTAMP};

const MAGIC: &str = "EVT1";
const RECORD_LEN: usize = 16;
// Longest sane header: magic, two u16 and one u64 in decimal plus separators.
const MAX_HEADER_LEN: usize = 64;

pub fn parse_canonical(bytes: &[u8]) -> Result<EventStream> {
    let newline = bytes
        .iter()
        .take(MAX_HEADER_LEN)
        .position(|&b| b == b'\n')
        .ok_or_else(|| EventsError::Header("missing header line".into()))?;
    let header =
        std::str::from_utf8(&bytes[..newline]).map_err(|_| EventsError::Header("header is not ASCII".into()))?;
    let fields: Vec<&str> = header.split(' ').collect();
    if fields.len() != 4 || fields[0] != MAGIC {
        return Err(EventsError::Header(format!(
            "expected `EVT1 <width> <height> <count>`, got `{header}`"
        )));
    }
    let width: u16 = parse_field(fields[1], "width")?;
    let height: u16 = parse_field(fields[2], "height")?;
    let count: u64 = parse_field(fields[3], "count")?;
    if width == 0 || height == 0 {
        return Err(EventsError::Header("zero resolution".into()));
    }

    let body = &bytes[newline + 1..];
    let expected = (count as u128) * RECORD_LEN as u128;
    if body.len() as u128 != expected {
        return Err(EventsError::Header(format!(
            "header declares {count} records ({expected} bytes) but payload has {} bytes",
            body.len()
        )));
    }

    let mut events = Vec::with_capacity(count as usize);
    let mut prev = 0u64;
    for (i, rec) in body.chunks_exact(RECORD_LEN).enumerate() {
        let offset = newline + 1 + i * RECORD_LEN;
        let bad = |reason: String| EventsError::Record { offset, reason };
        let x = u16::from_le_bytes([rec[0], rec[1]]);
        let y = u16::from_le_bytes([rec[2], rec[3]]);
        let polarity = match rec[4] {
            0 => Polarity::Negative,
            1 => Polarity::Positive,
            p => return Err(bad(format!("polarity byte {p} is not 0 or 1"))),
        };
        if rec[5..8] != [0, 0, 0] {
            return Err(bad("non-zero pad bytes".into()));
        }
        let t = u64::from_le_bytes(rec[8..16].try_into().expect("8-byte slice"));
        if x >= width || y >= height {
            return Err(bad(format!("({x}, {y}) outside {width}x{height}")));
        }
        if t > MAX_TIMESTAMP {
            return Err(bad(format!("timestamp {t} exceeds 63 bits")));
        }
        if t < prev {
            return Err(bad(format!("timestamp {t} precedes {prev}")));
        }
        prev = t;
        events.push(EventRecord { x, y, polarity, t });
    }
    Ok(EventStream::new(width, height, events))
}

fn parse_field<F: std::str::FromStr>(s: &str, name: &str) -> Result<F> {
    // Reject signs, padding and other forms `FromStr` tolerates.
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
        return Err(EventsError::Header(format!("{name} `{s}` is not an integer")));
    }
    s.parse()
        .map_err(|_| EventsError::Header(format!("{name} `{s}` out of range")))
}

/// Serializes a valid stream; unsorted or out-of-bounds streams are refused.
pub fn write_canonical(stream: &EventStream) -> Result<Vec<u8>> {
    stream.validate()?;
    if stream.width == 0 || stream.height == 0 {
        return Err(EventsError::Header("zero resolution".into()));
    }
    let header = format!("{MAGIC} {} {} {}\n", stream.width, stream.height, stream.events.len());
    let mut out = Vec::with_capacity(header.len() + stream.events.len() * RECORD_LEN);
    out.extend_from_slice(header.as_bytes());
    for e in &stream.events {
        out.extend_from_slice(&e.x.to_le_bytes());
        out.extend_from_slice(&e.y.to_le_bytes());
        out.push(u8::from(e.polarity.is_positive()));
        out.extend_from_slice(&[0, 0, 0]);
        out.extend_from_slice(&e.t.to_le_bytes());
    }
    Ok(out)
}

pub fn read_canonical_file(path: &Path) -> Result<EventStream> {
    let bytes = std::fs::read(path).map_err(|e| EventsError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    parse_canonical(&bytes)
}

pub fn write_canonical_file(path: &Path, stream: &EventStream) -> Result<()> {
    let bytes = write_canonical(stream)?;
    std::fs::write(path, bytes).map_err(|e| EventsError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_stream() {
        let s = parse_canonical(b"EVT1 128 128 0\n").unwrap();
        assert_eq!(s, EventStream::empty(128, 128));
        assert_eq!(write_canonical(&s).unwrap(), b"EVT1 128 128 0\n");
    }

    #[test]
    fn single_record_layout() {
        let mut bytes = b"EVT1 128 128 1\n".to_vec();
        bytes.extend_from_slice(&[3, 0, 4, 0, 1, 0, 0, 0, 100, 0, 0, 0, 0, 0, 0, 0]);
        let s = parse_canonical(&bytes).unwrap();
        assert_eq!(s.events, vec![EventRecord::new(3, 4, Polarity::Positive, 100)]);
        assert_eq!(write_canonical(&s).unwrap(), bytes);
    }

    #[test]
    fn out_of_bounds_reports_record_offset() {
        let mut bytes = b"EVT1 128 128 2\n".to_vec();
        bytes.extend_from_slice(&[3, 0, 4, 0, 1, 0, 0, 0, 100, 0, 0, 0, 0, 0, 0, 0]);
        bytes.extend_from_slice(&[200, 0, 4, 0, 1, 0, 0, 0, 101, 0, 0, 0, 0, 0, 0, 0]);
        match parse_canonical(&bytes) {
            Err(EventsError::Record { offset, .. }) => assert_eq!(offset, 15 + 16),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn timestamp_regression_is_strict() {
        let mut bytes = b"EVT1 8 8 2\n".to_vec();
        bytes.extend_from_slice(&[0, 0, 0, 0, 1, 0, 0, 0, 9, 0, 0, 0, 0, 0, 0, 0]);
        bytes.extend_from_slice(&[0, 0, 0, 0, 1, 0, 0, 0, 8, 0, 0, 0, 0, 0, 0, 0]);
        assert!(matches!(
            parse_canonical(&bytes),
            Err(EventsError::Record { offset: 27, .. })
        ));
    }

    #[test]
    fn nonzero_padding_rejected() {
        let mut bytes = b"EVT1 8 8 1\n".to_vec();
        bytes.extend_from_slice(&[0, 0, 0, 0, 1, 0, 7, 0, 9, 0, 0, 0, 0, 0, 0, 0]);
        assert!(matches!(parse_canonical(&bytes), Err(EventsError::Record { .. })));
    }

    #[test]
    fn malformed_headers() {
        for h in [
            &b"EVT2 8 8 0\n"[..],
            b"EVT1 8 8\n",
            b"EVT1 8 8 -1\n",
            b"EVT1 0 8 0\n",
            b"EVT1 8 8 1\n",
            b"EVT1 8 8 0",
            b"EVT1 8 8 0\nextra",
        ] {
            assert!(
                matches!(parse_canonical(h), Err(EventsError::Header(_))),
                "{}",
                String::from_utf8_lossy(h)
            );
        }
    }

    #[test]
    fn writer_refuses_unsorted() {
        let s = EventStream::new(
            8,
            8,
            vec![
                EventRecord::new(0, 0, Polarity::Positive, 5),
                EventRecord::new(0, 0, Polarity::Positive, 4),
            ],
        );
        assert!(write_canonical(&s).is_err());
    }

    #[test]
    fn thousand_record_round_trip() {
        let (s, _) = super::super::synth_stream(
            super::super::Pattern::RotatingDot,
            &super::super::SynthParams {
                width: 64,
                height: 48,
                duration_usec: 10_000,
                rate: 0.1,
            },
            3,
        )
        .unwrap();
        assert!(s.len() > 900);
        let bytes = write_canonical(&s).unwrap();
        assert_eq!(parse_canonical(&bytes).unwrap(), s);
    }

    fn arb_stream() -> impl Strategy<Value = EventStream> {
        (1u16..300, 1u16..300).prop_flat_map(|(w, h)| {
            prop::collection::vec((0..w, 0..h, any::<bool>(), 0u64..1 << 40), 0..64).prop_map(move |mut raw| {
                raw.sort_by_key(|r| r.3);
                EventStream::new(
                    w,
                    h,
                    raw.into_iter()
                        .map(|(x, y, p, t)| EventRecord::new(x, y, Polarity::from_bit(p), t))
                        .collect(),
                )
            })
        })
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(s in arb_stream()) {
            let bytes = write_canonical(&s).unwrap();
            let back = parse_canonical(&bytes).unwrap();
            prop_assert_eq!(&back, &s);
            prop_assert_eq!(write_canonical(&back).unwrap(), bytes);
        }
    }
}
