//! AEDAT 3.1 import (iniVation "AEDAT 3.1" file format, as written by cAER
//! and jAER 3.x). Only polarity packets are decoded.
//!
//! Layout:
//! * ASCII header lines, each starting with `#`, the first being
//!   `#!AER-DAT3.1` and the last `#!END-HEADER`, CRLF terminated.
//! * A sequence of packets. Each packet starts with a 28-byte little-endian
//!   header: `i16 eventType, i16 eventSource, i32 eventSize, i32 eventTSOffset,
//!   i32 eventTSOverflow, i32 eventCapacity, i32 eventNumber, i32 eventValid`,
//!   followed by `eventCapacity * eventSize` bytes of events.
//! * Polarity events (`eventType == 1`) are 8 bytes: `u32 data, i32 timestamp`.
//!   `data` bit 0 is the validity mark, bit 1 the polarity, bits 2..=16 the `y`
//!   address and bits 17..=31 the `x` address. The full timestamp is
//!   `(eventTSOverflow << 31) | timestamp`.

use super::{EventRecord, EventStream, EventsError, Polarity, Result};

const VERSION_LINE: &str = "#!AER-DAT3.1";
const END_HEADER: &str = "#!END-HEADER";
const PACKET_HEADER_LEN: usize = 28;
const POLARITY_EVENT: i16 = 1;
const POLARITY_EVENT_SIZE: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AedatImport {
    pub stream: EventStream,
    /// Packets of any type other than polarity.
    pub skipped_packets: usize,
    pub polarity_packets: usize,
    /// Polarity events whose validity mark was cleared.
    pub invalid_events: usize,
}

/// Parses an AEDAT 3.1 file, taking the resolution from the `#Source` header
/// line (DVS128 when absent or unrecognised).
pub fn parse_aedat(bytes: &[u8]) -> Result<AedatImport> {
    let (header_end, source) = parse_header(bytes)?;
    let (width, height) = source.as_deref().and_then(resolution_for_source).unwrap_or((128, 128));
    decode_packets(&bytes[header_end..], width, height)
}

pub fn parse_aedat_with_resolution(bytes: &[u8], width: u16, height: u16) -> Result<AedatImport> {
    let (header_end, _) = parse_header(bytes)?;
    decode_packets(&bytes[header_end..], width, height)
}

fn resolution_for_source(name: &str) -> Option<(u16, u16)> {
    let name = name.to_ascii_uppercase();
    if name.contains("DVS128") {
        Some((128, 128))
    } else if name.contains("DAVIS240") {
        Some((240, 180))
    } else if name.contains("DAVIS346") {
        Some((346, 260))
    } else if name.contains("DVXPLORER") {
        Some((640, 480))
    } else {
        None
    }
}

/// Returns the byte offset of the first packet and the first source name.
fn parse_header(bytes: &[u8]) -> Result<(usize, Option<String>)> {
    let mut pos = 0;
    let mut first = true;
    let mut source = None;
    loop {
        if pos >= bytes.len() || bytes[pos] != b'#' {
            return Err(EventsError::Header(if first {
                "missing AEDAT version line".into()
            } else {
                "header not terminated by #!END-HEADER".into()
            }));
        }
        let nl = bytes[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| EventsError::Header("unterminated header line".into()))?;
        let line = String::from_utf8_lossy(&bytes[pos..pos + nl]);
        let line = line.trim_end_matches('\r');
        pos += nl + 1;
        if first {
            if line != VERSION_LINE {
                return Err(EventsError::Header(format!(
                    "unsupported version line `{line}`, expected `{VERSION_LINE}`"
                )));
            }
            first = false;
            continue;
        }
        if line == END_HEADER {
            return Ok((pos, source));
        }
        if source.is_none() {
            if let Some(rest) = line.strip_prefix("#Source ") {
                source = rest.split_once(':').map(|(_, n)| n.trim().to_string());
            }
        }
    }
}

fn read_i16(b: &[u8], at: usize) -> i16 {
    i16::from_le_bytes([b[at], b[at + 1]])
}

fn read_i32(b: &[u8], at: usize) -> i32 {
    i32::from_le_bytes(b[at..at + 4].try_into().expect("4-byte slice"))
}

fn decode_packets(body: &[u8], width: u16, height: u16) -> Result<AedatImport> {
    let mut events = Vec::new();
    let mut skipped = 0;
    let mut polarity_packets = 0;
    let mut invalid = 0;
    let mut pos = 0;
    let mut packet = 0;
    while pos < body.len() {
        let err = |reason: String| EventsError::Aedat { packet, reason };
        if body.len() - pos < PACKET_HEADER_LEN {
            return Err(err("truncated packet header".into()));
        }
        let event_type = read_i16(body, pos);
        let event_size = read_i32(body, pos + 4);
        let ts_overflow = read_i32(body, pos + 12);
        let capacity = read_i32(body, pos + 20);
        let number = read_i32(body, pos + 24);
        if event_size <= 0 || capacity < 0 || number < 0 || number > capacity || ts_overflow < 0 {
            return Err(err(format!(
                "inconsistent packet header (size {event_size}, capacity {capacity}, number {number})"
            )));
        }
        let payload_len = capacity as usize * event_size as usize;
        let start = pos + PACKET_HEADER_LEN;
        if body.len() - start < payload_len {
            return Err(err(format!(
                "truncated payload: need {payload_len} bytes, have {}",
                body.len() - start
            )));
        }
        if event_type == POLARITY_EVENT {
            if event_size as usize != POLARITY_EVENT_SIZE {
                return Err(err(format!("polarity event size {event_size} != 8")));
            }
            polarity_packets += 1;
            for i in 0..number as usize {
                let at = start + i * POLARITY_EVENT_SIZE;
                let data = u32::from_le_bytes(body[at..at + 4].try_into().expect("4 bytes"));
                let ts = read_i32(body, at + 4);
                if data & 1 == 0 {
                    invalid += 1;
                    continue;
                }
                let polarity = Polarity::from_bit(data >> 1 & 1 == 1);
                let y = (data >> 2) & 0x7fff;
                let x = (data >> 17) & 0x7fff;
                if x >= width as u32 || y >= height as u32 {
                    return Err(err(format!("event {i} at ({x}, {y}) outside {width}x{height}")));
                }
                let t = ((ts_overflow as u64) << 31) | (ts as u32 as u64 & 0x7fff_ffff);
                events.push(EventRecord {
                    x: x as u16,
                    y: y as u16,
                    polarity,
                    t,
                });
            }
        } else {
            skipped += 1;
        }
        pos = start + payload_len;
        packet += 1;
    }
    // Packets from different sources may interleave; stable so equal stamps keep file order.
    events.sort_by_key(|e| e.t);
    Ok(AedatImport {
        stream: EventStream::new(width, height, events),
        skipped_packets: skipped,
        polarity_packets,
        invalid_events: invalid,
    })
}
