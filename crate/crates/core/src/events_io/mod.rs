//! Raw event streams: types, the canonical EVT interchange format, AEDAT 3.1
//! import, gesture label files, slicing and deterministic synthetic streams.

mod aedat;
mod canonical;
mod labels;
mod synth;

pub use aedat::{parse_aedat, parse_aedat_with_resolution, AedatImport};
pub use canonical::{parse_canonical, read_canonical_file, write_canonical, write_canonical_file};
pub use labels::{parse_gesture_labels, GestureSegment};
pub use synth::{synth_stream, Pattern, SynthParams};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest timestamp representable without overflowing microsecond arithmetic.
pub const MAX_TIMESTAMP: u64 = (1 << 63) - 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EventsError {
    #[error("malformed header: {0}")]
    Header(String),
    #[error("record at byte offset {offset}: {reason}")]
    Record { offset: usize, reason: String },
    #[error("aedat packet {packet}: {reason}")]
    Aedat { packet: usize, reason: String },
    #[error("label file line {line}: {reason}")]
    Labels { line: usize, reason: String },
    #[error("invalid slice: t0 {t0} must be < t1 {t1}")]
    InvalidSlice { t0: u64, t1: u64 },
    #[error("stream invariant violated at event {index}: {reason}")]
    Invariant { index: usize, reason: String },
    #[error("unknown synthetic pattern `{0}`")]
    UnknownPattern(String),
    #[error("synthetic stream needs a non-zero duration")]
    ZeroDuration,
    #[error("i/o error on {path}: {reason}")]
    Io { path: String, reason: String },
}

pub type Result<T, E = EventsError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Polarity {
    Negative,
    Positive,
}

impl Polarity {
    pub fn from_bit(bit: bool) -> Self {
        if bit {
            Polarity::Positive
        } else {
            Polarity::Negative
        }
    }

    pub fn is_positive(self) -> bool {
        matches!(self, Polarity::Positive)
    }
}

/// One sensor event. `x` is the pixel column, `y` the row, `t` microseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EventRecord {
    pub x: u16,
    pub y: u16,
    pub polarity: Polarity,
    pub t: u64,
}

impl EventRecord {
    pub fn new(x: u16, y: u16, polarity: Polarity, t: u64) -> Self {
        Self { x, y, polarity, t }
    }
}

/// A time-ordered sequence of events with the sensor resolution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventStream {
    pub width: u16,
    pub height: u16,
    pub events: Vec<EventRecord>,
}

impl EventStream {
    pub fn new(width: u16, height: u16, events: Vec<EventRecord>) -> Self {
        Self { width, height, events }
    }

    pub fn empty(width: u16, height: u16) -> Self {
        Self::new(width, height, Vec::new())
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Last timestamp plus one, or zero for an empty stream.
    pub fn duration(&self) -> u64 {
        self.events.last().map_or(0, |e| e.t + 1)
    }

    /// Checks ordering, bounds and the 63-bit timestamp limit.
    pub fn validate(&self) -> Result<()> {
        let mut prev = 0u64;
        for (index, e) in self.events.iter().enumerate() {
            if e.x >= self.width || e.y >= self.height {
                return Err(EventsError::Invariant {
                    index,
                    reason: format!("({}, {}) outside {}x{}", e.x, e.y, self.width, self.height),
                });
            }
            if e.t > MAX_TIMESTAMP {
                return Err(EventsError::Invariant {
                    index,
                    reason: format!("timestamp {} exceeds 63 bits", e.t),
                });
            }
            if e.t < prev {
                return Err(EventsError::Invariant {
                    index,
                    reason: format!("timestamp {} precedes {}", e.t, prev),
                });
            }
            prev = e.t;
        }
        Ok(())
    }

    pub fn count_polarity(&self, polarity: Polarity) -> usize {
        self.events.iter().filter(|e| e.polarity == polarity).count()
    }
}

/// Events with `t0 <= t < t1`, re-based so that `t0` becomes zero.
pub fn slice_stream(stream: &EventStream, t0: u64, t1: u64) -> Result<EventStream> {
    if t0 >= t1 {
        return Err(EventsError::InvalidSlice { t0, t1 });
    }
    let lo = stream.events.partition_point(|e| e.t < t0);
    let hi = stream.events.partition_point(|e| e.t < t1);
    let events = stream.events[lo..hi.max(lo)]
        .iter()
        .map(|e| EventRecord { t: e.t - t0, ..*e })
        .collect();
    Ok(EventStream::new(stream.width, stream.height, events))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn at(ts: &[u64]) -> EventStream {
        EventStream::new(
            8,
            8,
            ts.iter()
                .map(|&t| EventRecord::new(1, 1, Polarity::Positive, t))
                .collect(),
        )
    }

    #[test]
    fn slice_rebases_and_keeps_half_open_interval() {
        let s = at(&[10, 20, 30]);
        let out = slice_stream(&s, 15, 30).unwrap();
        assert_eq!(out.events.len(), 1);
        assert_eq!(out.events[0].t, 5);
    }

    #[test]
    fn slice_whole_stream() {
        let s = at(&[10, 20, 30]);
        let out = slice_stream(&s, 10, 31).unwrap();
        assert_eq!(out.events.iter().map(|e| e.t).collect::<Vec<_>>(), vec![0, 10, 20]);
        assert_eq!((out.width, out.height), (8, 8));
    }

    #[test]
    fn slice_in_gap_is_empty() {
        let s = at(&[10, 20, 30]);
        assert!(slice_stream(&s, 21, 29).unwrap().is_empty());
    }

    #[test]
    fn slice_rejects_inverted_interval() {
        let s = at(&[10]);
        assert_eq!(slice_stream(&s, 5, 5), Err(EventsError::InvalidSlice { t0: 5, t1: 5 }));
    }

    #[test]
    fn validate_flags_regression_and_bounds() {
        assert!(at(&[3, 2]).validate().is_err());
        let mut s = at(&[1]);
        s.events[0].x = 8;
        assert!(s.validate().is_err());
        assert!(at(&[1, 1, 2]).validate().is_ok());
    }
}
