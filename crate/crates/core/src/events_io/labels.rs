use serde::{Deserialize, Serialize};

use super::{EventsError, Result};

const HEADER: &str = "class,startTime_usec,endTime_usec";

/// One labelled gesture interval of a recording. `class_id` is 1-based as in
/// the label files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GestureSegment {
    pub class_id: u32,
    pub start_usec: u64,
    pub end_usec: u64,
}

/// Parses a gesture label CSV. Line numbers in errors are 1-based, the header
/// being line 1. Blank trailing lines are ignored.
pub fn parse_gesture_labels(text: &str) -> Result<Vec<GestureSegment>> {
    let mut lines = text.split('\n').enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end_matches('\r') == HEADER => {}
        _ => {
            return Err(EventsError::Labels {
                line: 1,
                reason: format!("expected header `{HEADER}`"),
            })
        }
    }
    let mut out = Vec::new();
    for (i, raw) in lines {
        let line = i + 1;
        let row = raw.trim_end_matches('\r');
        if row.trim().is_empty() {
            continue;
        }
        let err = |reason: String| EventsError::Labels { line, reason };
        let fields: Vec<&str> = row.split(',').collect();
        if fields.len() != 3 {
            return Err(err(format!("expected 3 fields, got {}", fields.len())));
        }
        let int = |s: &str| -> Result<u64> {
            s.trim()
                .parse::<u64>()
                .map_err(|_| err(format!("`{s}` is not a non-negative integer")))
        };
        let class_id = int(fields[0])?;
        let start_usec = int(fields[1])?;
        let end_usec = int(fields[2])?;
        if class_id == 0 || class_id > u32::MAX as u64 {
            return Err(err(format!("class {class_id} out of range")));
        }
        if start_usec >= end_usec {
            return Err(err(format!("start {start_usec} is not before end {end_usec}")));
        }
        out.push(GestureSegment {
            class_id: class_id as u32,
            start_usec,
            end_usec,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_row() {
        let segs = parse_gesture_labels("class,startTime_usec,endTime_usec\n1,1000000,2000000\n").unwrap();
        assert_eq!(
            segs,
            vec![GestureSegment {
                class_id: 1,
                start_usec: 1_000_000,
                end_usec: 2_000_000
            }]
        );
    }

    #[test]
    fn header_only() {
        assert!(parse_gesture_labels("class,startTime_usec,endTime_usec\n")
            .unwrap()
            .is_empty());
    }

    #[test]
    fn inverted_row_names_line_two() {
        let e = parse_gesture_labels("class,startTime_usec,endTime_usec\n3,500,400\n").unwrap_err();
        assert!(matches!(e, EventsError::Labels { line: 2, .. }));
    }

    #[test]
    fn non_integer_field() {
        let e = parse_gesture_labels("class,startTime_usec,endTime_usec\n1,2,3\nx,1,2\n").unwrap_err();
        assert!(matches!(e, EventsError::Labels { line: 3, .. }));
    }

    #[test]
    fn order_preserved() {
        let segs = parse_gesture_labels("class,startTime_usec,endTime_usec\n5,10,20\n2,1,3\n").unwrap();
        assert_eq!(segs.iter().map(|s| s.class_id).collect::<Vec<_>>(), vec![5, 2]);
    }
}
