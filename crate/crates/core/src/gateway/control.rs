//! PC control channel framing.
//!
//! ```text
//! 0xA5 | type | len | payload[len] | checksum
//! ```
//!
//! `checksum` is the XOR of `type`, `len` and every payload byte. Multi-byte
//! payload fields are big-endian. The decoder resynchronises on the next
//! `0xA5` after any fault.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MAGIC: u8 = 0xA5;

pub const TYPE_SET_VALUE: u8 = 0x01;
pub const TYPE_QUERY_COUNTER: u8 = 0x02;
pub const TYPE_EVENT_REPORT: u8 = 0x03;
pub const TYPE_COUNTER_REPORT: u8 = 0x04;
pub const TYPE_SET_DISPLAY_MODE: u8 = 0x05;

const HEADER_LEN: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ControlFrame {
    /// PC → gateway: new sensor set value.
    SetValue(u16),
    /// PC → gateway: ask for the RX counter of a key.
    QueryCounter(u32),
    /// Gateway → PC: one received event.
    EventReport {
        key: u32,
        tick: u64,
    },
    /// Gateway → PC: answer to `QueryCounter`.
    CounterReport {
        key: u32,
        count: u64,
    },
    SetDisplayMode(u8),
}

impl ControlFrame {
    pub fn frame_type(&self) -> u8 {
        match self {
            ControlFrame::SetValue(_) => TYPE_SET_VALUE,
            ControlFrame::QueryCounter(_) => TYPE_QUERY_COUNTER,
            ControlFrame::EventReport { .. } => TYPE_EVENT_REPORT,
            ControlFrame::CounterReport { .. } => TYPE_COUNTER_REPORT,
            ControlFrame::SetDisplayMode(_) => TYPE_SET_DISPLAY_MODE,
        }
    }

    pub fn payload(&self) -> Vec<u8> {
        match *self {
            ControlFrame::SetValue(v) => v.to_be_bytes().to_vec(),
            ControlFrame::QueryCounter(key) => key.to_be_bytes().to_vec(),
            ControlFrame::EventReport { key, tick } => {
                let mut p = key.to_be_bytes().to_vec();
                p.extend_from_slice(&tick.to_be_bytes());
                p
            }
            ControlFrame::CounterReport { key, count } => {
                let mut p = key.to_be_bytes().to_vec();
                p.extend_from_slice(&count.to_be_bytes());
                p
            }
            ControlFrame::SetDisplayMode(m) => vec![m],
        }
    }

    fn from_parts(frame_type: u8, payload: &[u8]) -> Option<Self> {
        let be32 = |b: &[u8]| u32::from_be_bytes(b[..4].try_into().unwrap());
        let be64 = |b: &[u8]| u64::from_be_bytes(b[..8].try_into().unwrap());
        Some(match frame_type {
            TYPE_SET_VALUE => ControlFrame::SetValue(u16::from_be_bytes([payload[0], payload[1]])),
            TYPE_QUERY_COUNTER => ControlFrame::QueryCounter(be32(payload)),
            TYPE_EVENT_REPORT => ControlFrame::EventReport {
                key: be32(payload),
                tick: be64(&payload[4..]),
            },
            TYPE_COUNTER_REPORT => ControlFrame::CounterReport {
                key: be32(payload),
                count: be64(&payload[4..]),
            },
            TYPE_SET_DISPLAY_MODE => ControlFrame::SetDisplayMode(payload[0]),
            _ => return None,
        })
    }
}

/// Fixed payload size for each known frame type.
pub fn payload_len(frame_type: u8) -> Option<usize> {
    match frame_type {
        TYPE_SET_VALUE => Some(2),
        TYPE_QUERY_COUNTER => Some(4),
        TYPE_EVENT_REPORT | TYPE_COUNTER_REPORT => Some(12),
        TYPE_SET_DISPLAY_MODE => Some(1),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum ControlError {
    #[error("PayloadTooLong: {0} bytes (max 255)")]
    PayloadTooLong(usize),
    #[error("ChecksumMismatch at byte {offset}")]
    ChecksumMismatch { offset: usize },
    #[error("TruncatedFrame at byte {offset}")]
    TruncatedFrame { offset: usize },
    #[error("UnknownFrameType {frame_type:#04x} at byte {offset}")]
    UnknownFrameType { offset: usize, frame_type: u8 },
    #[error("LengthMismatch at byte {offset}: type {frame_type:#04x} carries {expected} bytes, header says {got}")]
    LengthMismatch {
        offset: usize,
        frame_type: u8,
        expected: usize,
        got: usize,
    },
}

fn checksum(frame_type: u8, payload: &[u8]) -> u8 {
    payload
        .iter()
        .fold(frame_type ^ payload.len() as u8, |acc, b| acc ^ b)
}

/// Frames an arbitrary payload.
pub fn encode_raw(frame_type: u8, payload: &[u8]) -> Result<Vec<u8>, ControlError> {
    if payload.len() > usize::from(u8::MAX) {
        return Err(ControlError::PayloadTooLong(payload.len()));
    }
    let mut out = Vec::with_capacity(payload.len() + HEADER_LEN + 1);
    out.extend_from_slice(&[MAGIC, frame_type, payload.len() as u8]);
    out.extend_from_slice(payload);
    out.push(checksum(frame_type, payload));
    Ok(out)
}

pub fn encode_control_frame(frame: &ControlFrame) -> Vec<u8> {
    encode_raw(frame.frame_type(), &frame.payload()).expect("typed payloads are short")
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodeOutcome {
    pub frames: Vec<ControlFrame>,
    pub errors: Vec<ControlError>,
    pub consumed: usize,
    /// Bytes skipped while hunting for a magic byte.
    pub discarded: usize,
}

enum Scan {
    Frame(ControlFrame, usize),
    Error(ControlError),
    Incomplete,
}

fn scan_at(buf: &[u8], offset: usize) -> Scan {
    let rest = &buf[offset..];
    if rest.len() < HEADER_LEN {
        return Scan::Incomplete;
    }
    let (frame_type, len) = (rest[1], usize::from(rest[2]));
    let Some(expected) = payload_len(frame_type) else {
        return Scan::Error(ControlError::UnknownFrameType { offset, frame_type });
    };
    if expected != len {
        return Scan::Error(ControlError::LengthMismatch {
            offset,
            frame_type,
            expected,
            got: len,
        });
    }
    let total = HEADER_LEN + len + 1;
    if rest.len() < total {
        return Scan::Incomplete;
    }
    let payload = &rest[HEADER_LEN..HEADER_LEN + len];
    if checksum(frame_type, payload) != rest[total - 1] {
        return Scan::Error(ControlError::ChecksumMismatch { offset });
    }
    let frame = ControlFrame::from_parts(frame_type, payload).expect("type checked above");
    Scan::Frame(frame, total)
}

fn decode(buf: &[u8], at_end: bool) -> DecodeOutcome {
    let mut out = DecodeOutcome::default();
    let mut pos = 0;
    while pos < buf.len() {
        if buf[pos] != MAGIC {
            pos += 1;
            out.discarded += 1;
            continue;
        }
        match scan_at(buf, pos) {
            Scan::Frame(frame, len) => {
                out.frames.push(frame);
                pos += len;
            }
            Scan::Error(e) => {
                out.errors.push(e);
                pos += 1;
            }
            Scan::Incomplete if at_end => {
                out.errors
                    .push(ControlError::TruncatedFrame { offset: pos });
                pos += 1;
            }
            Scan::Incomplete => break,
        }
    }
    out.consumed = pos;
    out
}

/// Decodes a complete byte stream. A partial frame at the end counts as
/// `TruncatedFrame`; every byte is consumed.
pub fn decode_control_frame(stream: &[u8]) -> DecodeOutcome {
    decode(stream, true)
}

/// Incremental decoder for a live byte stream: a partial frame at the end of
/// the buffered bytes waits for more input.
#[derive(Debug, Clone, Default)]
pub struct ControlDecoder {
    buffer: Vec<u8>,
    errors: u64,
}

impl ControlDecoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn error_count(&self) -> u64 {
        self.errors
    }

    pub fn buffered(&self) -> usize {
        self.buffer.len()
    }

    pub fn push(&mut self, bytes: &[u8]) -> DecodeOutcome {
        self.buffer.extend_from_slice(bytes);
        let outcome = decode(&self.buffer, false);
        self.buffer.drain(..outcome.consumed);
        self.errors += outcome.errors.len() as u64;
        outcome
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encode_examples() {
        assert_eq!(
            encode_control_frame(&ControlFrame::SetValue(258)),
            [0xA5, 0x01, 0x02, 0x01, 0x02, 0x00]
        );
        assert_eq!(
            encode_control_frame(&ControlFrame::SetDisplayMode(0x01)),
            [0xA5, 0x05, 0x01, 0x01, 0x05]
        );
        assert_eq!(
            encode_control_frame(&ControlFrame::QueryCounter(6)),
            [0xA5, 0x02, 0x04, 0x00, 0x00, 0x00, 0x06, 0x00]
        );
    }

    #[test]
    fn payload_limit() {
        assert_eq!(
            encode_raw(0x7f, &[0; 256]),
            Err(ControlError::PayloadTooLong(256))
        );
        assert_eq!(encode_raw(0x7f, &[0; 255]).unwrap().len(), 259);
    }

    #[test]
    fn corrupted_checksum_then_valid_frame() {
        let mut stream = encode_control_frame(&ControlFrame::SetValue(258));
        *stream.last_mut().unwrap() ^= 0x40;
        stream.extend(encode_control_frame(&ControlFrame::QueryCounter(6)));
        let out = decode_control_frame(&stream);
        assert_eq!(
            out.errors,
            vec![ControlError::ChecksumMismatch { offset: 0 }]
        );
        assert_eq!(out.frames, vec![ControlFrame::QueryCounter(6)]);
        assert_eq!(out.consumed, stream.len());
    }

    #[test]
    fn garbage_without_magic() {
        let garbage = [0x00, 0x13, 0xFF, 0x42, 0x99];
        let out = decode_control_frame(&garbage);
        assert!(out.frames.is_empty() && out.errors.is_empty());
        assert_eq!(out.consumed, 5);
        assert_eq!(out.discarded, 5);
    }

    #[test]
    fn truncated_tail() {
        let frame = encode_control_frame(&ControlFrame::EventReport { key: 6, tick: 99 });
        let out = decode_control_frame(&frame[..7]);
        assert_eq!(out.errors, vec![ControlError::TruncatedFrame { offset: 0 }]);
        assert_eq!(out.consumed, 7);
    }

    #[test]
    fn streaming_decoder_waits_for_the_rest() {
        let frame = encode_control_frame(&ControlFrame::CounterReport { key: 6, count: 54 });
        let mut dec = ControlDecoder::new();
        let first = dec.push(&frame[..5]);
        assert!(first.frames.is_empty() && first.errors.is_empty());
        assert_eq!(dec.buffered(), 5);
        let second = dec.push(&frame[5..]);
        assert_eq!(
            second.frames,
            vec![ControlFrame::CounterReport { key: 6, count: 54 }]
        );
        assert_eq!(dec.buffered(), 0);
        assert_eq!(dec.error_count(), 0);
    }

    #[test]
    fn unknown_type_and_bad_length() {
        let out = decode_control_frame(&encode_raw(0x09, &[1, 2]).unwrap());
        assert!(matches!(
            out.errors[0],
            ControlError::UnknownFrameType {
                frame_type: 0x09,
                ..
            }
        ));
        let out = decode_control_frame(&encode_raw(TYPE_SET_VALUE, &[1, 2, 3]).unwrap());
        assert!(matches!(
            out.errors[0],
            ControlError::LengthMismatch {
                expected: 2,
                got: 3,
                ..
            }
        ));
        assert!(out.frames.is_empty());
    }
}
