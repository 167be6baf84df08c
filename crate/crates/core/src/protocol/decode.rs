//! Resynchronizing frame decoder.
//!
//! Scan for the sync pair, wait until the whole frame is buffered, then
//! check the CRC before looking at any header field. A CRC failure drops a
//! single byte and rescans, so one corrupt frame never costs the frames
//! after it. A CRC-valid frame with a bad version, type or payload is
//! consumed whole.

use serde::{Deserialize, Serialize};

use super::crc::crc16_ccitt_false;
use super::message::{Message, ParseError, CRC_LEN, HEADER_LEN, SYNC, VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodedFrame {
    pub seq: u8,
    pub message: Message,
}

/// Per-frame problems. Offsets count bytes since the decoder was created.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Diagnostic {
    /// Bytes skipped while hunting for a sync pair.
    Resync { offset: u64, skipped: usize },
    BadCrc { offset: u64 },
    BadVersion { offset: u64, version: u8 },
    UnknownType { offset: u64, msg_type: u8 },
    BadLength { offset: u64, msg_type: u8, length: u8 },
    BadPayload { offset: u64, msg_type: u8 },
}

impl Diagnostic {
    pub fn is_bad_crc(&self) -> bool {
        matches!(self, Diagnostic::BadCrc { .. })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DecodeOutput {
    pub frames: Vec<DecodedFrame>,
    pub diagnostics: Vec<Diagnostic>,
    /// Trailing bytes of an incomplete frame.
    pub residual: Vec<u8>,
}

impl DecodeOutput {
    pub fn messages(&self) -> impl Iterator<Item = &Message> {
        self.frames.iter().map(|f| &f.message)
    }
}

/// Incremental decoder for a byte stream that arrives in pieces.
#[derive(Debug, Clone, Default)]
pub struct StreamDecoder {
    buf: Vec<u8>,
    /// Stream offset of `buf[0]`.
    base: u64,
}

impl StreamDecoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn pending(&self) -> &[u8] {
        &self.buf
    }

    pub fn push(&mut self, bytes: &[u8], out: &mut DecodeOutput) {
        self.buf.extend_from_slice(bytes);
        let consumed = scan(&self.buf, self.base, out);
        self.buf.drain(..consumed);
        self.base += consumed as u64;
    }
}

/// Decodes a complete byte stream in one pass.
pub fn decode_stream(bytes: &[u8]) -> DecodeOutput {
    let mut out = DecodeOutput::default();
    let consumed = scan(bytes, 0, &mut out);
    out.residual = bytes[consumed..].to_vec();
    out
}

/// Returns how many bytes of `buf` are fully processed.
fn scan(buf: &[u8], base: u64, out: &mut DecodeOutput) -> usize {
    let len = buf.len();
    let mut i = 0;
    let mut skip_start: Option<usize> = None;
    let flush_skip = |skip_start: &mut Option<usize>, at: usize, out: &mut DecodeOutput| {
        if let Some(start) = skip_start.take() {
            out.diagnostics.push(Diagnostic::Resync {
                offset: base + start as u64,
                skipped: at - start,
            });
        }
    };

    while i < len {
        if buf[i] != SYNC[0] {
            skip_start.get_or_insert(i);
            i += 1;
            continue;
        }
        if i + 1 == len {
            break; // possible sync start, wait for more
        }
        if buf[i + 1] != SYNC[1] {
            skip_start.get_or_insert(i);
            i += 1;
            continue;
        }
        flush_skip(&mut skip_start, i, out);
        if len - i < HEADER_LEN {
            break;
        }
        let length = buf[i + 5];
        let total = HEADER_LEN + usize::from(length) + CRC_LEN;
        if len - i < total {
            break;
        }
        let frame = &buf[i..i + total];
        let body = &frame[2..HEADER_LEN + usize::from(length)];
        let crc = u16::from_be_bytes([frame[total - 2], frame[total - 1]]);
        let offset = base + i as u64;
        if crc16_ccitt_false(body) != crc {
            out.diagnostics.push(Diagnostic::BadCrc { offset });
            skip_start = Some(i);
            i += 1;
            continue;
        }
        let (version, msg_type, seq) = (frame[2], frame[3], frame[4]);
        i += total;
        if version != VERSION {
            out.diagnostics.push(Diagnostic::BadVersion { offset, version });
            continue;
        }
        match Message::parse(msg_type, &frame[HEADER_LEN..total - CRC_LEN]) {
            Ok(message) => out.frames.push(DecodedFrame { seq, message }),
            Err(ParseError::UnknownType) => {
                out.diagnostics.push(Diagnostic::UnknownType { offset, msg_type })
            }
            Err(ParseError::BadLength) => out.diagnostics.push(Diagnostic::BadLength {
                offset,
                msg_type,
                length,
            }),
            Err(ParseError::BadPayload) => {
                out.diagnostics.push(Diagnostic::BadPayload { offset, msg_type })
            }
        }
    }
    // a skip run that reaches the end of input is consumed, not residual
    if let Some(start) = skip_start {
        flush_skip(&mut Some(start), i, out);
    }
    i
}
