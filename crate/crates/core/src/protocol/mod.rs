//! Framed binary protocol between the inference host and the actuator
//! controller.
//!
//! ```text
//! AA 55 | ver | type | seq | len | payload[len] | crc16 (BE)
//! ```
//!
//! The CRC is CRC-16/CCITT-FALSE over `ver..payload`.

mod crc;
mod decode;
mod link;
mod message;

pub use crc::crc16_ccitt_false;
pub use decode::{decode_stream, DecodeOutput, DecodedFrame, Diagnostic, StreamDecoder};
pub use link::{
    reliable_send, ControllerEndpoint, InProcessChannel, LinkConfig, LinkState, SendOutcome,
    TcpTransport, Transport,
};
pub use message::{
    dequantize_kpa, encode, encode_frame, msg_type, nack_reason, quantize_kpa, Message, Telemetry,
    CRC_LEN, HEADER_LEN, MAX_FRAME, MAX_PAYLOAD, SYNC, TELEMETRY_LEN, VERSION,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("payload of {0} bytes exceeds the 255-byte frame limit")]
    PayloadTooLarge(usize),
    #[error("transport error: {0}")]
    Io(#[from] std::io::Error),
}
