use serde::{Deserialize, Serialize};

use super::crc::crc16_ccitt_false;
use super::ProtocolError;
use crate::controller::{Phase, PneumaticCommand};
use crate::grasp::{Finger, GraspType, PerFinger};

pub const SYNC: [u8; 2] = [0xAA, 0x55];
pub const VERSION: u8 = 0x01;
/// sync(2) + version + type + seq + length
pub const HEADER_LEN: usize = 6;
pub const CRC_LEN: usize = 2;
pub const MAX_PAYLOAD: usize = 255;
pub const MAX_FRAME: usize = HEADER_LEN + MAX_PAYLOAD + CRC_LEN;
pub const TELEMETRY_LEN: usize = 13;

pub mod msg_type {
    pub const HELLO: u8 = 0x01;
    pub const ACK: u8 = 0x02;
    pub const NACK: u8 = 0x03;
    pub const SET_GRASP: u8 = 0x10;
    pub const RELEASE: u8 = 0x11;
    pub const ABORT: u8 = 0x12;
    pub const HEARTBEAT: u8 = 0x20;
    pub const TELEMETRY: u8 = 0x30;
    pub const FAULT: u8 = 0x40;
}

/// Nack reason codes.
pub mod nack_reason {
    pub const BAD_PAYLOAD: u8 = 1;
    pub const REJECTED: u8 = 2;
}

/// Fixed 13-byte controller telemetry payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Telemetry {
    pub phase: u8,
    /// Gauge pressure per finger in units of 0.1 kPa.
    pub pressures_dkpa: [i16; 5],
    /// Bits 0-4: finger routed to a running pump's line. Bit 5: exhaust open.
    pub valve_bitmap: u8,
    /// Bit 0: inflation pump. Bit 1: vacuum pump.
    pub pump_bitmap: u8,
}

impl Telemetry {
    pub fn capture(phase: Phase, pressures_kpa: &PerFinger<f64>, cmd: &PneumaticCommand) -> Self {
        let mut valve_bitmap = 0u8;
        for f in Finger::ALL {
            if cmd.routed_to_active_line(f) {
                valve_bitmap |= 1 << f.channel();
            }
        }
        if cmd.exhaust_open() {
            valve_bitmap |= 1 << 5;
        }
        Telemetry {
            phase: phase.to_wire(),
            pressures_dkpa: pressures_kpa.to_array().map(quantize_kpa),
            valve_bitmap,
            pump_bitmap: cmd.inflation_pump as u8 | (cmd.vacuum_pump as u8) << 1,
        }
    }

    pub fn pressures_kpa(&self) -> PerFinger<f64> {
        PerFinger::from_fn(|f| dequantize_kpa(self.pressures_dkpa[f.channel()]))
    }
}

/// Rounds to the nearest 0.1 kPa, saturating at the i16 range.
pub fn quantize_kpa(p: f64) -> i16 {
    (p * 10.0).round().clamp(f64::from(i16::MIN), f64::from(i16::MAX)) as i16
}

pub fn dequantize_kpa(q: i16) -> f64 {
    f64::from(q) / 10.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Message {
    Hello { version: u8 },
    Ack { acked_seq: u8 },
    Nack { acked_seq: u8, reason: u8 },
    SetGrasp { grasp: GraspType },
    Release,
    Abort,
    Heartbeat,
    Telemetry(Telemetry),
    Fault { code: u8 },
}

impl Message {
    pub fn msg_type(&self) -> u8 {
        use msg_type::*;
        match self {
            Message::Hello { .. } => HELLO,
            Message::Ack { .. } => ACK,
            Message::Nack { .. } => NACK,
            Message::SetGrasp { .. } => SET_GRASP,
            Message::Release => RELEASE,
            Message::Abort => ABORT,
            Message::Heartbeat => HEARTBEAT,
            Message::Telemetry(_) => TELEMETRY,
            Message::Fault { .. } => FAULT,
        }
    }

    /// Commands are stop-and-wait; everything else is fire-and-forget.
    pub fn requires_ack(&self) -> bool {
        matches!(
            self,
            Message::SetGrasp { .. } | Message::Release | Message::Abort
        )
    }

    pub fn payload(&self) -> Vec<u8> {
        match *self {
            Message::Hello { version } => vec![version],
            Message::Ack { acked_seq } => vec![acked_seq],
            Message::Nack { acked_seq, reason } => vec![acked_seq, reason],
            Message::SetGrasp { grasp } => vec![grasp.to_wire()],
            Message::Release | Message::Abort | Message::Heartbeat => Vec::new(),
            Message::Telemetry(t) => {
                let mut out = Vec::with_capacity(TELEMETRY_LEN);
                out.push(t.phase);
                for p in t.pressures_dkpa {
                    out.extend_from_slice(&p.to_be_bytes());
                }
                out.push(t.valve_bitmap);
                out.push(t.pump_bitmap);
                out
            }
            Message::Fault { code } => vec![code],
        }
    }

    /// Parses a CRC-verified payload.
    pub fn parse(msg_type: u8, payload: &[u8]) -> Result<Message, ParseError> {
        use msg_type::*;
        let expect = |n: usize| {
            if payload.len() == n {
                Ok(())
            } else {
                Err(ParseError::BadLength)
            }
        };
        let msg = match msg_type {
            HELLO => {
                expect(1)?;
                Message::Hello { version: payload[0] }
            }
            ACK => {
                expect(1)?;
                Message::Ack { acked_seq: payload[0] }
            }
            NACK => {
                expect(2)?;
                Message::Nack { acked_seq: payload[0], reason: payload[1] }
            }
            SET_GRASP => {
                expect(1)?;
                let grasp = GraspType::from_wire(payload[0]).map_err(|_| ParseError::BadPayload)?;
                Message::SetGrasp { grasp }
            }
            RELEASE => expect(0).map(|_| Message::Release)?,
            ABORT => expect(0).map(|_| Message::Abort)?,
            HEARTBEAT => expect(0).map(|_| Message::Heartbeat)?,
            TELEMETRY => {
                expect(TELEMETRY_LEN)?;
                let mut pressures_dkpa = [0i16; 5];
                for (i, p) in pressures_dkpa.iter_mut().enumerate() {
                    *p = i16::from_be_bytes([payload[1 + 2 * i], payload[2 + 2 * i]]);
                }
                Message::Telemetry(Telemetry {
                    phase: payload[0],
                    pressures_dkpa,
                    valve_bitmap: payload[11],
                    pump_bitmap: payload[12],
                })
            }
            FAULT => {
                expect(1)?;
                Message::Fault { code: payload[0] }
            }
            _ => return Err(ParseError::UnknownType),
        };
        Ok(msg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseError {
    UnknownType,
    BadLength,
    BadPayload,
}

/// Frames an arbitrary payload. Defined messages never exceed the limit;
/// this is the guard for extensions.
pub fn encode_frame(msg_type: u8, seq: u8, payload: &[u8]) -> Result<Vec<u8>, ProtocolError> {
    if payload.len() > MAX_PAYLOAD {
        return Err(ProtocolError::PayloadTooLarge(payload.len()));
    }
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len() + CRC_LEN);
    out.extend_from_slice(&SYNC);
    out.extend_from_slice(&[VERSION, msg_type, seq, payload.len() as u8]);
    out.extend_from_slice(payload);
    let crc = crc16_ccitt_false(&out[2..]);
    out.extend_from_slice(&crc.to_be_bytes());
    Ok(out)
}

pub fn encode(msg: &Message, seq: u8) -> Result<Vec<u8>, ProtocolError> {
    encode_frame(msg.msg_type(), seq, &msg.payload())
}
