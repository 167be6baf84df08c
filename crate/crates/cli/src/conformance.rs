//! Golden frame vectors for the device protocol.
//!
//! The file is JSON: one entry per frame with the message in its serde form
//! and the exact bytes on the wire. Another implementation can emit the same
//! file from its own encoder and have it checked here.

use reglove_core::controller::Phase;
use reglove_core::grasp::GraspType;
use reglove_core::protocol::{decode_stream, encode, nack_reason, Message, Telemetry, VERSION};
use serde::{Deserialize, Serialize};

pub const VECTORS_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorFile {
    pub schema_version: u32,
    pub vectors: Vec<Vector>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vector {
    pub name: String,
    pub seq: u8,
    pub message: Message,
    /// Lowercase hex of the whole frame, sync to CRC.
    pub frame: String,
}

fn telemetry(phase: Phase, pressures_dkpa: [i16; 5], valve_bitmap: u8, pump_bitmap: u8) -> Message {
    Message::Telemetry(Telemetry {
        phase: phase.to_wire(),
        pressures_dkpa,
        valve_bitmap,
        pump_bitmap,
    })
}

fn catalogue() -> Vec<(String, u8, Message)> {
    let mut out = vec![
        ("hello".to_string(), 0, Message::Hello { version: VERSION }),
        ("ack".into(), 1, Message::Ack { acked_seq: 0 }),
        ("ack_wrapped_seq".into(), 0, Message::Ack { acked_seq: 255 }),
        (
            "nack_bad_payload".into(),
            2,
            Message::Nack { acked_seq: 9, reason: nack_reason::BAD_PAYLOAD },
        ),
        (
            "nack_rejected".into(),
            3,
            Message::Nack { acked_seq: 10, reason: nack_reason::REJECTED },
        ),
        ("release".into(), 40, Message::Release),
        ("abort".into(), 41, Message::Abort),
        ("heartbeat".into(), 42, Message::Heartbeat),
        ("heartbeat_seq_255".into(), 255, Message::Heartbeat),
        ("telemetry_idle".into(), 60, telemetry(Phase::Idle, [0; 5], 0, 0)),
        (
            "telemetry_hold".into(),
            61,
            telemetry(Phase::Hold, [-380, -375, 120, 0, 399], 0b01_0011, 0b10),
        ),
        (
            "telemetry_extremes".into(),
            62,
            telemetry(Phase::Flex, [i16::MIN, i16::MAX, -1, 1, 0], 0x3f, 0b11),
        ),
        ("fault_over_pressure".into(), 70, Message::Fault { code: 1 }),
        ("fault_host_lost".into(), 71, Message::Fault { code: 2 }),
    ];
    for (i, g) in GraspType::ALL.iter().enumerate() {
        let name = format!("set_grasp_{}", g.label().replace([' ', '-'], "_"));
        out.push((name, 20 + i as u8, Message::SetGrasp { grasp: *g }));
    }
    out
}

pub fn golden() -> VectorFile {
    let vectors = catalogue()
        .into_iter()
        .map(|(name, seq, message)| Vector {
            frame: hex::encode(encode(&message, seq).expect("catalogue payloads fit a frame")),
            name,
            seq,
            message,
        })
        .collect();
    VectorFile {
        schema_version: VECTORS_SCHEMA_VERSION,
        vectors,
    }
}

/// Checks every vector both ways: our encoder must produce the recorded
/// bytes, and our decoder must recover exactly the recorded message.
/// Returns one line per mismatch.
pub fn check(file: &VectorFile) -> Vec<String> {
    let mut problems = Vec::new();
    if file.schema_version != VECTORS_SCHEMA_VERSION {
        problems.push(format!(
            "schema_version {} (expected {VECTORS_SCHEMA_VERSION})",
            file.schema_version
        ));
        return problems;
    }
    for v in &file.vectors {
        let bytes = match hex::decode(&v.frame) {
            Ok(b) => b,
            Err(e) => {
                problems.push(format!("{}: frame is not hex: {e}", v.name));
                continue;
            }
        };
        match encode(&v.message, v.seq) {
            Ok(ours) if ours == bytes => {}
            Ok(ours) => problems.push(format!(
                "{}: encodes to {} but vector has {}",
                v.name,
                hex::encode(ours),
                v.frame
            )),
            Err(e) => problems.push(format!("{}: {e}", v.name)),
        }
        let decoded = decode_stream(&bytes);
        match (decoded.frames.as_slice(), decoded.diagnostics.is_empty()) {
            ([frame], true) if frame.seq == v.seq && frame.message == v.message => {}
            _ => problems.push(format!(
                "{}: decodes to {:?} with diagnostics {:?}",
                v.name, decoded.frames, decoded.diagnostics
            )),
        }
    }
    problems
}
