//! Codec, decoder and link behavior through the public API.

mod common;

use std::net::TcpListener;
use std::thread;

use common::{crc16_oracle, one_of_each, random_message};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reglove_core::grasp::GraspType;
use reglove_core::protocol::{
    crc16_ccitt_false, decode_stream, encode, reliable_send, ControllerEndpoint, DecodedFrame,
    Diagnostic, InProcessChannel, LinkConfig, LinkState, Message, SendOutcome, StreamDecoder,
    TcpTransport, Transport,
};

#[test]
fn crc_matches_bitwise_oracle() {
    assert_eq!(crc16_oracle(b"123456789"), 0x29B1);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for len in 0..300 {
        let data: Vec<u8> = (0..len).map(|_| rng.random()).collect();
        assert_eq!(crc16_ccitt_false(&data), crc16_oracle(&data), "len {len}");
    }
}

#[test]
fn ten_thousand_random_messages_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut bytes = Vec::new();
    let mut sent = Vec::new();
    for i in 0..10_000u32 {
        let msg = random_message(&mut rng);
        let seq = (i % 256) as u8;
        let frame = encode(&msg, seq).unwrap();
        // trailer checked against the oracle, not the crate's CRC
        let n = frame.len();
        assert_eq!(u16::from_be_bytes([frame[n - 2], frame[n - 1]]), crc16_oracle(&frame[2..n - 2]));
        bytes.extend(frame);
        sent.push(DecodedFrame { seq, message: msg });
    }
    let out = decode_stream(&bytes);
    assert!(out.diagnostics.is_empty(), "{:?}", &out.diagnostics[..1]);
    assert!(out.residual.is_empty());
    assert_eq!(out.frames, sent);
}

/// Result of flipping every bit of one frame in turn.
struct Sweep {
    flips: usize,
    bad_crc: usize,
    resync_only: usize,
    accepted: usize,
}

/// The corrupted frame is followed by enough clean heartbeats that a
/// corrupted length byte still leaves a complete span for the CRC check.
fn sweep(msg: &Message) -> Sweep {
    let frame = encode(msg, 0x42).unwrap();
    let mut trailer = Vec::new();
    for seq in 0..40u8 {
        trailer.extend(encode(&Message::Heartbeat, 100 + seq).unwrap());
    }
    let mut s = Sweep { flips: 0, bad_crc: 0, resync_only: 0, accepted: 0 };
    for bit in 0..frame.len() * 8 {
        let mut bytes = frame.clone();
        bytes[bit / 8] ^= 1 << (bit % 8);
        bytes.extend(&trailer);
        let out = decode_stream(&bytes);
        s.flips += 1;
        let foreign = out.frames.iter().filter(|f| f.seq < 100 || f.message != Message::Heartbeat);
        if foreign.count() > 0 {
            s.accepted += 1;
        } else if out.diagnostics.iter().any(Diagnostic::is_bad_crc) {
            s.bad_crc += 1;
        } else if out.diagnostics.iter().any(|d| matches!(d, Diagnostic::Resync { .. })) {
            s.resync_only += 1;
        }
    }
    s
}

#[test]
fn single_bit_flips_never_pass_as_frames() {
    for msg in one_of_each() {
        let s = sweep(&msg);
        let len = encode(&msg, 0).unwrap().len();
        assert_eq!(s.accepted, 0, "{msg:?}");
        // bits past the sync pair are all covered by the CRC
        assert_eq!(s.bad_crc, (len - 2) * 8, "{msg:?}");
        // a damaged sync pair is skipped as noise
        assert_eq!(s.resync_only, 16, "{msg:?}");
        assert_eq!(s.flips, len * 8);
    }
}

#[test]
fn trailing_frames_survive_a_corrupt_length_byte() {
    let mut bytes = encode(&Message::SetGrasp { grasp: GraspType::Tool }, 1).unwrap();
    bytes[5] = 200;
    for seq in 0..40u8 {
        bytes.extend(encode(&Message::Heartbeat, seq).unwrap());
    }
    let out = decode_stream(&bytes);
    assert_eq!(out.frames.len(), 40);
    assert!(out.diagnostics[0].is_bad_crc());
}

#[test]
fn sequence_numbers_wrap_over_a_long_session() {
    let mut endpoint = ControllerEndpoint::new();
    let mut chan = InProcessChannel::lossless(&mut endpoint);
    let mut link = LinkState::new();
    let cfg = LinkConfig::default();
    for i in 0..100_000u64 {
        let msg = if i % 2 == 0 { Message::Release } else { Message::SetGrasp { grasp: GraspType::Key } };
        let out = reliable_send(&msg, &mut link, &cfg, &mut chan).unwrap();
        assert_eq!(out, SendOutcome::Delivered { seq: (i % 256) as u8, attempts: 1 });
    }
    assert_eq!(link.next_seq(), (100_000 % 256) as u8);
    assert_eq!(chan.delivered.len(), 100_000);
    assert_eq!(link.diagnostics, 0);
}

#[test]
fn two_drops_cost_two_retransmits() {
    let mut endpoint = ControllerEndpoint::new();
    let mut chan = InProcessChannel::with_loss(&mut endpoint, |n| n < 2);
    let mut link = LinkState::new();
    let msg = Message::SetGrasp { grasp: GraspType::Pinch };
    let out = reliable_send(&msg, &mut link, &LinkConfig::default(), &mut chan).unwrap();
    assert_eq!(out, SendOutcome::Delivered { seq: 0, attempts: 3 });
    assert_eq!(chan.wire.len(), 3);
    // retransmits reuse the seq, so the frames are identical
    assert!(chan.wire.windows(2).all(|w| w[0] == w[1]));
    assert_eq!(chan.delivered, vec![msg]);
}

#[test]
fn total_loss_is_a_link_fault_after_the_budget() {
    let mut endpoint = ControllerEndpoint::new();
    let mut chan = InProcessChannel::with_loss(&mut endpoint, |_| true);
    let mut link = LinkState::new();
    let out = reliable_send(&Message::Abort, &mut link, &LinkConfig::default(), &mut chan).unwrap();
    assert_eq!(out, SendOutcome::LinkFault { seq: 0, attempts: 4 });
    assert_eq!(chan.wire.len(), 4);
    assert!(chan.delivered.is_empty());
}

#[test]
fn lost_ack_does_not_apply_the_command_twice() {
    // a retransmit after a lost ack looks like this to the controller
    let mut endpoint = ControllerEndpoint::new();
    let frame = encode(&Message::Release, 9).unwrap();
    let (first, ack1) = endpoint.receive(&frame);
    let (second, ack2) = endpoint.receive(&frame);
    assert_eq!(first, vec![Message::Release]);
    assert!(second.is_empty());
    assert_eq!(ack1, ack2);
}

#[test]
fn heartbeats_are_fire_and_forget() {
    let mut endpoint = ControllerEndpoint::new();
    let mut chan = InProcessChannel::with_loss(&mut endpoint, |_| true);
    let mut link = LinkState::new();
    let out = reliable_send(&Message::Heartbeat, &mut link, &LinkConfig::default(), &mut chan).unwrap();
    assert_eq!(out, SendOutcome::Delivered { seq: 0, attempts: 1 });
    assert_eq!(chan.wire.len(), 1);
}

#[test]
fn reliable_send_over_tcp() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    let controller = thread::spawn(move || {
        let (stream, _) = listener.accept().unwrap();
        let mut transport = TcpTransport::from_stream(stream);
        let mut endpoint = ControllerEndpoint::new();
        let mut applied = Vec::new();
        while applied.len() < 3 {
            let bytes = transport.receive(1000.0).unwrap();
            let (fresh, reply) = endpoint.receive(&bytes);
            applied.extend(fresh);
            if !reply.is_empty() {
                transport.transmit(&reply).unwrap();
            }
        }
        applied
    });
    let mut transport = TcpTransport::connect(&addr).unwrap();
    let mut link = LinkState::new();
    let cfg = LinkConfig { ack_timeout_ms: 1000.0, ..LinkConfig::default() };
    let msgs = [
        Message::SetGrasp { grasp: GraspType::Power },
        Message::Heartbeat,
        Message::Release,
    ];
    for m in &msgs {
        assert!(reliable_send(m, &mut link, &cfg, &mut transport).unwrap().is_delivered());
    }
    assert_eq!(controller.join().unwrap(), msgs.to_vec());
}

proptest! {
    #[test]
    fn chunking_never_changes_the_decode(seed in any::<u64>(), chunk in 1usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut bytes = Vec::new();
        for i in 0..50u8 {
            bytes.extend(encode(&random_message(&mut rng), i).unwrap());
            if rng.random_bool(0.2) {
                bytes.push(rng.random());
            }
        }
        let whole = decode_stream(&bytes);
        let mut dec = StreamDecoder::new();
        let mut out = Default::default();
        for c in bytes.chunks(chunk) {
            dec.push(c, &mut out);
        }
        prop_assert_eq!(out.frames, whole.frames);
    }

    #[test]
    fn decoder_survives_arbitrary_bytes(bytes in proptest::collection::vec(any::<u8>(), 0..600)) {
        let out = decode_stream(&bytes);
        prop_assert!(out.residual.len() <= bytes.len());
    }
}
