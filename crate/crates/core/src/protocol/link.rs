//! Stop-and-wait reliability on top of the frame codec.

use std::collections::VecDeque;
use std::io::{self, Read, Write};
use std::net::TcpStream;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::decode::{DecodeOutput, DecodedFrame, StreamDecoder};
use super::message::{encode, Message};
use super::ProtocolError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkConfig {
    pub ack_timeout_ms: f64,
    pub max_retransmits: u32,
    pub heartbeat_interval_ms: f64,
}

impl Default for LinkConfig {
    fn default() -> Self {
        LinkConfig {
            ack_timeout_ms: 50.0,
            max_retransmits: 3,
            heartbeat_interval_ms: 100.0,
        }
    }
}

impl LinkConfig {
    pub fn validate(&self, watchdog_ms: f64) -> Result<(), String> {
        if !(self.ack_timeout_ms > 0.0 && self.heartbeat_interval_ms > 0.0 && self.max_retransmits > 0) {
            return Err("link timings and retransmit budget must be > 0".into());
        }
        if self.heartbeat_interval_ms >= watchdog_ms {
            return Err(format!(
                "heartbeat interval {} ms must be shorter than the {} ms watchdog",
                self.heartbeat_interval_ms, watchdog_ms
            ));
        }
        Ok(())
    }
}

/// A byte pipe to the other end of the link.
pub trait Transport {
    fn transmit(&mut self, frame: &[u8]) -> io::Result<()>;

    /// Waits up to `timeout_ms` for bytes. An empty result means the
    /// timeout elapsed.
    fn receive(&mut self, timeout_ms: f64) -> io::Result<Vec<u8>>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum SendOutcome {
    Delivered { seq: u8, attempts: u32 },
    LinkFault { seq: u8, attempts: u32 },
}

impl SendOutcome {
    pub fn is_delivered(&self) -> bool {
        matches!(self, SendOutcome::Delivered { .. })
    }
}

/// Sender-side link state for one direction.
#[derive(Debug, Default)]
pub struct LinkState {
    next_seq: u8,
    decoder: StreamDecoder,
    /// Frames that arrived while waiting for an ack.
    pub inbox: VecDeque<DecodedFrame>,
    pub frames_sent: u64,
    pub diagnostics: u64,
}

impl LinkState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn next_seq(&self) -> u8 {
        self.next_seq
    }

    fn take_seq(&mut self) -> u8 {
        let seq = self.next_seq;
        self.next_seq = self.next_seq.wrapping_add(1);
        seq
    }

    /// Feeds received bytes; returns the frames decoded from them.
    pub fn ingest(&mut self, bytes: &[u8]) -> Vec<DecodedFrame> {
        let mut out = DecodeOutput::default();
        self.decoder.push(bytes, &mut out);
        self.diagnostics += out.diagnostics.len() as u64;
        out.frames
    }
}

/// Sends `msg`. Commands wait for a matching `Ack` and are retransmitted
/// (same seq) on timeout or `Nack`, up to `max_retransmits` times.
pub fn reliable_send<T: Transport + ?Sized>(
    msg: &Message,
    link: &mut LinkState,
    cfg: &LinkConfig,
    transport: &mut T,
) -> Result<SendOutcome, ProtocolError> {
    let seq = link.take_seq();
    let frame = encode(msg, seq)?;
    if !msg.requires_ack() {
        transport.transmit(&frame)?;
        link.frames_sent += 1;
        return Ok(SendOutcome::Delivered { seq, attempts: 1 });
    }
    let mut attempts = 0;
    while attempts <= cfg.max_retransmits {
        transport.transmit(&frame)?;
        link.frames_sent += 1;
        attempts += 1;
        'wait: loop {
            let bytes = transport.receive(cfg.ack_timeout_ms)?;
            if bytes.is_empty() {
                break 'wait;
            }
            for f in link.ingest(&bytes) {
                match f.message {
                    Message::Ack { acked_seq } if acked_seq == seq => {
                        return Ok(SendOutcome::Delivered { seq, attempts });
                    }
                    Message::Nack { acked_seq, .. } if acked_seq == seq => break 'wait,
                    Message::Ack { .. } | Message::Nack { .. } => {}
                    _ => link.inbox.push_back(f),
                }
            }
        }
    }
    Ok(SendOutcome::LinkFault { seq, attempts })
}

/// Receiving end on the controller side: acks commands and suppresses
/// duplicates caused by a lost ack.
#[derive(Debug, Default)]
pub struct ControllerEndpoint {
    decoder: StreamDecoder,
    last_seq: Option<u8>,
    pub diagnostics: u64,
}

impl ControllerEndpoint {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the fresh messages to apply and the reply bytes to send.
    pub fn receive(&mut self, bytes: &[u8]) -> (Vec<Message>, Vec<u8>) {
        let mut out = DecodeOutput::default();
        self.decoder.push(bytes, &mut out);
        self.diagnostics += out.diagnostics.len() as u64;
        let mut fresh = Vec::new();
        let mut replies = Vec::new();
        for DecodedFrame { seq, message } in out.frames {
            let duplicate = self.last_seq == Some(seq);
            self.last_seq = Some(seq);
            if message.requires_ack() {
                let ack = encode(&Message::Ack { acked_seq: seq }, seq).expect("ack fits");
                replies.extend_from_slice(&ack);
            }
            if !(duplicate && message.requires_ack()) {
                fresh.push(message);
            }
        }
        (fresh, replies)
    }
}

/// In-process channel to a [`ControllerEndpoint`], with scripted loss of
/// host -> controller frames.
pub struct InProcessChannel<'a> {
    endpoint: &'a mut ControllerEndpoint,
    drop_frame: Box<dyn FnMut(u64) -> bool + 'a>,
    pending_reply: Vec<u8>,
    /// Every frame put on the wire, dropped or not.
    pub wire: Vec<Vec<u8>>,
    /// Messages that reached the controller, in order.
    pub delivered: Vec<Message>,
}

impl<'a> InProcessChannel<'a> {
    pub fn lossless(endpoint: &'a mut ControllerEndpoint) -> Self {
        Self::with_loss(endpoint, |_| false)
    }

    /// `drop_frame(n)` decides the fate of the n-th transmitted frame.
    pub fn with_loss(
        endpoint: &'a mut ControllerEndpoint,
        drop_frame: impl FnMut(u64) -> bool + 'a,
    ) -> Self {
        InProcessChannel {
            endpoint,
            drop_frame: Box::new(drop_frame),
            pending_reply: Vec::new(),
            wire: Vec::new(),
            delivered: Vec::new(),
        }
    }
}

impl Transport for InProcessChannel<'_> {
    fn transmit(&mut self, frame: &[u8]) -> io::Result<()> {
        let n = self.wire.len() as u64;
        self.wire.push(frame.to_vec());
        if !(self.drop_frame)(n) {
            let (fresh, reply) = self.endpoint.receive(frame);
            self.delivered.extend(fresh);
            self.pending_reply.extend(reply);
        }
        Ok(())
    }

    fn receive(&mut self, _timeout_ms: f64) -> io::Result<Vec<u8>> {
        Ok(std::mem::take(&mut self.pending_reply))
    }
}

/// Any byte stream with a read timeout, e.g. a TCP socket to a remote
/// controller.
pub struct TcpTransport {
    stream: TcpStream,
}

impl TcpTransport {
    pub fn connect(addr: &str) -> io::Result<Self> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        Ok(TcpTransport { stream })
    }

    pub fn from_stream(stream: TcpStream) -> Self {
        TcpTransport { stream }
    }
}

impl Transport for TcpTransport {
    fn transmit(&mut self, frame: &[u8]) -> io::Result<()> {
        self.stream.write_all(frame)?;
        self.stream.flush()
    }

    fn receive(&mut self, timeout_ms: f64) -> io::Result<Vec<u8>> {
        let timeout = Duration::from_secs_f64((timeout_ms / 1000.0).max(1e-3));
        self.stream.set_read_timeout(Some(timeout))?;
        let mut buf = [0u8; 512];
        match self.stream.read(&mut buf) {
            Ok(n) => Ok(buf[..n].to_vec()),
            Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {
                Ok(Vec::new())
            }
            Err(e) => Err(e),
        }
    }
}
