//! The vehicle–cloud link: a bit-exact wire protocol and a deterministic
//! netem-style impairment channel (delay, uniform jitter, Bernoulli loss),
//! plus the staged network-adversary scenario wrapper.
//!
//! The real TCP loopback transport lives in the companion `advloop` crate;
//! this module is transport-agnostic message plumbing.

use alloc::collections::BinaryHeap;
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Reverse;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::math;

pub const WIRE_MAGIC: [u8; 4] = *b"ADVL";
pub const WIRE_VERSION: u8 = 1;
/// Fixed header: magic(4) + version(1) + type(1) + seq(4) + timestamp(8) +
/// payload_len(4).
pub const WIRE_HEADER_LEN: usize = 22;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MsgType {
    Frame = 1,
    Command = 2,
    Heartbeat = 3,
}

impl MsgType {
    fn from_u8(v: u8) -> Option<MsgType> {
        match v {
            1 => Some(MsgType::Frame),
            2 => Some(MsgType::Command),
            3 => Some(MsgType::Heartbeat),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WireMessage {
    pub msg_type: MsgType,
    pub seq: u32,
    /// Sender clock, microseconds.
    pub timestamp_us: u64,
    pub payload: Vec<u8>,
}

impl WireMessage {
    pub fn heartbeat(seq: u32, timestamp_us: u64) -> Self {
        WireMessage {
            msg_type: MsgType::Heartbeat,
            seq,
            timestamp_us,
            payload: Vec::new(),
        }
    }

    pub fn encoded_len(&self) -> usize {
        WIRE_HEADER_LEN + self.payload.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WireError {
    /// Bad magic: these bytes are not a protocol message at all.
    NotAProtocolMessage,
    UnsupportedVersion(u8),
    /// More bytes are needed; retry once the rest of the frame arrives.
    IncompleteFrame,
    UnknownType(u8),
}

impl core::fmt::Display for WireError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            WireError::NotAProtocolMessage => write!(f, "not a protocol message (bad magic)"),
            WireError::UnsupportedVersion(v) => write!(f, "unsupported protocol version {v}"),
            WireError::IncompleteFrame => write!(f, "incomplete frame"),
            WireError::UnknownType(t) => write!(f, "unknown message type {t}"),
        }
    }
}

impl core::error::Error for WireError {}

/// Encodes a message: header fields little-endian, payload verbatim.
pub fn encode(msg: &WireMessage) -> Vec<u8> {
    let mut out = Vec::with_capacity(msg.encoded_len());
    out.extend_from_slice(&WIRE_MAGIC);
    out.push(WIRE_VERSION);
    out.push(msg.msg_type as u8);
    out.extend_from_slice(&msg.seq.to_le_bytes());
    out.extend_from_slice(&msg.timestamp_us.to_le_bytes());
    out.extend_from_slice(&(msg.payload.len() as u32).to_le_bytes());
    out.extend_from_slice(&msg.payload);
    out
}

/// Decodes one message from the front of `bytes`, returning it and the
/// number of bytes consumed. `IncompleteFrame` means feed more bytes and
/// retry; the other errors are fatal for the stream position.
pub fn decode(bytes: &[u8]) -> Result<(WireMessage, usize), WireError> {
    if bytes.len() >= 4 && bytes[..4] != WIRE_MAGIC {
        return Err(WireError::NotAProtocolMessage);
    }
    if bytes.len() < WIRE_HEADER_LEN {
        return Err(WireError::IncompleteFrame);
    }
    if bytes[4] != WIRE_VERSION {
        return Err(WireError::UnsupportedVersion(bytes[4]));
    }
    let msg_type = MsgType::from_u8(bytes[5]).ok_or(WireError::UnknownType(bytes[5]))?;
    let seq = u32::from_le_bytes(bytes[6..10].try_into().unwrap());
    let timestamp_us = u64::from_le_bytes(bytes[10..18].try_into().unwrap());
    let payload_len = u32::from_le_bytes(bytes[18..22].try_into().unwrap()) as usize;
    if bytes.len() < WIRE_HEADER_LEN + payload_len {
        return Err(WireError::IncompleteFrame);
    }
    Ok((
        WireMessage {
            msg_type,
            seq,
            timestamp_us,
            payload: bytes[WIRE_HEADER_LEN..WIRE_HEADER_LEN + payload_len].to_vec(),
        },
        WIRE_HEADER_LEN + payload_len,
    ))
}

/// Delay/jitter/loss parameters of one link direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetworkCondition {
    /// Mean one-way delay, milliseconds.
    pub delay_ms: f64,
    /// Half-width of the uniform jitter, milliseconds; at most `delay_ms`.
    pub jitter_ms: f64,
    /// Bernoulli drop probability.
    pub loss_prob: f64,
    pub seed: u64,
}

impl NetworkCondition {
    pub fn ideal(seed: u64) -> Self {
        NetworkCondition {
            delay_ms: 0.0,
            jitter_ms: 0.0,
            loss_prob: 0.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.delay_ms >= 0.0) {
            return Err(alloc::format!("delay_ms {} must be >= 0", self.delay_ms));
        }
        if !(0.0..=self.delay_ms).contains(&self.jitter_ms) {
            return Err(alloc::format!(
                "jitter_ms {} must be in [0, delay_ms = {}]",
                self.jitter_ms,
                self.delay_ms
            ));
        }
        if !(0.0..=1.0).contains(&self.loss_prob) {
            return Err(alloc::format!("loss_prob {} must be in [0, 1]", self.loss_prob));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Scheduled {
    deliver_at_us: u64,
    seq: u32,
    msg: WireMessage,
}

impl Eq for Scheduled {}

impl Ord for Scheduled {
    fn cmp(&self, other: &Self) -> core::cmp::Ordering {
        (self.deliver_at_us, self.seq).cmp(&(other.deliver_at_us, other.seq))
    }
}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<core::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SendOutcome {
    Scheduled { deliver_at_us: u64 },
    Dropped,
}

/// Deterministic simulated impairment channel.
///
/// RNG discipline (document-and-test exact): one `f64` draw in `[0, 1)` per
/// send decides loss; kept messages always draw a second `f64` mapped to
/// uniform jitter in `[-jitter, +jitter]`, even when jitter is zero.
#[derive(Debug, Clone)]
pub struct Channel {
    delay_ms: f64,
    jitter_ms: f64,
    loss_prob: f64,
    rng: ChaCha8Rng,
    queue: BinaryHeap<Reverse<Scheduled>>,
    last_now_us: u64,
    pub sent: u64,
    pub dropped: u64,
}

impl Channel {
    pub fn new(condition: &NetworkCondition) -> Channel {
        Channel {
            delay_ms: condition.delay_ms,
            jitter_ms: condition.jitter_ms,
            loss_prob: condition.loss_prob,
            rng: ChaCha8Rng::seed_from_u64(condition.seed),
            queue: BinaryHeap::new(),
            last_now_us: 0,
            sent: 0,
            dropped: 0,
        }
    }

    /// Swaps impairment parameters mid-run (scenario impact stage). The RNG
    /// stream continues from where it was.
    pub fn set_impairment(&mut self, condition: &NetworkCondition) {
        self.delay_ms = condition.delay_ms;
        self.jitter_ms = condition.jitter_ms;
        self.loss_prob = condition.loss_prob;
    }

    pub fn in_flight(&self) -> usize {
        self.queue.len()
    }

    /// Schedules or drops a message. The clock must be monotone.
    pub fn send(&mut self, msg: WireMessage, now_us: u64) -> SendOutcome {
        debug_assert!(now_us >= self.last_now_us, "channel clock went backwards");
        self.last_now_us = self.last_now_us.max(now_us);
        self.sent += 1;

        let loss_draw: f64 = self.rng.gen();
        if loss_draw < self.loss_prob {
            self.dropped += 1;
            return SendOutcome::Dropped;
        }
        let jitter_draw: f64 = self.rng.gen();
        let jitter_us = (2.0 * jitter_draw - 1.0) * self.jitter_ms * 1000.0;
        let delay_us = self.delay_ms * 1000.0 + jitter_us;
        let deliver_at_us = now_us + math::round(delay_us.max(0.0)) as u64;
        let seq = msg.seq;
        self.queue.push(Reverse(Scheduled {
            deliver_at_us,
            seq,
            msg,
        }));
        SendOutcome::Scheduled { deliver_at_us }
    }

    /// Drains every message due at `now_us`, ordered by delivery time (ties
    /// by seq). Jitter can reorder seq; consumers discard stale data by seq.
    pub fn poll(&mut self, now_us: u64) -> Vec<WireMessage> {
        debug_assert!(now_us >= self.last_now_us, "channel clock went backwards");
        self.last_now_us = self.last_now_us.max(now_us);
        let mut out = Vec::new();
        while let Some(Reverse(head)) = self.queue.peek() {
            if head.deliver_at_us > now_us {
                break;
            }
            out.push(self.queue.pop().unwrap().0.msg);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageKind {
    Reconnaissance,
    Discovery,
    Impact,
}

impl StageKind {
    pub fn name(self) -> &'static str {
        match self {
            StageKind::Reconnaissance => "reconnaissance",
            StageKind::Discovery => "discovery",
            StageKind::Impact => "impact",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioStage {
    pub kind: StageKind,
    /// Episode time the stage begins, seconds.
    pub at_s: f64,
    pub note: String,
}

/// A staged network adversary. Reconnaissance and discovery stages only
/// produce log entries; the impact stage switches the channel impairment to
/// `impact_condition`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdversaryScenario {
    pub stages: Vec<ScenarioStage>,
    pub impact_condition: NetworkCondition,
}

impl AdversaryScenario {
    pub fn validate(&self) -> Result<(), String> {
        for w in self.stages.windows(2) {
            if w[1].at_s < w[0].at_s {
                return Err(String::from("scenario stages must be ordered by time"));
            }
        }
        let impacts = self
            .stages
            .iter()
            .filter(|s| s.kind == StageKind::Impact)
            .count();
        if impacts > 1 {
            return Err(String::from("at most one impact stage"));
        }
        self.impact_condition.validate()
    }

    pub fn impact_at(&self) -> Option<f64> {
        self.stages
            .iter()
            .find(|s| s.kind == StageKind::Impact)
            .map(|s| s.at_s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn msg(seq: u32, ts: u64) -> WireMessage {
        WireMessage {
            msg_type: MsgType::Frame,
            seq,
            timestamp_us: ts,
            payload: vec![1, 2, 3],
        }
    }

    #[test]
    fn heartbeat_encoding_is_byte_exact() {
        let hb = WireMessage::heartbeat(0, 0);
        let bytes = encode(&hb);
        assert_eq!(
            bytes,
            alloc::vec![
                0x41, 0x44, 0x56, 0x4C, // "ADVL"
                0x01, // version
                0x03, // heartbeat
                0x00, 0x00, 0x00, 0x00, // seq
                0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, // timestamp
                0x00, 0x00, 0x00, 0x00, // payload_len
            ]
        );
        assert_eq!(bytes.len(), WIRE_HEADER_LEN);
    }

    #[test]
    fn decode_error_cases() {
        let good = encode(&msg(5, 123));
        let mut bad_magic = good.clone();
        bad_magic[0] ^= 0xFF;
        assert_eq!(decode(&bad_magic), Err(WireError::NotAProtocolMessage));

        assert_eq!(decode(&good[..10]), Err(WireError::IncompleteFrame));
        assert_eq!(decode(&good[..good.len() - 1]), Err(WireError::IncompleteFrame));

        let mut bad_version = good.clone();
        bad_version[4] = 9;
        assert_eq!(decode(&bad_version), Err(WireError::UnsupportedVersion(9)));

        let mut bad_type = good;
        bad_type[5] = 77;
        assert_eq!(decode(&bad_type), Err(WireError::UnknownType(77)));
    }

    #[test]
    fn roundtrip_identity() {
        let m = WireMessage {
            msg_type: MsgType::Command,
            seq: 0xDEAD_BEEF,
            timestamp_us: 0x0123_4567_89AB_CDEF,
            payload: (0..=255u8).collect(),
        };
        let bytes = encode(&m);
        let (back, consumed) = decode(&bytes).unwrap();
        assert_eq!(back, m);
        assert_eq!(consumed, bytes.len());
    }

    #[test]
    fn transparent_channel_delivers_immediately() {
        let mut ch = Channel::new(&NetworkCondition::ideal(1));
        ch.send(msg(1, 0), 0);
        let got = ch.poll(0);
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].seq, 1);
    }

    #[test]
    fn total_loss_delivers_nothing() {
        let mut ch = Channel::new(&NetworkCondition {
            delay_ms: 0.0,
            jitter_ms: 0.0,
            loss_prob: 1.0,
            seed: 2,
        });
        for i in 0..100 {
            assert_eq!(ch.send(msg(i, 0), i as u64), SendOutcome::Dropped);
        }
        assert!(ch.poll(10_000_000).is_empty());
        assert_eq!(ch.dropped, 100);
    }

    #[test]
    fn seeded_loss_count_matches_prng_oracle() {
        let cond = NetworkCondition {
            delay_ms: 10.0,
            jitter_ms: 0.0,
            loss_prob: 0.05,
            seed: 42,
        };
        let mut ch = Channel::new(&cond);
        let n = 10_000u64;
        let mut delivered = 0u64;
        for i in 0..n {
            if let SendOutcome::Scheduled { .. } = ch.send(msg(i as u32, 0), i) {
                delivered += 1;
            }
        }
        // independent replay of the documented draw discipline
        let mut oracle_rng = ChaCha8Rng::seed_from_u64(42);
        let mut oracle = 0u64;
        for _ in 0..n {
            let u: f64 = oracle_rng.gen();
            if u >= 0.05 {
                oracle += 1;
                let _jitter: f64 = oracle_rng.gen();
            }
        }
        assert_eq!(delivered, oracle);
        // +/- 3 binomial sigma around 9,500
        assert!((9_370..=9_630).contains(&delivered), "delivered {delivered}");
    }

    #[test]
    fn delivery_never_earlier_than_delay_minus_jitter() {
        let cond = NetworkCondition {
            delay_ms: 20.0,
            jitter_ms: 5.0,
            loss_prob: 0.0,
            seed: 7,
        };
        let mut ch = Channel::new(&cond);
        for i in 0..1000u64 {
            let now = i * 100;
            match ch.send(msg(i as u32, now), now) {
                SendOutcome::Scheduled { deliver_at_us } => {
                    assert!(deliver_at_us >= now + 15_000, "early delivery at {deliver_at_us}");
                    assert!(deliver_at_us <= now + 25_001);
                }
                SendOutcome::Dropped => panic!("no loss configured"),
            }
        }
    }

    #[test]
    fn schedule_is_reproducible_per_seed() {
        let cond = NetworkCondition {
            delay_ms: 15.0,
            jitter_ms: 10.0,
            loss_prob: 0.1,
            seed: 99,
        };
        let run = || {
            let mut ch = Channel::new(&cond);
            let mut outcomes = vec![];
            for i in 0..500u64 {
                outcomes.push(ch.send(msg(i as u32, i * 50), i * 50));
            }
            outcomes
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn jitter_reordering_and_consuming_poll() {
        // hand-constructed crossing: first message jittered late, second early
        let mut ch = Channel::new(&NetworkCondition {
            delay_ms: 10.0,
            jitter_ms: 8.0,
            loss_prob: 0.0,
            seed: 3,
        });
        // find a seed draw pattern that crosses: send until a later seq
        // delivers before an earlier one
        let mut schedule = vec![];
        for i in 0..50u32 {
            if let SendOutcome::Scheduled { deliver_at_us } = ch.send(msg(i, 0), 0) {
                schedule.push((i, deliver_at_us));
            }
        }
        let crossed = schedule
            .windows(2)
            .any(|w| w[1].1 < w[0].1);
        assert!(crossed, "jitter never produced reordering across 50 sends");

        let all = ch.poll(1_000_000);
        assert_eq!(all.len(), 50);
        // delivered in deliver_at order, which violates seq order somewhere
        let mut sorted = schedule.clone();
        sorted.sort_by_key(|&(seq, at)| (at, seq));
        let got: vec::Vec<u32> = all.iter().map(|m| m.seq).collect();
        let want: vec::Vec<u32> = sorted.iter().map(|&(seq, _)| seq).collect();
        assert_eq!(got, want);
        assert!(got.windows(2).any(|w| w[1] < w[0]));

        // drained: polling again yields nothing
        assert!(ch.poll(2_000_000).is_empty());
    }

    #[test]
    fn poll_before_due_returns_empty() {
        let mut ch = Channel::new(&NetworkCondition {
            delay_ms: 50.0,
            jitter_ms: 0.0,
            loss_prob: 0.0,
            seed: 4,
        });
        ch.send(msg(1, 0), 0);
        assert!(ch.poll(49_999).is_empty());
        assert_eq!(ch.poll(50_000).len(), 1);
    }

    #[test]
    fn scenario_validation() {
        let ok = AdversaryScenario {
            stages: vec![
                ScenarioStage {
                    kind: StageKind::Reconnaissance,
                    at_s: 1.0,
                    note: String::from("host scan"),
                },
                ScenarioStage {
                    kind: StageKind::Discovery,
                    at_s: 5.0,
                    note: String::from("stream inspection"),
                },
                ScenarioStage {
                    kind: StageKind::Impact,
                    at_s: 10.0,
                    note: String::from("impairment on"),
                },
            ],
            impact_condition: NetworkCondition {
                delay_ms: 100.0,
                jitter_ms: 0.0,
                loss_prob: 0.0,
                seed: 1,
            },
        };
        assert!(ok.validate().is_ok());
        assert_eq!(ok.impact_at(), Some(10.0));

        let mut unordered = ok.clone();
        unordered.stages.swap(0, 2);
        assert!(unordered.validate().is_err());
    }
}
