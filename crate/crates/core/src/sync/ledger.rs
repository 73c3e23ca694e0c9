//! Byte-level communication accounting and the message wire format.
//!
//! Frames are `tag (1 byte) | body length (u64 LE) | body`. A theta body is
//! the bit-packed parameter vector (see [`pack_theta`]); a summary body is
//! `d` little-endian `u32` counts followed by the sample count as `u64`.

use num_bigint::BigUint;
use num_traits::ToPrimitive;

use super::Protocol;
use crate::error::{Error, Result};
use crate::intmodel::{pack_theta, unpack_theta, DataSummary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Payload {
    /// Learner-to-coordinator model upload.
    Theta,
    /// Learner-to-coordinator data summary upload.
    Summary,
    /// Coordinator-to-learner model (average or global fit).
    BroadcastTheta,
    /// Coordinator-to-learner merged summary.
    BroadcastSummary,
}

impl Payload {
    pub fn name(self) -> &'static str {
        match self {
            Payload::Theta => "theta upload",
            Payload::Summary => "summary upload",
            Payload::BroadcastTheta => "theta broadcast",
            Payload::BroadcastSummary => "summary broadcast",
        }
    }

    pub fn is_upload(self) -> bool {
        matches!(self, Payload::Theta | Payload::Summary)
    }

    pub fn tag(self) -> u8 {
        match self {
            Payload::Theta => 1,
            Payload::Summary => 2,
            Payload::BroadcastTheta => 3,
            Payload::BroadcastSummary => 4,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            1 => Ok(Payload::Theta),
            2 => Ok(Payload::Summary),
            3 => Ok(Payload::BroadcastTheta),
            4 => Ok(Payload::BroadcastSummary),
            other => Err(Error::Wire(format!("unknown payload tag {other}"))),
        }
    }

    fn carries_summary(self) -> bool {
        matches!(self, Payload::Summary | Payload::BroadcastSummary)
    }
}

impl Protocol {
    /// Which payloads may travel under this protocol.
    pub fn permits(self, payload: Payload) -> bool {
        use Payload::*;
        match self {
            Protocol::None => false,
            Protocol::Centralized => matches!(payload, Summary | BroadcastTheta),
            Protocol::Naive => true,
            Protocol::Private => matches!(payload, Theta | BroadcastTheta),
        }
    }
}

/// Per-message size constants.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ByteCosts {
    pub header: u64,
    /// Bytes per summary count.
    pub counter: u64,
    /// Bytes for the summary's sample count.
    pub sample_count: u64,
}

impl Default for ByteCosts {
    fn default() -> Self {
        ByteCosts {
            header: 8,
            counter: 4,
            sample_count: 8,
        }
    }
}

impl ByteCosts {
    /// Bytes of one message carrying `payload`, with `bits` bits per parameter.
    pub fn message_bytes(&self, payload: Payload, d: usize, bits: u32) -> u64 {
        let d = d as u64;
        if payload.carries_summary() {
            self.header + d * self.counter + self.sample_count
        } else {
            self.header + (d * bits as u64).div_ceil(8)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommLedger {
    protocol: Protocol,
    costs: ByteCosts,
    pub bytes_up: u64,
    pub bytes_down: u64,
    pub theta_msgs: u64,
    pub summary_msgs: u64,
    pub broadcast_msgs: u64,
}

impl CommLedger {
    pub fn new(protocol: Protocol) -> Self {
        Self::with_costs(protocol, ByteCosts::default())
    }

    pub fn with_costs(protocol: Protocol, costs: ByteCosts) -> Self {
        CommLedger {
            protocol,
            costs,
            bytes_up: 0,
            bytes_down: 0,
            theta_msgs: 0,
            summary_msgs: 0,
            broadcast_msgs: 0,
        }
    }

    pub fn protocol(&self) -> Protocol {
        self.protocol
    }

    pub fn total_bytes(&self) -> u64 {
        self.bytes_up + self.bytes_down
    }

    /// Records `recipients` copies of a `payload` message and returns the bytes added.
    pub fn account(&mut self, payload: Payload, d: usize, bits: u32, recipients: u64) -> Result<u64> {
        if !self.protocol.permits(payload) {
            return Err(Error::PrivacyViolation {
                payload: payload.name(),
                protocol: self.protocol.name(),
            });
        }
        let bytes = self.costs.message_bytes(payload, d, bits) * recipients;
        if payload.is_upload() {
            self.bytes_up += bytes;
        } else {
            self.bytes_down += bytes;
            self.broadcast_msgs += recipients;
        }
        if payload.carries_summary() {
            self.summary_msgs += recipients;
        } else if payload == Payload::Theta {
            self.theta_msgs += recipients;
        }
        Ok(bytes)
    }
}

/// Free-function form of [`CommLedger::account`].
pub fn account(ledger: &mut CommLedger, payload: Payload, d: usize, bits: u32, recipients: u64) -> Result<u64> {
    ledger.account(payload, d, bits, recipients)
}

pub fn encode_frame(payload: Payload, body: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(9 + body.len());
    out.push(payload.tag());
    out.extend_from_slice(&(body.len() as u64).to_le_bytes());
    out.extend_from_slice(body);
    out
}

pub fn decode_frame(bytes: &[u8]) -> Result<(Payload, &[u8])> {
    if bytes.len() < 9 {
        return Err(Error::Wire(format!(
            "frame of {} bytes is shorter than its header",
            bytes.len()
        )));
    }
    let payload = Payload::from_tag(bytes[0])?;
    let len = u64::from_le_bytes(bytes[1..9].try_into().expect("8 bytes")) as usize;
    let body = &bytes[9..];
    if body.len() != len {
        return Err(Error::Wire(format!(
            "frame declares {len} body bytes, has {}",
            body.len()
        )));
    }
    Ok((payload, body))
}

pub fn encode_theta(theta: &[u32], k: u32) -> Vec<u8> {
    pack_theta(theta, k)
}

pub fn decode_theta(body: &[u8], d: usize, k: u32) -> Result<Vec<u32>> {
    unpack_theta(body, d, k)
}

pub fn encode_summary(summary: &DataSummary) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(summary.dim() * 4 + 8);
    for c in &summary.counts {
        let c = c
            .to_u32()
            .ok_or_else(|| Error::Wire(format!("count {c} does not fit in 4 bytes")))?;
        out.extend_from_slice(&c.to_le_bytes());
    }
    let n = summary
        .n
        .to_u64()
        .ok_or_else(|| Error::Wire(format!("sample count {} does not fit in 8 bytes", summary.n)))?;
    out.extend_from_slice(&n.to_le_bytes());
    Ok(out)
}

pub fn decode_summary(body: &[u8], d: usize) -> Result<DataSummary> {
    if body.len() != d * 4 + 8 {
        return Err(Error::Wire(format!(
            "summary body needs {} bytes, got {}",
            d * 4 + 8,
            body.len()
        )));
    }
    let counts = body[..d * 4]
        .chunks_exact(4)
        .map(|c| BigUint::from(u32::from_le_bytes(c.try_into().expect("4 bytes"))))
        .collect();
    let n = BigUint::from(u64::from_le_bytes(body[d * 4..].try_into().expect("8 bytes")));
    Ok(DataSummary { counts, n })
}
