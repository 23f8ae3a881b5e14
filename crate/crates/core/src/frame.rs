//! MAC frames and queued packets.

use std::fmt;

use crate::engine::Micros;
use crate::phy::Rate;

/// Index of a node inside a simulation (position in the topology).
pub type NodeIdx = usize;

/// Globally unique packet identifier within one run.
pub type PacketId = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FrameKind {
    Rts,
    Cts,
    Data,
    Ack,
    Beacon,
    CfPoll,
    CfAck,
    CfEnd,
    DataCfAck,
}

impl FrameKind {
    pub fn is_data(self) -> bool {
        matches!(self, FrameKind::Data | FrameKind::DataCfAck)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FrameKind::Rts => "RTS",
            FrameKind::Cts => "CTS",
            FrameKind::Data => "DATA",
            FrameKind::Ack => "ACK",
            FrameKind::Beacon => "BEACON",
            FrameKind::CfPoll => "CF_POLL",
            FrameKind::CfAck => "CF_ACK",
            FrameKind::CfEnd => "CF_END",
            FrameKind::DataCfAck => "DATA_CF_ACK",
        }
    }
}

impl fmt::Display for FrameKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which mechanism produced a frame. Used by metrics and trace checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Role {
    #[default]
    Normal,
    /// Exposed-node parallel transmission and its ACKs.
    Parallel,
    /// Reverse traffic carried by the ACK-as-RTS exchange, and its frames.
    Reverse,
    /// Contention-free period traffic.
    ContentionFree,
}

/// Rate and size carried in place of a duration field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateInfo {
    pub rate: Rate,
    pub size: u64,
}

/// The slice of a packet that a DATA frame carries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PacketRef {
    pub id: PacketId,
    pub flow: usize,
    pub offset: u64,
    pub total: u64,
    pub created: Micros,
}

impl PacketRef {
    pub fn completes(&self, bytes: u64) -> bool {
        self.offset + bytes >= self.total
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub kind: FrameKind,
    pub src: NodeIdx,
    /// `None` for broadcast frames (beacon, CF-END).
    pub dst: Option<NodeIdx>,
    /// NAV value in microseconds.
    pub duration: Micros,
    pub payload_bytes: u64,
    pub more_fragments: bool,
    pub fragment_number: u32,
    pub retry: bool,
    /// Tentative rate on RTS, selected rate on CTS.
    pub rate_info: Option<RateInfo>,
    /// Reservation sub-header prepended to DATA.
    pub rsh: bool,
    /// Contention window advertised by shared-window backoff.
    pub cw_advert: Option<u32>,
    /// Piggybacked acknowledgment in contention-free frames.
    pub cf_ack: bool,
    /// Bytes acknowledged by an ACK; lets neighbours account others' traffic.
    pub acked_bytes: u64,
    pub packet: Option<PacketRef>,
    pub role: Role,
}

impl Frame {
    pub fn new(kind: FrameKind, src: NodeIdx, dst: Option<NodeIdx>, payload_bytes: u64) -> Self {
        Frame {
            kind,
            src,
            dst,
            duration: 0,
            payload_bytes,
            more_fragments: false,
            fragment_number: 0,
            retry: false,
            rate_info: None,
            rsh: false,
            cw_advert: None,
            cf_ack: false,
            acked_bytes: 0,
            packet: None,
            role: Role::Normal,
        }
    }

    pub fn with_duration(mut self, duration: Micros) -> Self {
        self.duration = duration;
        self
    }

    pub fn with_role(mut self, role: Role) -> Self {
        self.role = role;
        self
    }

    pub fn is_for(&self, node: NodeIdx) -> bool {
        self.dst == Some(node)
    }
}

/// A unit of traffic waiting in a station queue.
#[derive(Debug, Clone, PartialEq)]
pub struct Packet {
    pub id: PacketId,
    pub flow: usize,
    pub dst: NodeIdx,
    pub bytes: u64,
    /// Bytes already acknowledged (fragments or partial parallel sends).
    pub acked: u64,
    pub created: Micros,
    /// Eligible for the ACK-as-RTS reverse exchange.
    pub reverse: bool,
    pub category: usize,
    /// True until the first transmission attempt of this packet fails.
    pub first_attempt: bool,
}

impl Packet {
    pub fn new(id: PacketId, flow: usize, dst: NodeIdx, bytes: u64, created: Micros) -> Self {
        Packet {
            id,
            flow,
            dst,
            bytes,
            acked: 0,
            created,
            reverse: false,
            category: 0,
            first_attempt: true,
        }
    }

    pub fn remaining(&self) -> u64 {
        self.bytes - self.acked
    }

    pub fn as_ref_at(&self, offset: u64) -> PacketRef {
        PacketRef {
            id: self.id,
            flow: self.flow,
            offset,
            total: self.bytes,
            created: self.created,
        }
    }
}
