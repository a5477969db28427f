//! Packets and routing messages exchanged between nodes.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::time::SimTime;

/// Zero-based node identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrafficClass {
    RealTime,
    BestEffort,
    /// RREQ, RREP and RERR.
    Control,
}

impl TrafficClass {
    pub fn as_str(self) -> &'static str {
        match self {
            TrafficClass::RealTime => "RT",
            TrafficClass::BestEffort => "BE",
            TrafficClass::Control => "CTRL",
        }
    }

    pub fn is_data(self) -> bool {
        !matches!(self, TrafficClass::Control)
    }
}

impl fmt::Display for TrafficClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TrafficClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "RT" => Ok(TrafficClass::RealTime),
            "BE" => Ok(TrafficClass::BestEffort),
            "CTRL" => Ok(TrafficClass::Control),
            other => Err(format!("unknown traffic class `{other}`")),
        }
    }
}

/// Application that drives a flow. CBR stands in for real-time media, FTP
/// for bulk best-effort transfer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlowKind {
    Cbr,
    Ftp,
}

impl FlowKind {
    pub fn class(self) -> TrafficClass {
        match self {
            FlowKind::Cbr => TrafficClass::RealTime,
            FlowKind::Ftp => TrafficClass::BestEffort,
        }
    }

    pub fn default_packet_size(self) -> u32 {
        match self {
            FlowKind::Cbr => 512,
            FlowKind::Ftp => 1000,
        }
    }
}

/// Registry of the flows declared by a scenario.
#[derive(Debug, Clone, Default)]
pub struct FlowTable {
    kinds: BTreeMap<u32, FlowKind>,
}

impl FlowTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, flow_id: u32, kind: FlowKind) {
        self.kinds.insert(flow_id, kind);
    }

    pub fn classify(&self, flow_id: u32) -> Result<TrafficClass, ConfigError> {
        self.kinds
            .get(&flow_id)
            .map(|k| k.class())
            .ok_or(ConfigError::UnknownFlow(flow_id))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataPacket {
    pub packet_id: u64,
    pub flow_id: u32,
    pub src: NodeId,
    pub dst: NodeId,
    class: TrafficClass,
    pub size: u32,
    pub created_at: SimTime,
    pub current_hop_enqueued_at: SimTime,
    /// Links traversed so far.
    pub hops: u32,
}

impl DataPacket {
    /// Panics if `class` is `Control`; data packets are RT or BE only.
    pub fn new(
        packet_id: u64,
        flow_id: u32,
        src: NodeId,
        dst: NodeId,
        class: TrafficClass,
        size: u32,
        created_at: SimTime,
    ) -> Self {
        assert!(class.is_data(), "data packets cannot carry the control class");
        DataPacket {
            packet_id,
            flow_id,
            src,
            dst,
            class,
            size,
            created_at,
            current_hop_enqueued_at: created_at,
            hops: 0,
        }
    }

    pub fn class(&self) -> TrafficClass {
        self.class
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RreqMessage {
    pub origin: NodeId,
    pub origin_seq: u32,
    pub broadcast_id: u32,
    pub destination: NodeId,
    pub dest_seq_known: Option<u32>,
    pub hop_count: u32,
    /// Sum of the best-effort load ratios of the relays traversed so far.
    pub reserved_load: f64,
    pub issued_at: SimTime,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RrepMessage {
    pub destination: NodeId,
    pub dest_seq: u32,
    pub origin: NodeId,
    pub hop_count: u32,
    pub lifetime: SimTime,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RerrMessage {
    pub unreachable: Vec<(NodeId, u32)>,
}

/// Anything that can sit in a transmit buffer.
#[derive(Debug, Clone, PartialEq)]
pub enum Packet {
    Data(DataPacket),
    Rreq(RreqMessage),
    /// Unicast to `next_hop`.
    Rrep { msg: RrepMessage, next_hop: NodeId },
    Rerr(RerrMessage),
}

impl Packet {
    pub fn class(&self) -> TrafficClass {
        match self {
            Packet::Data(d) => d.class(),
            _ => TrafficClass::Control,
        }
    }

    pub fn is_control(&self) -> bool {
        !matches!(self, Packet::Data(_))
    }

    pub fn as_data(&self) -> Option<&DataPacket> {
        match self {
            Packet::Data(d) => Some(d),
            _ => None,
        }
    }
}
