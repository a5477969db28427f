//! Scenario configuration.
//!
//! Scenarios are TOML documents whose keys mirror [`ScenarioConfig`]. Any
//! key left out takes its default; unknown keys are rejected.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::ConfigError;
use crate::mobility::{Area, MobilityParams, RadioModel};
use crate::packet::{FlowKind, FlowTable, NodeId, TrafficClass};
use crate::queue::SchedulerConfig;
use crate::routing::{AodvConfig, ProtocolMode};
use crate::time::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AreaConfig {
    pub width: f64,
    pub height: f64,
}

impl Default for AreaConfig {
    fn default() -> Self {
        AreaConfig { width: 700.0, height: 600.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SlotConfig {
    pub rt_slot: f64,
    pub be_slot: f64,
    pub strict_slots: bool,
}

impl Default for SlotConfig {
    fn default() -> Self {
        SlotConfig { rt_slot: 0.005, be_slot: 0.003, strict_slots: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowConfig {
    pub id: u32,
    pub kind: FlowKind,
    pub src: u32,
    pub dst: u32,
    /// Packets per second.
    pub rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub packet_size: Option<u32>,
    #[serde(default)]
    pub start_at: f64,
    /// Defaults to the end of the run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_at: Option<f64>,
}

impl FlowConfig {
    pub fn class(&self) -> TrafficClass {
        self.kind.class()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub area: AreaConfig,
    pub node_count: u32,
    pub sim_time: f64,
    pub queue_capacity: usize,
    pub radio_range: f64,
    pub tx_time: f64,
    pub pause_times: Vec<f64>,
    pub speed_range: (f64, f64),
    pub protocol_mode: ProtocolMode,
    pub scheduler: SlotConfig,
    pub collection_window: f64,
    pub flows: Vec<FlowConfig>,
    pub seed: u64,
    /// Width of the cumulative-throughput buckets in reports.
    pub bucket_width: f64,
    /// Interval between node position records in traces; 0 disables them.
    pub mobility_sample_interval: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            area: AreaConfig::default(),
            node_count: 15,
            sim_time: 40.0,
            queue_capacity: 20,
            radio_range: 250.0,
            tx_time: 0.001,
            pause_times: vec![0.0, 10.0, 20.0, 40.0],
            speed_range: (1.0, 20.0),
            protocol_mode: ProtocolMode::Baseline,
            scheduler: SlotConfig::default(),
            collection_window: 0.010,
            flows: default_flows(),
            seed: 42,
            bucket_width: 5.0,
            mobility_sample_interval: 1.0,
        }
    }
}

/// One real-time flow and two backlogged best-effort flows, all converging
/// on node 0 so their routes tend to share relays near it. Rates are tuning
/// parameters chosen to saturate those relays, not measured values.
pub fn default_flows() -> Vec<FlowConfig> {
    let flow = |id, kind, src, dst, rate| FlowConfig {
        id,
        kind,
        src,
        dst,
        rate,
        packet_size: None,
        start_at: 1.0,
        stop_at: None,
    };
    vec![
        flow(1, FlowKind::Cbr, 5, 0, 200.0),
        flow(2, FlowKind::Ftp, 7, 0, 1000.0),
        flow(3, FlowKind::Ftp, 9, 0, 1000.0),
    ]
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
            line: e.span().map(|s| line_of(text, s.start)).unwrap_or(0),
            message: e.message().to_owned(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario config always serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = |field: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(ConfigError::invalid(field, format!("must be positive, got {v}")))
            }
        };
        let non_negative = |field: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(ConfigError::invalid(field, format!("must be non-negative, got {v}")))
            }
        };
        positive("area.width", self.area.width)?;
        positive("area.height", self.area.height)?;
        if self.node_count < 2 {
            return Err(ConfigError::invalid("node_count", format!("needs at least 2 nodes, got {}", self.node_count)));
        }
        non_negative("sim_time", self.sim_time)?;
        if self.queue_capacity == 0 {
            return Err(ConfigError::invalid("queue_capacity", "must be positive"));
        }
        positive("radio_range", self.radio_range)?;
        positive("tx_time", self.tx_time)?;
        if self.pause_times.is_empty() {
            return Err(ConfigError::invalid("pause_times", "sweep list is empty"));
        }
        for &p in &self.pause_times {
            non_negative("pause_times", p)?;
        }
        let (lo, hi) = self.speed_range;
        positive("speed_range", lo)?;
        if !(hi.is_finite() && hi >= lo) {
            return Err(ConfigError::invalid("speed_range", format!("max {hi} below min {lo}")));
        }
        positive("scheduler.rt_slot", self.scheduler.rt_slot)?;
        non_negative("scheduler.be_slot", self.scheduler.be_slot)?;
        self.scheduler_config(SimTime::ZERO).validate()?;
        non_negative("collection_window", self.collection_window)?;
        positive("bucket_width", self.bucket_width)?;
        non_negative("mobility_sample_interval", self.mobility_sample_interval)?;

        let mut ids = BTreeSet::new();
        for f in &self.flows {
            let field = |name: &str| format!("flows[{}].{name}", f.id);
            if !ids.insert(f.id) {
                return Err(ConfigError::invalid(field("id"), "duplicate flow id"));
            }
            if f.src >= self.node_count {
                return Err(ConfigError::invalid(field("src"), format!("node {} out of range 0..{}", f.src, self.node_count)));
            }
            if f.dst >= self.node_count {
                return Err(ConfigError::invalid(field("dst"), format!("node {} out of range 0..{}", f.dst, self.node_count)));
            }
            if f.src == f.dst {
                return Err(ConfigError::invalid(field("dst"), "source and destination coincide"));
            }
            positive(&field("rate"), f.rate)?;
            non_negative(&field("start_at"), f.start_at)?;
            if f.packet_size == Some(0) {
                return Err(ConfigError::invalid(field("packet_size"), "must be positive"));
            }
            if let Some(stop) = f.stop_at {
                if !(stop > f.start_at && stop <= self.sim_time) {
                    return Err(ConfigError::invalid(
                        field("stop_at"),
                        format!("must satisfy start_at < stop_at <= sim_time, got {stop}"),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn scheduler_config(&self, phase_origin: SimTime) -> SchedulerConfig {
        SchedulerConfig {
            rt_slot: SimTime::from_secs_f64(self.scheduler.rt_slot),
            be_slot: SimTime::from_secs_f64(self.scheduler.be_slot),
            tx_time: SimTime::from_secs_f64(self.tx_time),
            strict_slots: self.scheduler.strict_slots,
            slot_phase_origin: phase_origin,
        }
    }

    pub fn radio(&self) -> RadioModel {
        RadioModel { range: self.radio_range, tx_time: SimTime::from_secs_f64(self.tx_time) }
    }

    pub fn mobility(&self, pause: f64) -> MobilityParams {
        MobilityParams {
            area: Area { width: self.area.width, height: self.area.height },
            speed_min: self.speed_range.0,
            speed_max: self.speed_range.1,
            pause: SimTime::from_secs_f64(pause),
        }
    }

    pub fn aodv(&self, mode: ProtocolMode) -> AodvConfig {
        AodvConfig::new(mode, SimTime::from_secs_f64(self.collection_window))
    }

    pub fn flow_table(&self) -> FlowTable {
        let mut t = FlowTable::new();
        for f in &self.flows {
            t.register(f.id, f.kind);
        }
        t
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> {
        (0..self.node_count).map(NodeId)
    }

    /// Digest of everything that shapes a run except the protocol mode, so
    /// runs that differ only in mode share a fingerprint.
    pub fn fingerprint(&self, pause: f64) -> String {
        let mut canonical = self.clone();
        canonical.protocol_mode = ProtocolMode::Baseline;
        canonical.pause_times = vec![pause];
        let digest = Sha256::digest(canonical.to_toml_string().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<ScenarioConfig, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
    ScenarioConfig::from_toml_str(&text)
}
