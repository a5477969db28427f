#![allow(dead_code)]

use manet_qos::packet::{FlowKind, NodeId, TrafficClass};
use manet_qos::scenario::{FlowConfig, ScenarioConfig};
use manet_qos::trace::{TraceEvent, TraceRecord};
use manet_qos::{Point, ProtocolMode, SimOutcome, Simulator};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn flow(id: u32, kind: FlowKind, src: u32, dst: u32, rate: f64) -> FlowConfig {
    FlowConfig { id, kind, src, dst, rate, packet_size: None, start_at: 0.0, stop_at: None }
}

pub fn run_trace(cfg: &ScenarioConfig, pause: f64, mode: ProtocolMode) -> (Vec<TraceRecord>, SimOutcome) {
    let mut trace = Vec::new();
    let outcome = Simulator::new(cfg, pause, mode).unwrap().run(&mut trace);
    (trace, outcome)
}

/// A shorter default scenario that still congests the shared relays.
pub fn short_scenario(seed: u64) -> ScenarioConfig {
    ScenarioConfig { sim_time: 6.0, seed, ..ScenarioConfig::default() }
}

pub struct Diamond {
    pub s: NodeId,
    pub a: NodeId,
    pub b: NodeId,
    pub d: NodeId,
    pub trace: Vec<TraceRecord>,
}

/// Source S reaches destination D only through relays A and B, which are out
/// of range of each other. A holds six queued best-effort packets, B one.
/// The trial seed shuffles which node ids play which role.
pub fn diamond(mode: ProtocolMode, trial: u64) -> Diamond {
    let mut ids = [0u32, 1, 2, 3];
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(trial));
    let [s, a, b, d] = ids.map(NodeId);
    let cfg = ScenarioConfig {
        node_count: 4,
        sim_time: 0.1,
        seed: trial,
        flows: vec![flow(1, FlowKind::Cbr, s.0, d.0, 50.0)],
        ..ScenarioConfig::default()
    };
    let mut sim = Simulator::new(&cfg, 0.1, mode).unwrap();
    sim.fix_position(s, Point::new(0.0, 0.0));
    sim.fix_position(a, Point::new(200.0, 140.0));
    sim.fix_position(b, Point::new(200.0, -140.0));
    sim.fix_position(d, Point::new(400.0, 0.0));
    sim.preload(a, TrafficClass::BestEffort, d, 6);
    sim.preload(b, TrafficClass::BestEffort, d, 1);
    let mut trace = Vec::new();
    sim.run(&mut trace);
    Diamond { s, a, b, d, trace }
}

impl Diamond {
    /// The destination's first reply to the source's discovery.
    pub fn reply(&self) -> &TraceRecord {
        self.trace
            .iter()
            .find(|r| r.event == TraceEvent::RrepSend && r.node == self.d && r.get("origin") == Some(&self.s.to_string()))
            .expect("destination never replied to the source")
    }

    pub fn relayed_rrep(&self, relay: NodeId) -> bool {
        self.trace.iter().any(|r| {
            r.event == TraceEvent::Send
                && r.node == relay
                && r.get("kind") == Some("RREP")
                && r.get("to") == Some(&self.s.to_string())
        })
    }
}

pub type Check = Result<(), String>;

/// Replays each node's data buffer from Enqueue, Dequeue and eviction
/// records, checking per-class FIFO order and the capacity bound.
pub fn check_fifo_and_capacity(trace: &[TraceRecord], capacity: usize) -> Check {
    use std::collections::{HashMap, VecDeque};
    let mut queues: HashMap<(NodeId, TrafficClass), VecDeque<u64>> = HashMap::new();
    let mut occupancy: HashMap<NodeId, usize> = HashMap::new();
    for r in trace {
        let (Some(id), Some(class)) = (r.packet_id, r.class) else { continue };
        let q = queues.entry((r.node, class)).or_default();
        let occ = occupancy.entry(r.node).or_default();
        match r.event {
            TraceEvent::Enqueue => {
                q.push_back(id);
                *occ += 1;
                if *occ > capacity {
                    return Err(format!("node {} holds {occ} data packets at {}", r.node, r.time));
                }
            }
            TraceEvent::Dequeue => {
                if q.front() != Some(&id) {
                    return Err(format!("out-of-order dequeue: {r}"));
                }
                q.pop_front();
                *occ -= 1;
            }
            TraceEvent::DropTail | TraceEvent::DropSource if r.get("reason") == Some("evicted") => {
                let pos = q.iter().position(|&x| x == id).ok_or_else(|| format!("unknown eviction: {r}"))?;
                q.remove(pos);
                *occ -= 1;
            }
            _ => {}
        }
    }
    Ok(())
}

pub fn check_strict_slots(trace: &[TraceRecord], sched: &manet_qos::SchedulerConfig) -> Check {
    use manet_qos::queue::{current_slot, Slot};
    for r in trace.iter().filter(|r| r.event == TraceEvent::Dequeue) {
        let want = match r.class {
            Some(TrafficClass::RealTime) => Slot::RealTime,
            _ => Slot::BestEffort,
        };
        if current_slot(r.time, sched) != want {
            return Err(format!("dequeue in the wrong slot: {r}"));
        }
    }
    Ok(())
}

pub fn check_conservation(trace: &[TraceRecord], outcome: &SimOutcome) -> Check {
    for class in [TrafficClass::RealTime, TrafficClass::BestEffort] {
        let count = |pred: &dyn Fn(&TraceRecord) -> bool| {
            trace.iter().filter(|r| r.class == Some(class) && r.packet_id.is_some() && pred(r)).count() as u64
        };
        let generated = count(&|r| r.event == TraceEvent::Generate);
        let delivered = count(&|r| r.event == TraceEvent::Deliver);
        let dropped = count(&|r| r.event.is_data_drop());
        let residual = outcome.residual.of(class);
        if generated != delivered + dropped + residual {
            return Err(format!(
                "{class:?}: generated {generated} != delivered {delivered} + dropped {dropped} + in network {residual}"
            ));
        }
    }
    Ok(())
}

/// Every forwarded RREQ's reserved load must equal its upstream forwarder's
/// value plus the ratio the node sampled; returns how many were checked.
pub fn check_path_sums(trace: &[TraceRecord]) -> Result<usize, String> {
    use std::collections::HashMap;
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0);
    let mut reserved: HashMap<(String, String, String), f64> = HashMap::new();
    let mut last_ratio: HashMap<NodeId, f64> = HashMap::new();
    let mut checked = 0;
    for r in trace {
        match r.event {
            TraceEvent::RatioSample => {
                last_ratio.insert(r.node, r.get_parsed("ratio").ok_or("ratio missing")?);
            }
            TraceEvent::RreqForward => {
                let origin = r.get("origin").ok_or("origin missing")?.to_owned();
                let bid = r.get("bid").ok_or("bid missing")?.to_owned();
                let prev = r.get("prev").ok_or("prev missing")?.to_owned();
                let upstream = if prev == origin {
                    0.0
                } else {
                    *reserved.get(&(origin.clone(), bid.clone(), prev)).ok_or_else(|| format!("no upstream for {r}"))?
                };
                let got: f64 = r.get_parsed("reserved").ok_or("reserved missing")?;
                let want = upstream + last_ratio.get(&r.node).ok_or_else(|| format!("no ratio sample before {r}"))?;
                if !close(got, want) {
                    return Err(format!("{r}: reserved {got}, path sum {want}"));
                }
                reserved.insert((origin, bid, r.node.to_string()), got);
                checked += 1;
            }
            _ => {}
        }
    }
    Ok(checked)
}
