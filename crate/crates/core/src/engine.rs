//! Discrete-event kernel.
//!
//! Events fire in `(fire_at, seq)` order, where `seq` is the insertion
//! counter, so a run is a pure function of the scenario and seed. Each node
//! owns a drop-tail buffer drained one packet per `tx_time`; the disk radio
//! decides who hears a transmission, and a unicast to a neighbour that has
//! moved out of range is reported to routing as a link break.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::ConfigError;
use crate::mobility::{in_range, Leg, MobilityState, Point, RadioModel};
use crate::packet::{DataPacket, NodeId, Packet, RerrMessage, TrafficClass};
use crate::queue::{compute_node_ratio, count_classes, current_slot, Admission, Buffer, Discipline, Slot};
use crate::routing::{AodvNode, DiscoveryTimeout, ProtocolMode, RrepAction, RreqAction};
use crate::scenario::ScenarioConfig;
use crate::time::SimTime;
use crate::trace::{TraceEvent, TraceRecord, TraceSink};

/// Packets a source holds while waiting for a route.
const PENDING_CAPACITY: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct TrafficFlow {
    pub flow_id: u32,
    pub src: NodeId,
    pub dst: NodeId,
    pub class: TrafficClass,
    pub rate: f64,
    pub packet_size: u32,
    pub start_at: SimTime,
    pub stop_at: SimTime,
}

impl TrafficFlow {
    pub fn interval(&self) -> SimTime {
        SimTime::from_secs_f64(1.0 / self.rate)
    }

    /// Time of the tick after `now`, if the flow is still active then.
    pub fn next_tick(&self, now: SimTime) -> Option<SimTime> {
        let next = now + self.interval();
        (next < self.stop_at).then_some(next)
    }
}

#[derive(Debug, Clone)]
pub enum EventKind {
    SimEnd,
    TrafficTick { flow: usize },
    TransmitOpportunity { node: NodeId },
    PacketArrival { to: NodeId, from: NodeId, packet: Packet },
    WindowClose { node: NodeId, key: (NodeId, u32) },
    DiscoveryTimeout { node: NodeId, destination: NodeId, broadcast_id: u32 },
    MobilityUpdate,
}

#[derive(Debug, Clone)]
pub struct Event {
    pub fire_at: SimTime,
    pub seq: u64,
    pub kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.fire_at == other.fire_at && self.seq == other.seq
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    // Reversed so the max-heap pops the earliest event.
    fn cmp(&self, other: &Self) -> Ordering {
        other.fire_at.cmp(&self.fire_at).then_with(|| other.seq.cmp(&self.seq))
    }
}

#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<Event>,
    next_seq: u64,
    now: SimTime,
}

impl EventQueue {
    pub fn now(&self) -> SimTime {
        self.now
    }

    /// Panics if `fire_at` lies in the past.
    pub fn schedule(&mut self, fire_at: SimTime, kind: EventKind) {
        assert!(fire_at >= self.now, "event scheduled in the past: {fire_at} < {}", self.now);
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Event { fire_at, seq, kind });
    }

    pub fn pop(&mut self) -> Option<Event> {
        let ev = self.heap.pop()?;
        self.now = ev.fire_at;
        Some(ev)
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    fn pending(&self) -> impl Iterator<Item = &Event> {
        self.heap.iter()
    }
}

/// Data packets still inside the network when the run ended.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Residual {
    pub real_time: u64,
    pub best_effort: u64,
}

impl Residual {
    fn add(&mut self, class: TrafficClass) {
        match class {
            TrafficClass::RealTime => self.real_time += 1,
            TrafficClass::BestEffort => self.best_effort += 1,
            TrafficClass::Control => {}
        }
    }

    pub fn of(&self, class: TrafficClass) -> u64 {
        match class {
            TrafficClass::RealTime => self.real_time,
            TrafficClass::BestEffort => self.best_effort,
            TrafficClass::Control => 0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SimOutcome {
    pub residual: Residual,
    pub events_processed: u64,
    pub packets_generated: u64,
}

struct NodeState {
    aodv: AodvNode,
    buffer: Buffer,
    discipline: Discipline,
    mobility: MobilityState,
    /// Source packets waiting for route discovery.
    pending: VecDeque<DataPacket>,
    next_opportunity: Option<SimTime>,
    busy_until: SimTime,
}

/// A configured, not yet started, simulation.
pub struct Simulator {
    mode: ProtocolMode,
    sim_end: SimTime,
    radio: RadioModel,
    mobility_interval: SimTime,
    nodes: Vec<NodeState>,
    flows: Vec<TrafficFlow>,
    next_packet_id: u64,
    preloaded: Vec<(NodeId, DataPacket)>,
}

/// Seeds are split into independent ChaCha streams: stream 0 lays out the
/// initial positions, stream `i + 1` drives node `i`'s movement.
fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

impl Simulator {
    pub fn new(cfg: &ScenarioConfig, pause: f64, mode: ProtocolMode) -> Result<Self, ConfigError> {
        cfg.validate()?;
        let params = cfg.mobility(pause);
        let mut layout = stream(cfg.seed, 0);
        let tx_time = SimTime::from_secs_f64(cfg.tx_time);
        let nodes = cfg
            .node_ids()
            .map(|id| {
                let start = params.area.random_point(&mut layout);
                let discipline = match mode {
                    ProtocolMode::Baseline => Discipline::Fifo,
                    // Every node starts at t = 0, which anchors its slot cycle.
                    ProtocolMode::QosImproved => Discipline::Slotted(cfg.scheduler_config(SimTime::ZERO)),
                };
                NodeState {
                    aodv: AodvNode::new(id, cfg.aodv(mode)),
                    buffer: Buffer::new(cfg.queue_capacity),
                    discipline,
                    mobility: MobilityState::new(start, params, stream(cfg.seed, u64::from(id.0) + 1)),
                    pending: VecDeque::new(),
                    next_opportunity: None,
                    busy_until: SimTime::ZERO,
                }
            })
            .collect();
        let sim_end = SimTime::from_secs_f64(cfg.sim_time);
        let flows = cfg
            .flows
            .iter()
            .map(|f| TrafficFlow {
                flow_id: f.id,
                src: NodeId(f.src),
                dst: NodeId(f.dst),
                class: f.class(),
                rate: f.rate,
                packet_size: f.packet_size.unwrap_or_else(|| f.kind.default_packet_size()),
                start_at: SimTime::from_secs_f64(f.start_at),
                stop_at: f.stop_at.map(SimTime::from_secs_f64).unwrap_or(sim_end),
            })
            .collect();
        Ok(Simulator {
            mode,
            sim_end,
            radio: RadioModel { range: cfg.radio_range, tx_time },
            mobility_interval: SimTime::from_secs_f64(cfg.mobility_sample_interval),
            nodes,
            flows,
            next_packet_id: 1,
            preloaded: Vec::new(),
        })
    }

    pub fn mode(&self) -> ProtocolMode {
        self.mode
    }

    /// Pins a node at `at` for the whole run.
    pub fn fix_position(&mut self, node: NodeId, at: Point) {
        let state = &mut self.nodes[node.index()];
        let leg = Leg::hold(at, SimTime::ZERO, SimTime::MAX);
        state.mobility = MobilityState::with_leg(leg, *state.mobility_params(), stream(0, u64::from(node.0) + 1));
    }

    /// Places `count` data packets of `class`, addressed to `dst`, in a
    /// node's buffer before the run starts. They are traced as generated
    /// at time zero by that node.
    pub fn preload(&mut self, node: NodeId, class: TrafficClass, dst: NodeId, count: usize) {
        for _ in 0..count {
            let id = self.next_packet_id;
            self.next_packet_id += 1;
            let d = DataPacket::new(id, 0, node, dst, class, 0, SimTime::ZERO);
            self.preloaded.push((node, d));
        }
    }

    pub fn run<S: TraceSink>(self, sink: S) -> SimOutcome {
        let mut engine = Engine { sim: self, sink, queue: EventQueue::default(), outcome: SimOutcome::default() };
        engine.run();
        engine.outcome
    }
}

impl NodeState {
    fn mobility_params(&self) -> &crate::mobility::MobilityParams {
        self.mobility.params()
    }
}

struct Engine<S> {
    sim: Simulator,
    sink: S,
    queue: EventQueue,
    outcome: SimOutcome,
}

impl<S: TraceSink> Engine<S> {
    fn now(&self) -> SimTime {
        self.queue.now()
    }

    fn emit(&mut self, rec: TraceRecord) {
        self.sink.record(rec);
    }

    fn node(&mut self, n: NodeId) -> &mut NodeState {
        &mut self.sim.nodes[n.index()]
    }

    fn position(&mut self, n: NodeId) -> Point {
        let now = self.now();
        self.node(n).mobility.position_at(now)
    }

    fn run(&mut self) {
        self.queue.schedule(self.sim.sim_end, EventKind::SimEnd);
        if self.sim.mobility_interval > SimTime::ZERO {
            self.queue.schedule(SimTime::ZERO, EventKind::MobilityUpdate);
        }
        for (i, f) in self.sim.flows.iter().enumerate() {
            if f.start_at < f.stop_at {
                self.queue.schedule(f.start_at, EventKind::TrafficTick { flow: i });
            }
        }
        let preloaded = std::mem::take(&mut self.sim.preloaded);
        if self.sim.sim_end > SimTime::ZERO {
            for (n, d) in preloaded {
                self.outcome.packets_generated += 1;
                self.trace_generate(n, &d);
                self.enqueue_data(n, d);
            }
        }

        while let Some(ev) = self.queue.pop() {
            self.outcome.events_processed += 1;
            match ev.kind {
                EventKind::SimEnd => break,
                EventKind::TrafficTick { flow } => self.traffic_tick(flow),
                EventKind::TransmitOpportunity { node } => self.opportunity(node),
                EventKind::PacketArrival { to, from, packet } => self.arrival(to, from, packet),
                EventKind::WindowClose { node, key } => self.close_window(node, key),
                EventKind::DiscoveryTimeout { node, destination, broadcast_id } => {
                    self.discovery_timeout(node, destination, broadcast_id)
                }
                EventKind::MobilityUpdate => self.mobility_update(),
            }
        }
        self.outcome.residual = self.residual();
    }

    fn residual(&self) -> Residual {
        let mut r = Residual::default();
        for node in &self.sim.nodes {
            node.buffer.iter().filter_map(Packet::as_data).for_each(|d| r.add(d.class()));
            node.pending.iter().for_each(|d| r.add(d.class()));
        }
        for ev in self.queue.pending() {
            if let EventKind::PacketArrival { packet: Packet::Data(d), .. } = &ev.kind {
                r.add(d.class());
            }
        }
        r
    }

    fn mobility_update(&mut self) {
        let now = self.now();
        for i in 0..self.sim.nodes.len() {
            let n = NodeId(i as u32);
            let p = self.position(n);
            self.emit(TraceRecord::new(now, n, TraceEvent::Mobility).with("x", p.x).with("y", p.y));
        }
        self.queue.schedule(now + self.sim.mobility_interval, EventKind::MobilityUpdate);
    }

    fn trace_generate(&mut self, n: NodeId, d: &DataPacket) {
        let rec = TraceRecord::new(d.created_at, n, TraceEvent::Generate)
            .packet(d.packet_id, d.class())
            .with("flow", d.flow_id)
            .with("src", d.src)
            .with("dst", d.dst)
            .with("size", d.size);
        self.emit(rec);
    }

    fn traffic_tick(&mut self, flow: usize) {
        let now = self.now();
        let f = self.sim.flows[flow].clone();
        if now >= f.stop_at {
            return;
        }
        let id = self.sim.next_packet_id;
        self.sim.next_packet_id += 1;
        self.outcome.packets_generated += 1;
        let d = DataPacket::new(id, f.flow_id, f.src, f.dst, f.class, f.packet_size, now);
        self.trace_generate(f.src, &d);
        self.originate(f.src, d);
        if let Some(next) = f.next_tick(now) {
            self.queue.schedule(next, EventKind::TrafficTick { flow });
        }
    }

    /// A source hands a packet to the network: straight into the buffer if
    /// a route exists, otherwise into the pending queue behind a discovery.
    fn originate(&mut self, n: NodeId, d: DataPacket) {
        let now = self.now();
        if self.node(n).aodv.route_to(d.dst, now).is_some() {
            self.enqueue_data(n, d);
            return;
        }
        let dst = d.dst;
        if self.node(n).pending.len() >= PENDING_CAPACITY {
            let rec = TraceRecord::new(now, n, TraceEvent::DropSource)
                .packet(d.packet_id, d.class())
                .with("reason", "pending");
            self.emit(rec);
        } else {
            self.node(n).pending.push_back(d);
        }
        self.start_discovery(n, dst);
    }

    fn start_discovery(&mut self, n: NodeId, dst: NodeId) {
        let now = self.now();
        let node = self.node(n);
        if let Some(rreq) = node.aodv.originate_rreq(dst, now) {
            let wait = node.aodv.discovery_wait(0);
            let bid = rreq.broadcast_id;
            self.enqueue_control(n, Packet::Rreq(rreq));
            self.queue.schedule(
                now + wait,
                EventKind::DiscoveryTimeout { node: n, destination: dst, broadcast_id: bid },
            );
        }
    }

    fn discovery_timeout(&mut self, n: NodeId, dst: NodeId, bid: u32) {
        let now = self.now();
        match self.node(n).aodv.discovery_timeout(dst, bid, now) {
            DiscoveryTimeout::Nothing => {}
            DiscoveryTimeout::Retry(rreq) => {
                let node = self.node(n);
                let attempt = node.aodv.discovery(dst).map_or(0, |d| d.attempt);
                let wait = node.aodv.discovery_wait(attempt);
                let bid = rreq.broadcast_id;
                self.enqueue_control(n, Packet::Rreq(rreq));
                self.queue.schedule(
                    now + wait,
                    EventKind::DiscoveryTimeout { node: n, destination: dst, broadcast_id: bid },
                );
            }
            DiscoveryTimeout::GiveUp => {
                let node = self.node(n);
                let (dropped, kept): (Vec<_>, Vec<_>) = node.pending.drain(..).partition(|d| d.dst == dst);
                node.pending = kept.into();
                for d in dropped {
                    let rec = TraceRecord::new(now, n, TraceEvent::DropRoute)
                        .packet(d.packet_id, d.class())
                        .with("reason", "discovery");
                    self.emit(rec);
                }
            }
        }
    }

    fn flush_pending(&mut self, n: NodeId, dst: NodeId) {
        let node = self.node(n);
        let (ready, kept): (Vec<_>, Vec<_>) = node.pending.drain(..).partition(|d| d.dst == dst);
        node.pending = kept.into();
        for d in ready {
            self.enqueue_data(n, d);
        }
    }

    fn enqueue_data(&mut self, n: NodeId, d: DataPacket) {
        let now = self.now();
        let (id, class, hops, at_source) = (d.packet_id, d.class(), d.hops, d.src == n);
        match self.node(n).buffer.enqueue(Packet::Data(d), now) {
            Admission::Accepted { .. } => {
                self.emit(TraceRecord::new(now, n, TraceEvent::Enqueue).packet(id, class).with("hop", hops));
                self.kick(n, class);
            }
            Admission::Dropped(_) => {
                let event = if at_source { TraceEvent::DropSource } else { TraceEvent::DropTail };
                self.emit(TraceRecord::new(now, n, event).packet(id, class).with("reason", "full"));
            }
        }
    }

    fn enqueue_control(&mut self, n: NodeId, p: Packet) {
        let now = self.now();
        match self.node(n).buffer.enqueue(p, now) {
            Admission::Accepted { evicted } => {
                if let Some(d) = evicted {
                    let event = if d.src == n { TraceEvent::DropSource } else { TraceEvent::DropTail };
                    let rec = TraceRecord::new(now, n, event).packet(d.packet_id, d.class()).with("reason", "evicted");
                    self.emit(rec);
                }
                self.kick(n, TrafficClass::Control);
            }
            Admission::Dropped(_) => {
                let rec = TraceRecord::new(now, n, TraceEvent::DropTail).class(TrafficClass::Control).with("reason", "full");
                self.emit(rec);
            }
        }
    }

    /// Makes sure a transmit opportunity is pending for a node that has
    /// something to send. `arrived` is the class that just joined the buffer.
    fn kick(&mut self, n: NodeId, arrived: TrafficClass) {
        let now = self.now();
        let tx = self.sim.radio.tx_time;
        let node = self.node(n);
        if node.buffer.is_empty() {
            return;
        }
        let origin = match &node.discipline {
            Discipline::Slotted(cfg) => cfg.slot_phase_origin,
            Discipline::Fifo => SimTime::ZERO,
        };
        let earliest = now.ceil_to_grid(origin, tx).max(node.busy_until);
        let reschedule = match node.next_opportunity {
            None => true,
            Some(t) if earliest < t => match &node.discipline {
                // A node idling until its next slot only wakes early for
                // something it may send right away.
                Discipline::Slotted(cfg) if cfg.strict_slots => {
                    arrived == TrafficClass::Control
                        || (arrived == TrafficClass::RealTime) == (current_slot(earliest, cfg) == Slot::RealTime)
                }
                _ => true,
            },
            Some(_) => false,
        };
        if reschedule {
            node.next_opportunity = Some(earliest);
            self.queue.schedule(earliest, EventKind::TransmitOpportunity { node: n });
        }
    }

    fn opportunity(&mut self, n: NodeId) {
        let now = self.now();
        if self.node(n).next_opportunity != Some(now) {
            return;
        }
        self.node(n).next_opportunity = None;
        loop {
            let node = self.node(n);
            let discipline = node.discipline;
            let Some(packet) = discipline.next_packet(&mut node.buffer, now) else {
                if !node.buffer.is_empty() {
                    if let Discipline::Slotted(cfg) = discipline {
                        let at = cfg.next_slot_boundary(now);
                        node.next_opportunity = Some(at);
                        self.queue.schedule(at, EventKind::TransmitOpportunity { node: n });
                    }
                }
                return;
            };
            if let Packet::Data(d) = &packet {
                let wait = now - d.current_hop_enqueued_at;
                let rec = TraceRecord::new(now, n, TraceEvent::Dequeue).packet(d.packet_id, d.class()).with("wait", wait);
                self.emit(rec);
            }
            if self.transmit(n, packet) {
                break;
            }
        }
        let tx = self.sim.radio.tx_time;
        let node = self.node(n);
        node.busy_until = now + tx;
        if !node.buffer.is_empty() {
            node.next_opportunity = Some(now + tx);
            self.queue.schedule(now + tx, EventKind::TransmitOpportunity { node: n });
        }
    }

    fn reachable(&mut self, a: NodeId, b: NodeId) -> bool {
        let pa = self.position(a);
        let pb = self.position(b);
        in_range(pa, pb, &self.sim.radio)
    }

    /// Puts `packet` on the air. Returns whether the channel was used, i.e.
    /// the sender is busy for the next `tx_time`.
    fn transmit(&mut self, n: NodeId, packet: Packet) -> bool {
        let now = self.now();
        let arrive = now + self.sim.radio.tx_time;
        match packet {
            Packet::Data(d) => {
                let Some(next_hop) = self.node(n).aodv.route_to(d.dst, now).map(|r| r.next_hop) else {
                    self.no_route(n, d);
                    return false;
                };
                if self.reachable(n, next_hop) {
                    self.node(n).aodv.touch(d.dst, now);
                    let rec = TraceRecord::new(now, n, TraceEvent::Send)
                        .packet(d.packet_id, d.class())
                        .with("to", next_hop)
                        .with("kind", "DATA");
                    self.emit(rec);
                    self.queue
                        .schedule(arrive, EventKind::PacketArrival { to: next_hop, from: n, packet: Packet::Data(d) });
                } else {
                    let rec = TraceRecord::new(now, n, TraceEvent::LinkBreak)
                        .packet(d.packet_id, d.class())
                        .with("neighbor", next_hop);
                    self.emit(rec);
                    self.link_break(n, next_hop);
                }
                true
            }
            Packet::Rrep { msg, next_hop } => {
                if self.reachable(n, next_hop) {
                    let rec = TraceRecord::new(now, n, TraceEvent::Send)
                        .class(TrafficClass::Control)
                        .with("to", next_hop)
                        .with("kind", "RREP");
                    self.emit(rec);
                    let packet = Packet::Rrep { msg, next_hop };
                    self.queue.schedule(arrive, EventKind::PacketArrival { to: next_hop, from: n, packet });
                } else {
                    let rec = TraceRecord::new(now, n, TraceEvent::LinkBreak)
                        .class(TrafficClass::Control)
                        .with("neighbor", next_hop)
                        .with("kind", "RREP");
                    self.emit(rec);
                    self.link_break(n, next_hop);
                }
                true
            }
            broadcast @ (Packet::Rreq(_) | Packet::Rerr(_)) => {
                let rec = TraceRecord::new(now, n, TraceEvent::Send).class(TrafficClass::Control).with("to", "*");
                let rec = match &broadcast {
                    Packet::Rreq(r) => rec.with("kind", "RREQ").with("origin", r.origin).with("bid", r.broadcast_id),
                    _ => rec.with("kind", "RERR"),
                };
                self.emit(rec);
                for i in 0..self.sim.nodes.len() {
                    let m = NodeId(i as u32);
                    if m != n && self.reachable(n, m) {
                        let packet = broadcast.clone();
                        self.queue.schedule(arrive, EventKind::PacketArrival { to: m, from: n, packet });
                    }
                }
                true
            }
        }
    }

    /// A data packet reached the head of the buffer with no usable route.
    /// The source parks it behind a new discovery; a relay drops it and
    /// tells upstream nodes.
    fn no_route(&mut self, n: NodeId, d: DataPacket) {
        let now = self.now();
        if d.src == n {
            self.originate(n, d);
            return;
        }
        let rec = TraceRecord::new(now, n, TraceEvent::DropRoute).packet(d.packet_id, d.class()).with("reason", "noroute");
        self.emit(rec);
        if let Some(seq) = self.node(n).aodv.routes.get(d.dst).map(|e| e.dest_seq) {
            self.enqueue_control(n, Packet::Rerr(RerrMessage { unreachable: vec![(d.dst, seq)] }));
        }
    }

    fn link_break(&mut self, n: NodeId, dead: NodeId) {
        if let Some(rerr) = self.node(n).aodv.handle_link_break(dead) {
            self.enqueue_control(n, Packet::Rerr(rerr));
        }
    }

    fn arrival(&mut self, to: NodeId, from: NodeId, packet: Packet) {
        let now = self.now();
        match packet {
            Packet::Data(mut d) => {
                d.hops += 1;
                self.node(to).aodv.touch(d.src, now);
                if d.dst == to {
                    let rec = TraceRecord::new(now, to, TraceEvent::Deliver)
                        .packet(d.packet_id, d.class())
                        .with("created", d.created_at)
                        .with("hops", d.hops);
                    self.emit(rec);
                    return;
                }
                let aodv = &mut self.node(to).aodv;
                if aodv.route_to(d.dst, now).is_some() {
                    aodv.routes.add_precursor(d.dst, from);
                    self.enqueue_data(to, d);
                } else {
                    self.no_route(to, d);
                }
            }
            Packet::Rreq(rreq) => {
                let node = self.node(to);
                let counts = count_classes(&node.buffer);
                let ratio = compute_node_ratio(&node.buffer);
                let action = node.aodv.process_rreq(&rreq, from, now, ratio);
                match action {
                    RreqAction::Forward(fwd) => {
                        if self.sim.mode == ProtocolMode::QosImproved {
                            let rec = TraceRecord::new(now, to, TraceEvent::RatioSample)
                                .with("n_be", counts.n_be)
                                .with("n_other", counts.n_other)
                                .with("ratio", ratio);
                            self.emit(rec);
                        }
                        let rec = TraceRecord::new(now, to, TraceEvent::RreqForward)
                            .class(TrafficClass::Control)
                            .with("origin", fwd.origin)
                            .with("bid", fwd.broadcast_id)
                            .with("prev", from)
                            .with("reserved", fwd.reserved_load)
                            .with("hops", fwd.hop_count);
                        self.emit(rec);
                        self.enqueue_control(to, Packet::Rreq(fwd));
                    }
                    RreqAction::Collect { opened: true } => {
                        let key = (rreq.origin, rreq.broadcast_id);
                        let window = self.node(to).aodv.config.collection_window;
                        if window == SimTime::ZERO {
                            self.close_window(to, key);
                        } else {
                            self.queue.schedule(now + window, EventKind::WindowClose { node: to, key });
                        }
                    }
                    RreqAction::Collect { opened: false } | RreqAction::Ignore => {}
                    RreqAction::Reply { rrep, next_hop } => {
                        let rec = TraceRecord::new(now, to, TraceEvent::RrepSend)
                            .class(TrafficClass::Control)
                            .with("origin", rrep.origin)
                            .with("bid", rreq.broadcast_id)
                            .with("next", next_hop)
                            .with("cached", 1);
                        self.emit(rec);
                        self.enqueue_control(to, Packet::Rrep { msg: rrep, next_hop });
                    }
                }
            }
            Packet::Rrep { msg, .. } => match self.node(to).aodv.process_rrep(&msg, from, now) {
                RrepAction::Forward { rrep, next_hop } => {
                    self.enqueue_control(to, Packet::Rrep { msg: rrep, next_hop });
                }
                RrepAction::RouteReady { destination } => self.flush_pending(to, destination),
                RrepAction::NoReverseRoute => {
                    let rec = TraceRecord::new(now, to, TraceEvent::DropRoute)
                        .class(TrafficClass::Control)
                        .with("kind", "RREP")
                        .with("origin", msg.origin);
                    self.emit(rec);
                }
            },
            Packet::Rerr(rerr) => {
                if let Some(next) = self.node(to).aodv.process_rerr(&rerr, from) {
                    self.enqueue_control(to, Packet::Rerr(next));
                }
            }
        }
    }

    fn close_window(&mut self, n: NodeId, key: (NodeId, u32)) {
        let now = self.now();
        let Some(reply) = self.node(n).aodv.close_collection_window(key, now) else {
            return;
        };
        let w = &reply.winner.rreq;
        let rec = TraceRecord::new(now, n, TraceEvent::RrepSend)
            .class(TrafficClass::Control)
            .with("origin", key.0)
            .with("bid", key.1)
            .with("next", reply.next_hop)
            .with("candidates", reply.candidates)
            .with("reserved", w.reserved_load)
            .with("hops", w.hop_count);
        self.emit(rec);
        self.enqueue_control(n, Packet::Rrep { msg: reply.rrep, next_hop: reply.next_hop });
    }
}
