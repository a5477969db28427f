//! AODV per-node protocol state.
//!
//! The node logic here is a pure state machine: it consumes messages and
//! returns what should be sent, leaving transmission and timers to the
//! simulation engine. In [`ProtocolMode::QosImproved`] every relay adds its
//! best-effort load ratio to the RREQ, and the destination waits for a
//! collection window before answering the candidate with the lowest average
//! load per hop.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::packet::{NodeId, RerrMessage, RrepMessage, RreqMessage};
use crate::time::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ProtocolMode {
    #[serde(rename = "baseline")]
    Baseline,
    #[serde(rename = "qos")]
    QosImproved,
}

impl ProtocolMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ProtocolMode::Baseline => "baseline",
            ProtocolMode::QosImproved => "qos",
        }
    }
}

impl fmt::Display for ProtocolMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ProtocolMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "baseline" => Ok(ProtocolMode::Baseline),
            "qos" => Ok(ProtocolMode::QosImproved),
            other => Err(format!("unknown protocol mode `{other}` (expected baseline or qos)")),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ProtocolError {
    #[error("RREQ reached its destination with hop count 0")]
    ZeroHopCount,
    #[error("no RREQ candidates to select from")]
    NoCandidates,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AodvConfig {
    pub mode: ProtocolMode,
    /// How long a destination gathers RREQ copies before replying. Zero
    /// means reply to the first copy.
    pub collection_window: SimTime,
    pub active_route_timeout: SimTime,
    /// Lifetime advertised in RREPs originated by a destination.
    pub my_route_timeout: SimTime,
    pub seen_lifetime: SimTime,
    pub discovery_timeout: SimTime,
    pub rreq_retries: u32,
}

impl AodvConfig {
    pub fn new(mode: ProtocolMode, collection_window: SimTime) -> Self {
        let window = match mode {
            ProtocolMode::Baseline => SimTime::ZERO,
            ProtocolMode::QosImproved => collection_window,
        };
        AodvConfig {
            mode,
            collection_window: window,
            active_route_timeout: SimTime::from_millis(3000),
            my_route_timeout: SimTime::from_millis(6000),
            seen_lifetime: SimTime::from_millis(6000),
            discovery_timeout: SimTime::from_millis(100),
            rreq_retries: 2,
        }
    }

    fn accumulates_load(&self) -> bool {
        self.mode == ProtocolMode::QosImproved
    }

    fn intermediate_replies(&self) -> bool {
        self.mode == ProtocolMode::Baseline
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RouteEntry {
    pub destination: NodeId,
    pub next_hop: NodeId,
    pub hop_count: u32,
    pub dest_seq: u32,
    pub expires_at: SimTime,
    pub valid: bool,
    /// Upstream neighbours that forward traffic for this destination through us.
    pub precursors: BTreeSet<NodeId>,
}

impl RouteEntry {
    pub fn is_usable(&self, now: SimTime) -> bool {
        self.valid && self.expires_at > now
    }
}

#[derive(Debug, Clone, Default)]
pub struct RoutingTable {
    entries: BTreeMap<NodeId, RouteEntry>,
}

impl RoutingTable {
    pub fn get(&self, destination: NodeId) -> Option<&RouteEntry> {
        self.entries.get(&destination)
    }

    pub fn lookup(&self, destination: NodeId, now: SimTime) -> Option<&RouteEntry> {
        self.entries.get(&destination).filter(|e| e.is_usable(now))
    }

    /// Installs or replaces a route following the usual freshness rule:
    /// a newer sequence number wins, an equal one wins only with fewer hops,
    /// and anything beats an unusable entry. Returns whether the table changed.
    pub fn offer(
        &mut self,
        destination: NodeId,
        next_hop: NodeId,
        hop_count: u32,
        dest_seq: u32,
        expires_at: SimTime,
        now: SimTime,
    ) -> bool {
        let replace = match self.entries.get(&destination) {
            None => true,
            Some(e) if !e.is_usable(now) => dest_seq >= e.dest_seq || !e.valid,
            Some(e) => dest_seq > e.dest_seq || (dest_seq == e.dest_seq && hop_count < e.hop_count),
        };
        if replace {
            let precursors = self.entries.remove(&destination).map(|e| e.precursors).unwrap_or_default();
            self.entries.insert(
                destination,
                RouteEntry { destination, next_hop, hop_count, dest_seq, expires_at, valid: true, precursors },
            );
        } else if let Some(e) = self.entries.get_mut(&destination) {
            if e.next_hop == next_hop && e.hop_count == hop_count && e.dest_seq == dest_seq {
                e.expires_at = e.expires_at.max(expires_at);
            }
        }
        replace
    }

    /// Unconditionally points `destination` at `next_hop`.
    pub fn force(&mut self, destination: NodeId, next_hop: NodeId, hop_count: u32, dest_seq: u32, expires_at: SimTime) {
        let precursors = self.entries.remove(&destination).map(|e| e.precursors).unwrap_or_default();
        self.entries.insert(
            destination,
            RouteEntry { destination, next_hop, hop_count, dest_seq, expires_at, valid: true, precursors },
        );
    }

    pub fn refresh(&mut self, destination: NodeId, until: SimTime) {
        if let Some(e) = self.entries.get_mut(&destination) {
            if e.valid {
                e.expires_at = e.expires_at.max(until);
            }
        }
    }

    pub fn add_precursor(&mut self, destination: NodeId, precursor: NodeId) {
        if let Some(e) = self.entries.get_mut(&destination) {
            e.precursors.insert(precursor);
        }
    }

    /// Invalidates every valid route for which `pred` holds. Returns the
    /// affected destinations with bumped sequence numbers, and whether any of
    /// them had precursors.
    fn invalidate_where<F>(&mut self, mut pred: F) -> (Vec<(NodeId, u32)>, bool)
    where
        F: FnMut(&RouteEntry) -> bool,
    {
        let mut affected = Vec::new();
        let mut has_precursors = false;
        for e in self.entries.values_mut() {
            if e.valid && pred(e) {
                e.valid = false;
                e.dest_seq = e.dest_seq.wrapping_add(1);
                has_precursors |= !e.precursors.is_empty();
                affected.push((e.destination, e.dest_seq));
            }
        }
        (affected, has_precursors)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Duplicate suppression for flooded RREQs, keyed by (origin, broadcast id).
#[derive(Debug, Clone, Default)]
pub struct SeenCache {
    entries: HashMap<(NodeId, u32), SimTime>,
}

impl SeenCache {
    pub fn contains(&self, key: (NodeId, u32), now: SimTime) -> bool {
        self.entries.get(&key).is_some_and(|&exp| exp > now)
    }

    /// Returns `true` if the key was not already cached.
    pub fn insert(&mut self, key: (NodeId, u32), now: SimTime, lifetime: SimTime) -> bool {
        let fresh = !self.contains(key, now);
        self.entries.insert(key, now + lifetime);
        if self.entries.len() > 4096 {
            self.entries.retain(|_, exp| *exp > now);
        }
        fresh
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RreqCandidate {
    pub rreq: RreqMessage,
    pub prev_hop: NodeId,
    pub arrived_at: SimTime,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollectionWindow {
    pub key: (NodeId, u32),
    pub opened_at: SimTime,
    pub duration: SimTime,
    pub candidates: Vec<RreqCandidate>,
}

impl CollectionWindow {
    pub fn closes_at(&self) -> SimTime {
        self.opened_at + self.duration
    }
}

/// What a node does with an incoming RREQ.
#[derive(Debug, Clone, PartialEq)]
pub enum RreqAction {
    Forward(RreqMessage),
    /// The node is the destination; the copy joined a collection window.
    Collect { opened: bool },
    /// Baseline only: an intermediate node answers from its own table.
    Reply { rrep: RrepMessage, next_hop: NodeId },
    Ignore,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RrepAction {
    Forward { rrep: RrepMessage, next_hop: NodeId },
    /// Reached the originator; a route to `destination` is now usable.
    RouteReady { destination: NodeId },
    NoReverseRoute,
}

/// RREP produced when a destination closes its window.
#[derive(Debug, Clone, PartialEq)]
pub struct Reply {
    pub rrep: RrepMessage,
    pub next_hop: NodeId,
    pub winner: RreqCandidate,
    pub candidates: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Discovery {
    pub broadcast_id: u32,
    pub attempt: u32,
}

/// Result of a discovery timer firing.
#[derive(Debug, Clone, PartialEq)]
pub enum DiscoveryTimeout {
    /// Stale timer or the route appeared in the meantime.
    Nothing,
    Retry(RreqMessage),
    GiveUp,
}

pub fn accumulate_load(rreq: &RreqMessage, node_ratio: f64) -> RreqMessage {
    debug_assert!(node_ratio >= 0.0);
    RreqMessage { reserved_load: rreq.reserved_load + node_ratio, hop_count: rreq.hop_count + 1, ..rreq.clone() }
}

pub fn average_load(rreq: &RreqMessage) -> Result<f64, ProtocolError> {
    if rreq.hop_count == 0 {
        return Err(ProtocolError::ZeroHopCount);
    }
    Ok(rreq.reserved_load / rreq.hop_count as f64)
}

/// Index of the candidate with the lowest average load; ties go to fewer
/// hops, then to the earlier arrival, then to the earlier position.
pub fn select_best_rreq(candidates: &[RreqCandidate]) -> Result<usize, ProtocolError> {
    let mut best: Option<(usize, f64)> = None;
    for (i, c) in candidates.iter().enumerate() {
        let avg = average_load(&c.rreq)?;
        let better = match best {
            None => true,
            Some((j, best_avg)) => {
                let b = &candidates[j];
                avg.total_cmp(&best_avg)
                    .then(c.rreq.hop_count.cmp(&b.rreq.hop_count))
                    .then(c.arrived_at.cmp(&b.arrived_at))
                    .is_lt()
            }
        };
        if better {
            best = Some((i, avg));
        }
    }
    best.map(|(i, _)| i).ok_or(ProtocolError::NoCandidates)
}

#[derive(Debug, Clone)]
pub struct AodvNode {
    pub id: NodeId,
    pub config: AodvConfig,
    pub seq: u32,
    last_broadcast_id: u32,
    pub routes: RoutingTable,
    pub seen: SeenCache,
    windows: BTreeMap<(NodeId, u32), CollectionWindow>,
    discoveries: BTreeMap<NodeId, Discovery>,
}

impl AodvNode {
    pub fn new(id: NodeId, config: AodvConfig) -> Self {
        AodvNode {
            id,
            config,
            seq: 0,
            last_broadcast_id: 0,
            routes: RoutingTable::default(),
            seen: SeenCache::default(),
            windows: BTreeMap::new(),
            discoveries: BTreeMap::new(),
        }
    }

    pub fn route_to(&self, destination: NodeId, now: SimTime) -> Option<&RouteEntry> {
        self.routes.lookup(destination, now)
    }

    pub fn discovery(&self, destination: NodeId) -> Option<Discovery> {
        self.discoveries.get(&destination).copied()
    }

    fn build_rreq(&mut self, destination: NodeId, now: SimTime) -> RreqMessage {
        self.seq = self.seq.wrapping_add(1);
        self.last_broadcast_id += 1;
        let broadcast_id = self.last_broadcast_id;
        self.seen.insert((self.id, broadcast_id), now, self.config.seen_lifetime);
        RreqMessage {
            origin: self.id,
            origin_seq: self.seq,
            broadcast_id,
            destination,
            dest_seq_known: self.routes.get(destination).map(|e| e.dest_seq),
            hop_count: 0,
            reserved_load: 0.0,
            issued_at: now,
        }
    }

    /// Starts a route discovery unless a usable route exists or one is
    /// already in progress.
    pub fn originate_rreq(&mut self, destination: NodeId, now: SimTime) -> Option<RreqMessage> {
        if self.routes.lookup(destination, now).is_some() || self.discoveries.contains_key(&destination) {
            return None;
        }
        let rreq = self.build_rreq(destination, now);
        self.discoveries.insert(destination, Discovery { broadcast_id: rreq.broadcast_id, attempt: 0 });
        Some(rreq)
    }

    /// Handles the expiry of the discovery started with `broadcast_id`.
    pub fn discovery_timeout(&mut self, destination: NodeId, broadcast_id: u32, now: SimTime) -> DiscoveryTimeout {
        let Some(d) = self.discoveries.get(&destination).copied() else {
            return DiscoveryTimeout::Nothing;
        };
        if d.broadcast_id != broadcast_id {
            return DiscoveryTimeout::Nothing;
        }
        if self.routes.lookup(destination, now).is_some() {
            self.discoveries.remove(&destination);
            return DiscoveryTimeout::Nothing;
        }
        if d.attempt >= self.config.rreq_retries {
            self.discoveries.remove(&destination);
            return DiscoveryTimeout::GiveUp;
        }
        let rreq = self.build_rreq(destination, now);
        self.discoveries
            .insert(destination, Discovery { broadcast_id: rreq.broadcast_id, attempt: d.attempt + 1 });
        DiscoveryTimeout::Retry(rreq)
    }

    /// Timeout for the given retry attempt (binary exponential backoff).
    pub fn discovery_wait(&self, attempt: u32) -> SimTime {
        SimTime::from_nanos(self.config.discovery_timeout.as_nanos() << attempt.min(16))
    }

    /// `node_ratio` is this node's buffer ratio sampled on receipt; it is
    /// only used when forwarding in QoS mode.
    pub fn process_rreq(&mut self, rreq: &RreqMessage, prev_hop: NodeId, now: SimTime, node_ratio: f64) -> RreqAction {
        if rreq.origin == self.id {
            return RreqAction::Ignore;
        }
        let key = (rreq.origin, rreq.broadcast_id);
        let reverse_expiry = now + self.config.active_route_timeout;

        if rreq.destination == self.id {
            // Receipt at the destination counts the final link.
            let received = RreqMessage { hop_count: rreq.hop_count + 1, ..rreq.clone() };
            let candidate = RreqCandidate { rreq: received, prev_hop, arrived_at: now };
            if let Some(w) = self.windows.get_mut(&key) {
                w.candidates.push(candidate);
                return RreqAction::Collect { opened: false };
            }
            if !self.seen.insert(key, now, self.config.seen_lifetime) {
                return RreqAction::Ignore;
            }
            self.routes.offer(rreq.origin, prev_hop, rreq.hop_count + 1, rreq.origin_seq, reverse_expiry, now);
            self.windows.insert(
                key,
                CollectionWindow {
                    key,
                    opened_at: now,
                    duration: self.config.collection_window,
                    candidates: vec![candidate],
                },
            );
            return RreqAction::Collect { opened: true };
        }

        if !self.seen.insert(key, now, self.config.seen_lifetime) {
            return RreqAction::Ignore;
        }
        self.routes.offer(rreq.origin, prev_hop, rreq.hop_count + 1, rreq.origin_seq, reverse_expiry, now);

        if self.config.intermediate_replies() {
            if let Some(route) = self.routes.lookup(rreq.destination, now) {
                let fresh_enough = rreq.dest_seq_known.is_none_or(|known| route.dest_seq >= known);
                if fresh_enough && route.next_hop != prev_hop {
                    let rrep = RrepMessage {
                        destination: rreq.destination,
                        dest_seq: route.dest_seq,
                        origin: rreq.origin,
                        hop_count: route.hop_count,
                        lifetime: route.expires_at.saturating_sub(now),
                    };
                    let next_hop = route.next_hop;
                    self.routes.add_precursor(rreq.destination, prev_hop);
                    self.routes.add_precursor(rreq.origin, next_hop);
                    return RreqAction::Reply { rrep, next_hop: prev_hop };
                }
            }
        }

        let ratio = if self.config.accumulates_load() { node_ratio } else { 0.0 };
        RreqAction::Forward(accumulate_load(rreq, ratio))
    }

    pub fn open_window(&self, key: (NodeId, u32)) -> Option<&CollectionWindow> {
        self.windows.get(&key)
    }

    /// Closes a collection window and answers the least-loaded candidate.
    pub fn close_collection_window(&mut self, key: (NodeId, u32), now: SimTime) -> Option<Reply> {
        let window = self.windows.remove(&key)?;
        let winner_idx = select_best_rreq(&window.candidates).ok()?;
        let winner = window.candidates[winner_idx].clone();
        let origin = winner.rreq.origin;
        self.routes.force(
            origin,
            winner.prev_hop,
            winner.rreq.hop_count,
            winner.rreq.origin_seq,
            now + self.config.active_route_timeout,
        );
        self.seq = self.seq.wrapping_add(1).max(winner.rreq.dest_seq_known.unwrap_or(0));
        let rrep = RrepMessage {
            destination: self.id,
            dest_seq: self.seq,
            origin,
            hop_count: 0,
            lifetime: self.config.my_route_timeout,
        };
        Some(Reply { rrep, next_hop: winner.prev_hop, winner, candidates: window.candidates.len() })
    }

    pub fn process_rrep(&mut self, rrep: &RrepMessage, prev_hop: NodeId, now: SimTime) -> RrepAction {
        let hops = rrep.hop_count + 1;
        self.routes.offer(rrep.destination, prev_hop, hops, rrep.dest_seq, now + rrep.lifetime, now);

        if rrep.origin == self.id {
            self.discoveries.remove(&rrep.destination);
            return RrepAction::RouteReady { destination: rrep.destination };
        }
        let Some(reverse) = self.routes.lookup(rrep.origin, now) else {
            return RrepAction::NoReverseRoute;
        };
        let next_hop = reverse.next_hop;
        self.routes.add_precursor(rrep.destination, next_hop);
        self.routes.add_precursor(rrep.origin, prev_hop);
        self.routes.refresh(rrep.origin, now + self.config.active_route_timeout);
        RrepAction::Forward { rrep: RrepMessage { hop_count: hops, ..rrep.clone() }, next_hop }
    }

    /// A unicast to `dead_neighbor` failed. Every route through it becomes
    /// invalid; a RERR is produced when upstream nodes depend on any of them.
    pub fn handle_link_break(&mut self, dead_neighbor: NodeId) -> Option<RerrMessage> {
        let (affected, has_precursors) = self.routes.invalidate_where(|e| e.next_hop == dead_neighbor);
        (has_precursors && !affected.is_empty()).then_some(RerrMessage { unreachable: affected })
    }

    /// Applies a RERR heard from `from`, returning one to propagate if needed.
    pub fn process_rerr(&mut self, rerr: &RerrMessage, from: NodeId) -> Option<RerrMessage> {
        let listed: BTreeSet<NodeId> = rerr.unreachable.iter().map(|(d, _)| *d).collect();
        let (affected, has_precursors) =
            self.routes.invalidate_where(|e| e.next_hop == from && listed.contains(&e.destination));
        (has_precursors && !affected.is_empty()).then_some(RerrMessage { unreachable: affected })
    }

    /// Marks a route as in use, extending its lifetime.
    pub fn touch(&mut self, destination: NodeId, now: SimTime) {
        self.routes.refresh(destination, now + self.config.active_route_timeout);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn n(i: u32) -> NodeId {
        NodeId(i)
    }

    fn rreq(reserved: f64, hops: u32) -> RreqMessage {
        RreqMessage {
            origin: n(0),
            origin_seq: 1,
            broadcast_id: 1,
            destination: n(9),
            dest_seq_known: None,
            hop_count: hops,
            reserved_load: reserved,
            issued_at: SimTime::ZERO,
        }
    }

    fn cand(reserved: f64, hops: u32, prev: u32, at_ms: u64) -> RreqCandidate {
        RreqCandidate { rreq: rreq(reserved, hops), prev_hop: n(prev), arrived_at: SimTime::from_millis(at_ms) }
    }

    fn qos_node(id: u32) -> AodvNode {
        AodvNode::new(n(id), AodvConfig::new(ProtocolMode::QosImproved, SimTime::from_millis(10)))
    }

    fn baseline_node(id: u32) -> AodvNode {
        AodvNode::new(n(id), AodvConfig::new(ProtocolMode::Baseline, SimTime::from_millis(10)))
    }

    #[test]
    fn origination_zero_state_and_monotone_broadcast_ids() {
        let mut node = qos_node(0);
        let first = node.originate_rreq(n(5), SimTime::ZERO).unwrap();
        assert_eq!((first.broadcast_id, first.hop_count, first.reserved_load), (1, 0, 0.0));
        // Still discovering: no second flood.
        assert!(node.originate_rreq(n(5), SimTime::ZERO).is_none());
        let second = node.originate_rreq(n(6), SimTime::ZERO).unwrap();
        assert_eq!(second.broadcast_id, 2);
        assert!(second.origin_seq > first.origin_seq);
    }

    #[test]
    fn no_rreq_when_route_is_valid() {
        let mut node = qos_node(0);
        node.routes.offer(n(5), n(1), 2, 3, SimTime::from_millis(5000), SimTime::ZERO);
        assert!(node.originate_rreq(n(5), SimTime::ZERO).is_none());
    }

    #[test]
    fn accumulate_examples() {
        let a = accumulate_load(&rreq(0.0, 0), 0.667);
        assert_eq!((a.reserved_load, a.hop_count), (0.667, 1));
        let b = accumulate_load(&a, 0.0);
        assert_eq!((b.reserved_load, b.hop_count), (0.667, 2));
        let c = accumulate_load(&rreq(1.0, 2), 1.0);
        assert_eq!((c.reserved_load, c.hop_count), (2.0, 3));
    }

    #[test]
    fn average_examples() {
        assert_eq!(average_load(&rreq(2.0, 2)), Ok(1.0));
        assert_eq!(average_load(&rreq(0.0, 3)), Ok(0.0));
        assert_eq!(average_load(&rreq(1.5, 2)), Ok(0.75));
        assert_eq!(average_load(&rreq(0.8, 2)), Ok(0.4));
        assert_eq!(average_load(&rreq(1.0, 0)), Err(ProtocolError::ZeroHopCount));
    }

    #[test]
    fn selection_examples() {
        let two = [cand(1.5, 2, 1, 1), cand(0.8, 2, 2, 2)];
        assert_eq!(select_best_rreq(&two), Ok(1));
        assert_eq!(select_best_rreq(&two[..1]), Ok(0));
        let tie = [cand(1.5, 3, 1, 1), cand(1.0, 2, 2, 2)];
        assert_eq!(select_best_rreq(&tie), Ok(1));
        let same = [cand(1.0, 2, 1, 3), cand(1.0, 2, 2, 2)];
        assert_eq!(select_best_rreq(&same), Ok(1));
        assert_eq!(select_best_rreq(&[]), Err(ProtocolError::NoCandidates));
    }

    #[test]
    fn duplicate_rreq_is_ignored() {
        let mut node = qos_node(3);
        let msg = rreq(0.0, 1);
        assert!(matches!(node.process_rreq(&msg, n(1), SimTime::ZERO, 0.0), RreqAction::Forward(_)));
        assert_eq!(node.process_rreq(&msg, n(2), SimTime::ZERO, 0.0), RreqAction::Ignore);
    }

    #[test]
    fn relay_forwards_with_its_ratio_and_installs_reverse_route() {
        let mut node = qos_node(3);
        match node.process_rreq(&rreq(0.25, 1), n(1), SimTime::ZERO, 0.5) {
            RreqAction::Forward(f) => {
                assert_eq!(f.reserved_load, 0.75);
                assert_eq!(f.hop_count, 2);
            }
            other => panic!("{other:?}"),
        }
        let back = node.route_to(n(0), SimTime::ZERO).unwrap();
        assert_eq!((back.next_hop, back.hop_count), (n(1), 2));
    }

    #[test]
    fn baseline_relay_does_not_accumulate() {
        let mut node = baseline_node(3);
        match node.process_rreq(&rreq(0.0, 0), n(0), SimTime::ZERO, 5.0) {
            RreqAction::Forward(f) => assert_eq!((f.reserved_load, f.hop_count), (0.0, 1)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn origin_ignores_its_own_flood() {
        let mut node = qos_node(0);
        let msg = node.originate_rreq(n(9), SimTime::ZERO).unwrap();
        assert_eq!(node.process_rreq(&msg, n(1), SimTime::ZERO, 0.0), RreqAction::Ignore);
    }

    #[test]
    fn destination_collects_copies_and_replies_to_least_loaded() {
        let mut dest = qos_node(9);
        let t1 = SimTime::from_millis(2);
        assert_eq!(dest.process_rreq(&rreq(1.5, 1), n(1), t1, 0.0), RreqAction::Collect { opened: true });
        assert_eq!(dest.process_rreq(&rreq(0.8, 1), n(2), t1, 0.0), RreqAction::Collect { opened: false });
        let w = dest.open_window((n(0), 1)).unwrap();
        assert_eq!(w.closes_at(), SimTime::from_millis(12));
        assert!(w.candidates.iter().all(|c| c.rreq.hop_count == 2));

        let reply = dest.close_collection_window((n(0), 1), SimTime::from_millis(12)).unwrap();
        assert_eq!(reply.next_hop, n(2));
        assert_eq!(reply.candidates, 2);
        assert_eq!(reply.rrep.destination, n(9));
        assert_eq!(reply.rrep.origin, n(0));
        assert_eq!(dest.route_to(n(0), SimTime::from_millis(12)).unwrap().next_hop, n(2));
        // Late copies after the window closed are duplicates.
        assert_eq!(dest.process_rreq(&rreq(0.0, 1), n(3), SimTime::from_millis(13), 0.0), RreqAction::Ignore);
        assert!(dest.close_collection_window((n(0), 1), SimTime::from_millis(13)).is_none());
    }

    #[test]
    fn destination_bumps_sequence_number_on_reply() {
        let mut dest = qos_node(9);
        dest.process_rreq(&rreq(0.0, 0), n(0), SimTime::ZERO, 0.0);
        let before = dest.seq;
        let reply = dest.close_collection_window((n(0), 1), SimTime::from_millis(10)).unwrap();
        assert!(reply.rrep.dest_seq > before);
        assert_eq!(reply.winner.rreq.hop_count, 1);
    }

    #[test]
    fn baseline_intermediate_reply_from_cache() {
        let mut relay = baseline_node(3);
        relay.routes.offer(n(9), n(4), 2, 7, SimTime::from_millis(3000), SimTime::ZERO);
        match relay.process_rreq(&rreq(0.0, 0), n(0), SimTime::ZERO, 0.0) {
            RreqAction::Reply { rrep, next_hop } => {
                assert_eq!(next_hop, n(0));
                assert_eq!((rrep.hop_count, rrep.dest_seq), (2, 7));
            }
            other => panic!("{other:?}"),
        }
        let mut qos_relay = qos_node(3);
        qos_relay.routes.offer(n(9), n(4), 2, 7, SimTime::from_millis(3000), SimTime::ZERO);
        assert!(matches!(qos_relay.process_rreq(&rreq(0.0, 0), n(0), SimTime::ZERO, 0.0), RreqAction::Forward(_)));
    }

    #[test]
    fn rrep_forwarding_and_arrival() {
        let mut relay = qos_node(3);
        relay.process_rreq(&rreq(0.0, 0), n(0), SimTime::ZERO, 0.0);
        let rrep = RrepMessage {
            destination: n(9),
            dest_seq: 4,
            origin: n(0),
            hop_count: 0,
            lifetime: SimTime::from_millis(6000),
        };
        match relay.process_rrep(&rrep, n(9), SimTime::from_millis(5)) {
            RrepAction::Forward { rrep: fwd, next_hop } => {
                assert_eq!(next_hop, n(0));
                assert_eq!(fwd.hop_count, 1);
            }
            other => panic!("{other:?}"),
        }
        let fwd_route = relay.route_to(n(9), SimTime::from_millis(5)).unwrap();
        assert_eq!((fwd_route.next_hop, fwd_route.hop_count), (n(9), 1));

        let mut origin = qos_node(0);
        origin.originate_rreq(n(9), SimTime::ZERO);
        let at_origin = RrepMessage { hop_count: 1, ..rrep.clone() };
        assert_eq!(
            origin.process_rrep(&at_origin, n(3), SimTime::from_millis(6)),
            RrepAction::RouteReady { destination: n(9) }
        );
        assert_eq!(origin.route_to(n(9), SimTime::from_millis(6)).unwrap().hop_count, 2);
        assert!(origin.discovery(n(9)).is_none());

        let mut stranger = qos_node(7);
        assert_eq!(stranger.process_rrep(&rrep, n(9), SimTime::from_millis(5)), RrepAction::NoReverseRoute);
    }

    #[test]
    fn link_break_invalidates_all_routes_through_neighbor() {
        let mut node = qos_node(3);
        let exp = SimTime::from_millis(3000);
        node.routes.offer(n(8), n(4), 2, 1, exp, SimTime::ZERO);
        node.routes.offer(n(9), n(4), 3, 1, exp, SimTime::ZERO);
        node.routes.offer(n(7), n(5), 1, 1, exp, SimTime::ZERO);
        node.routes.add_precursor(n(8), n(1));
        let rerr = node.handle_link_break(n(4)).unwrap();
        let dests: Vec<NodeId> = rerr.unreachable.iter().map(|(d, _)| *d).collect();
        assert_eq!(dests, vec![n(8), n(9)]);
        assert!(node.route_to(n(8), SimTime::ZERO).is_none());
        assert!(node.route_to(n(9), SimTime::ZERO).is_none());
        assert!(node.route_to(n(7), SimTime::ZERO).is_some());
        assert!(node.handle_link_break(n(6)).is_none());
    }

    #[test]
    fn source_rediscovers_after_rerr() {
        let mut src = qos_node(0);
        let first = src.originate_rreq(n(9), SimTime::ZERO).unwrap();
        let rrep = RrepMessage { destination: n(9), dest_seq: 2, origin: n(0), hop_count: 1, lifetime: SimTime::from_millis(6000) };
        src.process_rrep(&rrep, n(3), SimTime::from_millis(1));
        assert!(src.process_rerr(&RerrMessage { unreachable: vec![(n(9), 3)] }, n(3)).is_none());
        let again = src.originate_rreq(n(9), SimTime::from_millis(2)).unwrap();
        assert!(again.broadcast_id > first.broadcast_id);
        assert_eq!(again.dest_seq_known, Some(3));
    }

    #[test]
    fn rerr_from_other_neighbor_is_ignored() {
        let mut node = qos_node(0);
        node.routes.offer(n(9), n(3), 2, 1, SimTime::from_millis(3000), SimTime::ZERO);
        node.process_rerr(&RerrMessage { unreachable: vec![(n(9), 2)] }, n(4));
        assert!(node.route_to(n(9), SimTime::ZERO).is_some());
    }

    #[test]
    fn discovery_retries_then_gives_up() {
        let mut node = qos_node(0);
        let r = node.originate_rreq(n(9), SimTime::ZERO).unwrap();
        let DiscoveryTimeout::Retry(r2) = node.discovery_timeout(n(9), r.broadcast_id, SimTime::from_millis(100)) else {
            panic!()
        };
        assert_eq!(node.discovery_timeout(n(9), r.broadcast_id, SimTime::from_millis(100)), DiscoveryTimeout::Nothing);
        let DiscoveryTimeout::Retry(r3) = node.discovery_timeout(n(9), r2.broadcast_id, SimTime::from_millis(300)) else {
            panic!()
        };
        assert_eq!(node.discovery_timeout(n(9), r3.broadcast_id, SimTime::from_millis(700)), DiscoveryTimeout::GiveUp);
        assert_eq!(node.discovery_wait(2), SimTime::from_millis(400));
    }

    #[test]
    fn route_freshness_rule() {
        let mut t = RoutingTable::default();
        let exp = SimTime::from_millis(100);
        assert!(t.offer(n(9), n(1), 3, 5, exp, SimTime::ZERO));
        assert!(!t.offer(n(9), n(2), 4, 5, exp, SimTime::ZERO));
        assert!(t.offer(n(9), n(2), 2, 5, exp, SimTime::ZERO));
        assert!(!t.offer(n(9), n(3), 1, 4, exp, SimTime::ZERO));
        assert!(t.offer(n(9), n(3), 9, 6, exp, SimTime::ZERO));
        assert!(t.lookup(n(9), SimTime::from_millis(100)).is_none());
    }
}
