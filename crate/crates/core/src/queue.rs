//! Per-node transmit buffer, best-effort load ratio, and the two dequeue
//! disciplines: plain FIFO and slotted real-time priority.

use std::collections::VecDeque;

use crate::error::ConfigError;
use crate::packet::{DataPacket, Packet, TrafficClass};
use crate::time::SimTime;

pub const DEFAULT_CAPACITY: usize = 20;

/// Result of offering a packet to a [`Buffer`].
#[derive(Debug, Clone, PartialEq)]
pub enum Admission {
    /// Stored. A control packet admitted into a full buffer pushes out the
    /// tail-most data packet, returned here.
    Accepted { evicted: Option<DataPacket> },
    /// Buffer full; the packet is handed back untouched.
    Dropped(Packet),
}

impl Admission {
    pub fn is_accepted(&self) -> bool {
        matches!(self, Admission::Accepted { .. })
    }
}

/// Drop-tail packet buffer. Stored order is arrival order; dequeue may take
/// from any position but never reorders what remains.
#[derive(Debug, Clone)]
pub struct Buffer {
    slots: VecDeque<Packet>,
    capacity: usize,
}

impl Default for Buffer {
    fn default() -> Self {
        Buffer::new(DEFAULT_CAPACITY)
    }
}

impl Buffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "buffer capacity must be positive");
        Buffer { slots: VecDeque::with_capacity(capacity), capacity }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.slots.len() >= self.capacity
    }

    pub fn iter(&self) -> impl Iterator<Item = &Packet> {
        self.slots.iter()
    }

    pub fn enqueue(&mut self, mut packet: Packet, now: SimTime) -> Admission {
        if let Packet::Data(d) = &mut packet {
            if self.is_full() {
                return Admission::Dropped(packet);
            }
            d.current_hop_enqueued_at = now;
            self.slots.push_back(packet);
            return Admission::Accepted { evicted: None };
        }

        let mut evicted = None;
        if self.is_full() {
            match self.slots.iter().rposition(|p| !p.is_control()) {
                Some(i) => {
                    if let Some(Packet::Data(d)) = self.slots.remove(i) {
                        evicted = Some(d);
                    }
                }
                // Nothing left to push out: the buffer is all routing traffic.
                None => return Admission::Dropped(packet),
            }
        }
        self.slots.push_back(packet);
        Admission::Accepted { evicted }
    }

    fn take(&mut self, index: usize) -> Option<Packet> {
        self.slots.remove(index)
    }

    fn position_of(&self, class: TrafficClass) -> Option<usize> {
        self.slots.iter().position(|p| p.class() == class)
    }

    /// Removes every data packet matching `pred`, preserving the order of the rest.
    pub fn drain_data<F>(&mut self, mut pred: F) -> Vec<DataPacket>
    where
        F: FnMut(&DataPacket) -> bool,
    {
        let mut out = Vec::new();
        let mut kept = VecDeque::with_capacity(self.slots.len());
        for p in self.slots.drain(..) {
            match p {
                Packet::Data(d) if pred(&d) => out.push(d),
                other => kept.push_back(other),
            }
        }
        self.slots = kept;
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ClassCounts {
    pub n_be: usize,
    /// Everything that is not best effort, control packets included.
    pub n_other: usize,
}

impl ClassCounts {
    /// Ratio of best-effort packets to the rest. An all-BE buffer divides by
    /// one instead of zero, so the ratio stays finite and still grows with
    /// the BE count.
    pub fn ratio(self) -> f64 {
        if self.n_be == 0 {
            return 0.0;
        }
        self.n_be as f64 / self.n_other.max(1) as f64
    }
}

pub fn count_classes(buffer: &Buffer) -> ClassCounts {
    let n_be = buffer.iter().filter(|p| p.class() == TrafficClass::BestEffort).count();
    ClassCounts { n_be, n_other: buffer.len() - n_be }
}

pub fn compute_node_ratio(buffer: &Buffer) -> f64 {
    count_classes(buffer).ratio()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    RealTime,
    BestEffort,
}

impl Slot {
    fn preferred(self) -> TrafficClass {
        match self {
            Slot::RealTime => TrafficClass::RealTime,
            Slot::BestEffort => TrafficClass::BestEffort,
        }
    }

    fn fallback(self) -> TrafficClass {
        match self {
            Slot::RealTime => TrafficClass::BestEffort,
            Slot::BestEffort => TrafficClass::RealTime,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchedulerConfig {
    pub rt_slot: SimTime,
    pub be_slot: SimTime,
    pub tx_time: SimTime,
    /// When set, an opportunity with no packet of the slot's class stays idle.
    pub strict_slots: bool,
    pub slot_phase_origin: SimTime,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        SchedulerConfig {
            rt_slot: SimTime::from_millis(5),
            be_slot: SimTime::from_millis(3),
            tx_time: SimTime::from_millis(1),
            strict_slots: true,
            slot_phase_origin: SimTime::ZERO,
        }
    }
}

impl SchedulerConfig {
    pub fn cycle(&self) -> SimTime {
        self.rt_slot + self.be_slot
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let tx = self.tx_time.as_nanos();
        if tx == 0 {
            return Err(ConfigError::invalid("tx_time", "must be positive"));
        }
        if self.rt_slot.as_nanos() == 0 {
            return Err(ConfigError::invalid("scheduler.rt_slot", "must be positive"));
        }
        if !self.rt_slot.as_nanos().is_multiple_of(tx) {
            return Err(ConfigError::invalid("scheduler.rt_slot", "must be a multiple of tx_time"));
        }
        if !self.be_slot.as_nanos().is_multiple_of(tx) {
            return Err(ConfigError::invalid("scheduler.be_slot", "must be a multiple of tx_time"));
        }
        Ok(())
    }

    /// Start of the next slot after the one containing `now`.
    pub fn next_slot_boundary(&self, now: SimTime) -> SimTime {
        let cycle = self.cycle().as_nanos();
        let origin = self.slot_phase_origin;
        let since = now.saturating_sub(origin).as_nanos();
        let cycle_start = since - since % cycle;
        let within = since - cycle_start;
        let rt = self.rt_slot.as_nanos();
        let next = if within < rt { cycle_start + rt } else { cycle_start + cycle };
        origin + SimTime::from_nanos(next)
    }
}

pub fn current_slot(now: SimTime, config: &SchedulerConfig) -> Slot {
    let cycle = config.cycle().as_nanos();
    let t = now.saturating_sub(config.slot_phase_origin).as_nanos() % cycle;
    if t < config.rt_slot.as_nanos() {
        Slot::RealTime
    } else {
        Slot::BestEffort
    }
}

/// Head-of-line dequeue; routing messages jump the line.
pub fn next_packet_fifo(buffer: &mut Buffer) -> Option<Packet> {
    let index = buffer.position_of(TrafficClass::Control).unwrap_or(0);
    buffer.take(index)
}

/// Dequeue for the slotted real-time priority discipline. Each class is
/// served in arrival order.
pub fn next_packet_slotted(buffer: &mut Buffer, now: SimTime, config: &SchedulerConfig) -> Option<Packet> {
    if let Some(i) = buffer.position_of(TrafficClass::Control) {
        return buffer.take(i);
    }
    let slot = current_slot(now, config);
    if let Some(i) = buffer.position_of(slot.preferred()) {
        return buffer.take(i);
    }
    if config.strict_slots {
        return None;
    }
    let i = buffer.position_of(slot.fallback())?;
    buffer.take(i)
}

/// Dequeue discipline selected by the protocol mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Discipline {
    Fifo,
    Slotted(SchedulerConfig),
}

impl Discipline {
    pub fn next_packet(&self, buffer: &mut Buffer, now: SimTime) -> Option<Packet> {
        match self {
            Discipline::Fifo => next_packet_fifo(buffer),
            Discipline::Slotted(cfg) => next_packet_slotted(buffer, now, cfg),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::packet::{NodeId, RerrMessage};

    const RT: TrafficClass = TrafficClass::RealTime;
    const BE: TrafficClass = TrafficClass::BestEffort;

    fn data(id: u64, class: TrafficClass) -> Packet {
        Packet::Data(DataPacket::new(id, 0, NodeId(0), NodeId(1), class, 100, SimTime::ZERO))
    }

    fn control() -> Packet {
        Packet::Rerr(RerrMessage { unreachable: vec![(NodeId(3), 1)] })
    }

    fn buffer_of(classes: &[TrafficClass]) -> Buffer {
        let mut b = Buffer::new(DEFAULT_CAPACITY);
        for (i, c) in classes.iter().enumerate() {
            assert!(b.enqueue(data(i as u64 + 1, *c), SimTime::ZERO).is_accepted());
        }
        b
    }

    fn ten_packet_buffer() -> Buffer {
        buffer_of(&[RT, BE, BE, RT, RT, BE, BE, BE, RT, RT])
    }

    fn id(p: Packet) -> u64 {
        p.as_data().unwrap().packet_id
    }

    #[test]
    fn enqueue_at_nineteen_accepts_and_at_twenty_drops() {
        let mut b = buffer_of(&[BE; 19]);
        assert!(b.enqueue(data(100, RT), SimTime::ZERO).is_accepted());
        assert_eq!(b.len(), 20);
        assert!(matches!(b.enqueue(data(101, RT), SimTime::ZERO), Admission::Dropped(_)));
        assert_eq!(b.len(), 20);
    }

    #[test]
    fn enqueue_into_empty_lands_at_head() {
        let mut b = Buffer::new(20);
        b.enqueue(data(7, RT), SimTime::from_millis(3));
        let head = b.iter().next().unwrap().as_data().unwrap();
        assert_eq!(head.packet_id, 7);
        assert_eq!(head.current_hop_enqueued_at, SimTime::from_millis(3));
    }

    #[test]
    fn control_evicts_tail_most_data_when_full() {
        let mut b = buffer_of(&[RT; 20]);
        match b.enqueue(control(), SimTime::ZERO) {
            Admission::Accepted { evicted: Some(d) } => assert_eq!(d.packet_id, 20),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(b.len(), 20);
    }

    #[test]
    fn control_dropped_when_buffer_holds_only_control() {
        let mut b = Buffer::new(2);
        b.enqueue(control(), SimTime::ZERO);
        b.enqueue(control(), SimTime::ZERO);
        assert!(matches!(b.enqueue(control(), SimTime::ZERO), Admission::Dropped(_)));
    }

    #[test]
    fn counts_and_ratio() {
        assert_eq!(count_classes(&ten_packet_buffer()), ClassCounts { n_be: 5, n_other: 5 });
        assert_eq!(count_classes(&Buffer::new(5)), ClassCounts::default());
        assert_eq!(count_classes(&buffer_of(&[BE, BE, BE])), ClassCounts { n_be: 3, n_other: 0 });
        assert_eq!(compute_node_ratio(&ten_packet_buffer()), 1.0);
        assert_eq!(compute_node_ratio(&Buffer::new(5)), 0.0);
        assert_eq!(compute_node_ratio(&buffer_of(&[BE; 4])), 4.0);
        assert_eq!(compute_node_ratio(&buffer_of(&[RT, RT])), 0.0);
    }

    #[test]
    fn control_packets_count_as_other() {
        let mut b = buffer_of(&[BE, BE]);
        b.enqueue(control(), SimTime::ZERO);
        assert_eq!(count_classes(&b), ClassCounts { n_be: 2, n_other: 1 });
        assert_eq!(compute_node_ratio(&b), 2.0);
    }

    #[test]
    fn slot_boundaries() {
        let cfg = SchedulerConfig::default();
        assert_eq!(current_slot(SimTime::ZERO, &cfg), Slot::RealTime);
        assert_eq!(current_slot(SimTime::from_secs_f64(0.0049), &cfg), Slot::RealTime);
        assert_eq!(current_slot(SimTime::from_secs_f64(0.005), &cfg), Slot::BestEffort);
        assert_eq!(current_slot(SimTime::from_secs_f64(0.0065), &cfg), Slot::BestEffort);
        assert_eq!(current_slot(SimTime::from_secs_f64(0.008), &cfg), Slot::RealTime);
    }

    #[test]
    fn slot_phase_origin_shifts_cycle() {
        let cfg = SchedulerConfig { slot_phase_origin: SimTime::from_millis(2), ..Default::default() };
        assert_eq!(current_slot(SimTime::from_millis(6), &cfg), Slot::RealTime);
        assert_eq!(current_slot(SimTime::from_millis(7), &cfg), Slot::BestEffort);
        assert_eq!(cfg.next_slot_boundary(SimTime::from_millis(3)), SimTime::from_millis(7));
        assert_eq!(cfg.next_slot_boundary(SimTime::from_millis(8)), SimTime::from_millis(10));
    }

    #[test]
    fn zero_be_slot_is_always_real_time() {
        let cfg = SchedulerConfig { be_slot: SimTime::ZERO, ..Default::default() };
        for ms in 0..20 {
            assert_eq!(current_slot(SimTime::from_millis(ms), &cfg), Slot::RealTime);
        }
    }

    #[test]
    fn fifo_takes_head_regardless_of_class() {
        let mut b = ten_packet_buffer();
        assert_eq!(id(next_packet_fifo(&mut b).unwrap()), 1);
        let mut b = buffer_of(&[BE, RT]);
        assert_eq!(next_packet_fifo(&mut b).unwrap().class(), BE);
        assert!(next_packet_fifo(&mut Buffer::new(3)).is_none());
    }

    #[test]
    fn fifo_serves_control_first() {
        let mut b = buffer_of(&[BE, RT]);
        b.enqueue(control(), SimTime::ZERO);
        assert!(next_packet_fifo(&mut b).unwrap().is_control());
        assert_eq!(id(next_packet_fifo(&mut b).unwrap()), 1);
    }

    #[test]
    fn slotted_worked_example_order() {
        let cfg = SchedulerConfig::default();
        let mut b = ten_packet_buffer();
        let order: Vec<u64> = (0..8)
            .map(|ms| id(next_packet_slotted(&mut b, SimTime::from_millis(ms), &cfg).unwrap()))
            .collect();
        assert_eq!(order, vec![1, 4, 5, 9, 10, 2, 3, 6]);
        let rest: Vec<u64> = b.iter().map(|p| p.as_data().unwrap().packet_id).collect();
        assert_eq!(rest, vec![7, 8]);
    }

    #[test]
    fn strict_slot_idles_without_matching_class() {
        let cfg = SchedulerConfig::default();
        let mut b = buffer_of(&[BE, BE, BE]);
        assert!(next_packet_slotted(&mut b, SimTime::ZERO, &cfg).is_none());
        assert_eq!(b.len(), 3);
        let mut b = buffer_of(&[RT]);
        assert!(next_packet_slotted(&mut b, SimTime::from_millis(5), &cfg).is_none());
    }

    #[test]
    fn work_conserving_slot_falls_back() {
        let cfg = SchedulerConfig { strict_slots: false, ..Default::default() };
        let mut b = buffer_of(&[BE, BE]);
        assert_eq!(id(next_packet_slotted(&mut b, SimTime::ZERO, &cfg).unwrap()), 1);
        let mut b = buffer_of(&[RT, RT]);
        assert_eq!(id(next_packet_slotted(&mut b, SimTime::from_millis(6), &cfg).unwrap()), 1);
    }

    #[test]
    fn slotted_serves_control_in_any_slot() {
        let cfg = SchedulerConfig::default();
        let mut b = buffer_of(&[RT]);
        b.enqueue(control(), SimTime::ZERO);
        assert!(next_packet_slotted(&mut b, SimTime::from_millis(6), &cfg).unwrap().is_control());
    }

    #[test]
    fn scheduler_config_validation() {
        assert!(SchedulerConfig::default().validate().is_ok());
        let bad = SchedulerConfig { rt_slot: SimTime::from_micros(4500), ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = SchedulerConfig { rt_slot: SimTime::ZERO, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn drain_keeps_order_of_remaining() {
        let mut b = ten_packet_buffer();
        let taken = b.drain_data(|d| d.class() == RT);
        assert_eq!(taken.iter().map(|d| d.packet_id).collect::<Vec<_>>(), vec![1, 4, 5, 9, 10]);
        let rest: Vec<u64> = b.iter().map(|p| p.as_data().unwrap().packet_id).collect();
        assert_eq!(rest, vec![2, 3, 6, 7, 8]);
    }
}
