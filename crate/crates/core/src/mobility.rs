//! Random waypoint mobility and the disk radio model.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::time::SimTime;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Area {
    pub width: f64,
    pub height: f64,
}

impl Area {
    pub fn contains(&self, p: Point) -> bool {
        (0.0..=self.width).contains(&p.x) && (0.0..=self.height).contains(&p.y)
    }

    pub fn random_point(&self, rng: &mut ChaCha8Rng) -> Point {
        Point::new(rng.random::<f64>() * self.width, rng.random::<f64>() * self.height)
    }
}

/// One straight movement toward a waypoint followed by a pause there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Leg {
    pub from: Point,
    pub to: Point,
    pub speed: f64,
    pub depart_at: SimTime,
    pub arrive_at: SimTime,
    pub pause_until: SimTime,
}

impl Leg {
    pub fn new(from: Point, to: Point, speed: f64, depart_at: SimTime, pause: SimTime) -> Self {
        let travel = if speed > 0.0 { from.distance(to) / speed } else { 0.0 };
        let arrive_at = depart_at + SimTime::from_secs_f64(travel);
        Leg { from, to, speed, depart_at, arrive_at, pause_until: arrive_at + pause }
    }

    /// A leg that stays at `at` until `until`.
    pub fn hold(at: Point, since: SimTime, until: SimTime) -> Self {
        Leg { from: at, to: at, speed: 0.0, depart_at: since, arrive_at: since, pause_until: until }
    }

    /// Linear interpolation between the endpoints; clamps outside the leg.
    pub fn position_at(&self, now: SimTime) -> Point {
        if now >= self.arrive_at {
            return self.to;
        }
        if now <= self.depart_at {
            return self.from;
        }
        let span = (self.arrive_at - self.depart_at).as_nanos() as f64;
        let f = (now - self.depart_at).as_nanos() as f64 / span;
        Point::new(self.from.x + (self.to.x - self.from.x) * f, self.from.y + (self.to.y - self.from.y) * f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MobilityParams {
    pub area: Area,
    pub speed_min: f64,
    pub speed_max: f64,
    pub pause: SimTime,
}

/// Random waypoint state for one node. Nodes start paused at their initial
/// position, so a pause as long as the run keeps the topology static.
#[derive(Debug, Clone)]
pub struct MobilityState {
    leg: Leg,
    params: MobilityParams,
    rng: ChaCha8Rng,
}

impl MobilityState {
    pub fn new(start: Point, params: MobilityParams, rng: ChaCha8Rng) -> Self {
        MobilityState { leg: Leg::hold(start, SimTime::ZERO, params.pause), params, rng }
    }

    pub fn with_leg(leg: Leg, params: MobilityParams, rng: ChaCha8Rng) -> Self {
        MobilityState { leg, params, rng }
    }

    pub fn leg(&self) -> &Leg {
        &self.leg
    }

    pub fn params(&self) -> &MobilityParams {
        &self.params
    }

    pub fn speed(&self) -> f64 {
        self.leg.speed
    }

    /// Position at `now`, drawing new legs as earlier ones finish. Queries
    /// must be made with non-decreasing `now`.
    pub fn position_at(&mut self, now: SimTime) -> Point {
        while now >= self.leg.pause_until {
            let start = self.leg.to;
            let depart = self.leg.pause_until;
            let to = self.params.area.random_point(&mut self.rng);
            let speed = if self.params.speed_max > self.params.speed_min {
                self.rng.random_range(self.params.speed_min..=self.params.speed_max)
            } else {
                self.params.speed_min
            };
            let next = Leg::new(start, to, speed, depart, self.params.pause);
            if next.pause_until == depart {
                // Zero-length leg with no pause; keep the clock moving.
                self.leg = Leg { pause_until: depart + SimTime::from_nanos(1), ..next };
            } else {
                self.leg = next;
            }
        }
        self.leg.position_at(now)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadioModel {
    pub range: f64,
    pub tx_time: SimTime,
}

impl Default for RadioModel {
    fn default() -> Self {
        RadioModel { range: 250.0, tx_time: SimTime::from_millis(1) }
    }
}

/// Closed disk: a node exactly at the range boundary is reachable.
pub fn in_range(a: Point, b: Point, radio: &RadioModel) -> bool {
    a.distance(b) <= radio.range
}
