use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::{
    emulate_os_activity, Mount, ScenarioConfig, ScenarioError, TrajectoryPoint, BEACON_SLOTS,
    CALIBRATION_TX_POWER_DBM,
};
use crate::label::Label;
use crate::seed::{self, stream};

type Point = (f64, f64);

#[derive(Clone, Copy, Debug)]
enum Phase {
    Dwell { stop: u32, at: Point },
    Travel { from: Point, to: Point },
}

#[derive(Clone, Copy, Debug)]
struct Span {
    phase: Phase,
    start: f64,
    end: f64,
}

/// A bus stopped at a stop, as seen at some instant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dwell {
    pub stop: u32,
    pub arrived_at: f64,
    pub departs_at: f64,
    /// Stop the bus heads to after this dwell.
    pub next_stop: u32,
}

/// Periodic ping-pong timetable of one bus along its route.
#[derive(Clone, Debug)]
pub struct BusSchedule {
    pub bus_id: u32,
    spans: Vec<Span>,
    next_stop: Vec<u32>,
    period: f64,
    offset: f64,
}

impl BusSchedule {
    fn new(config: &ScenarioConfig, bus_index: usize) -> Self {
        let net = &config.network;
        let bus = &net.buses[bus_index];
        let route = net.route(bus.route).expect("validated route");
        // forward then backward, without repeating the turnaround stops
        let mut order: Vec<u32> = route.stops.clone();
        order.extend(route.stops.iter().rev().skip(1).take(route.stops.len() - 2));
        let pos = |id: u32| {
            let s = net.stop(id).expect("validated stop");
            (s.x, s.y)
        };
        let mut spans = Vec::with_capacity(order.len() * 2);
        let mut next_stop = Vec::with_capacity(order.len() * 2);
        let mut t = 0.0;
        for (i, &stop) in order.iter().enumerate() {
            let next = order[(i + 1) % order.len()];
            let dwell_end = t + config.behavior.dwell_s;
            spans.push(Span { phase: Phase::Dwell { stop, at: pos(stop) }, start: t, end: dwell_end });
            next_stop.push(next);
            let (from, to) = (pos(stop), pos(next));
            let travel = distance(from, to) / bus.max_speed_mps;
            spans.push(Span { phase: Phase::Travel { from, to }, start: dwell_end, end: dwell_end + travel });
            next_stop.push(next);
            t = dwell_end + travel;
        }
        Self { bus_id: bus.id, spans, next_stop, period: t, offset: bus.start_offset_s }
    }

    fn locate(&self, t: f64) -> (usize, f64) {
        let u = (t + self.offset).rem_euclid(self.period);
        let i = self.spans.partition_point(|s| s.end <= u).min(self.spans.len() - 1);
        (i, u)
    }

    pub fn position(&self, t: f64) -> (f64, f64) {
        let (i, u) = self.locate(t);
        let span = &self.spans[i];
        match span.phase {
            Phase::Dwell { at, .. } => at,
            Phase::Travel { from, to } => {
                let f = ((u - span.start) / (span.end - span.start)).clamp(0.0, 1.0);
                (from.0 + f * (to.0 - from.0), from.1 + f * (to.1 - from.1))
            }
        }
    }

    pub fn dwell_at(&self, t: f64) -> Option<Dwell> {
        let (i, u) = self.locate(t);
        let span = &self.spans[i];
        match span.phase {
            Phase::Dwell { stop, .. } => {
                let arrived_at = t - (u - span.start);
                Some(Dwell {
                    stop,
                    arrived_at,
                    departs_at: arrived_at + (span.end - span.start),
                    next_stop: self.next_stop[i],
                })
            }
            Phase::Travel { .. } => None,
        }
    }

    pub fn period(&self) -> f64 {
        self.period
    }
}

fn distance(a: Point, b: Point) -> f64 {
    (a.0 - b.0).hypot(a.1 - b.1)
}

/// A validated scenario with resolved bus timetables.
#[derive(Clone, Debug)]
pub struct Scenario {
    config: ScenarioConfig,
    schedules: Vec<BusSchedule>,
    served_stops: Vec<u32>,
    beacon_phase: Vec<f64>,
}

#[derive(Clone, Copy, Debug)]
enum AfterWalk {
    Wait(u32),
    Idle,
}

#[derive(Clone, Copy, Debug)]
enum State {
    Walking { pos: Point, target: Point, then: AfterWalk },
    Waiting { stop: u32, spot: Point, board_delay: f64, excluded: Option<(usize, f64)> },
    Riding { bus: usize, dest: u32, offset: Point, alight_delay: f64 },
    Idle { spot: Point },
}

impl Scenario {
    pub fn new(config: ScenarioConfig) -> Result<Self, ScenarioError> {
        config.validate()?;
        let schedules = (0..config.network.buses.len())
            .map(|i| BusSchedule::new(&config, i))
            .collect();
        let mut served_stops: Vec<u32> = config
            .network
            .routes
            .iter()
            .filter(|r| config.network.buses.iter().any(|b| b.route == r.id))
            .flat_map(|r| r.stops.iter().copied())
            .collect();
        served_stops.sort_unstable();
        served_stops.dedup();
        if served_stops.is_empty() {
            return Err(ScenarioError::config("no stop is served by any bus"));
        }
        let beacon_phase = config
            .network
            .beacons
            .iter()
            .enumerate()
            .map(|(slot, b)| {
                let mut rng = seed::rng(config.seed, &[stream::SCENARIO_BEACON, slot as u64]);
                rng.random::<f64>() / b.tx_rate_hz
            })
            .collect();
        Ok(Self { config, schedules, served_stops, beacon_phase })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn schedules(&self) -> &[BusSchedule] {
        &self.schedules
    }

    pub fn bus_position(&self, bus_id: u32, t: f64) -> Option<(f64, f64)> {
        self.schedules.iter().find(|s| s.bus_id == bus_id).map(|s| s.position(t))
    }

    fn stop_pos(&self, id: u32) -> Point {
        let s = self.config.network.stop(id).expect("validated stop");
        (s.x, s.y)
    }

    fn ring_point<R: Rng>(&self, center: Point, band: (f64, f64), rng: &mut R) -> Point {
        let r = uniform(rng, band);
        let a = rng.random::<f64>() * std::f64::consts::TAU;
        (center.0 + r * a.cos(), center.1 + r * a.sin())
    }

    fn number_of_ticks(&self) -> usize {
        let net = &self.config.network;
        (net.duration_s * net.sampling_rate_hz).floor() as usize
    }

    /// Generates every user's trajectory, ordered by user id then time.
    pub fn simulate(&self) -> Result<Vec<Vec<TrajectoryPoint>>, ScenarioError> {
        (0..self.config.n_users)
            .into_par_iter()
            .map(|user| self.simulate_user(user))
            .collect()
    }

    fn simulate_user(&self, user: u32) -> Result<Vec<TrajectoryPoint>, ScenarioError> {
        let cfg = &self.config;
        let b = &cfg.behavior;
        let dt = 1.0 / cfg.network.sampling_rate_hz;
        let mut rng = seed::rng(cfg.seed, &[stream::SCENARIO_USER, u64::from(user)]);

        let target_rides = rng.random_range(b.rides.0..=b.rides.1);
        let body_shadowed = rng.random::<f64>() < cfg.rssi.body_shadow_prob;
        let body_loss = if body_shadowed { cfg.rssi.body_shadow_db } else { 0.0 };
        let first_stop = self.served_stops[rng.random_range(0..self.served_stops.len())];
        let first_spot = self.ring_point(self.stop_pos(first_stop), b.wait_offset_m, &mut rng);
        let start = self.ring_point(self.stop_pos(first_stop), b.approach_distance_m, &mut rng);
        let mut state = State::Walking { pos: start, target: first_spot, then: AfterWalk::Wait(first_stop) };

        let rho = b.gps_noise_correlation;
        let innovation = b.gps_noise_std_m * (1.0 - rho * rho).sqrt();
        let mut gps_err = (
            b.gps_noise_std_m * normal(&mut rng),
            b.gps_noise_std_m * normal(&mut rng),
        );

        let n_ticks = self.number_of_ticks();
        let mut out = Vec::with_capacity(n_ticks);
        let mut rides_done = 0usize;
        let mut segment = 0u32;
        let mut last_label: Option<Label> = None;

        for k in 0..n_ticks {
            let t = k as f64 / cfg.network.sampling_rate_hz;
            state = self.step(state, t, dt, target_rides, &mut rides_done, &mut rng);
            let (pos, label) = match state {
                State::Walking { pos, .. } => (pos, Label::Bo),
                State::Waiting { spot, .. } | State::Idle { spot } => (spot, Label::Bo),
                State::Riding { bus, offset, .. } => {
                    let p = self.schedules[bus].position(t);
                    ((p.0 + offset.0, p.1 + offset.1), Label::Bi)
                }
            };
            if let Some(prev) = last_label {
                if prev != label {
                    segment += 1;
                }
            }
            last_label = Some(label);

            if k > 0 {
                gps_err = (
                    rho * gps_err.0 + innovation * normal(&mut rng),
                    rho * gps_err.1 + innovation * normal(&mut rng),
                );
            }
            let (lat, lon) = cfg.projection.to_lat_lon(pos.0 + gps_err.0, pos.1 + gps_err.1);

            let mut rssi = [None; BEACON_SLOTS];
            for (slot, beacon) in cfg.network.beacons.iter().enumerate() {
                let bpos = match beacon.mount {
                    Mount::Stop(id) => self.stop_pos(id),
                    Mount::Bus(id) => self.bus_position(id, t).expect("validated bus"),
                };
                let d = distance(pos, bpos).hypot(b.antenna_height_m);
                let extra = body_loss - (beacon.tx_power_dbm - CALIBRATION_TX_POWER_DBM);
                let interval = 1.0 / beacon.tx_rate_hz;
                let phase = self.beacon_phase[slot];
                let adverts = ((t - phase) / interval).floor() - ((t - dt - phase) / interval).floor();
                for _ in 0..adverts.max(0.0) as usize {
                    if let Some(v) = cfg.rssi.sample(d, extra, &mut rng)? {
                        rssi[slot] = Some(v);
                    }
                }
            }

            out.push(TrajectoryPoint {
                user_id: user,
                timestamp_s: t,
                lat,
                lon,
                rssi,
                os_activity: emulate_os_activity(label, b.os_activity_accuracy, &mut rng),
                bibo_label: label,
                trip_segment_id: segment,
            });
        }

        if rides_done < b.min_rides {
            return Err(ScenarioError::InsufficientActivity {
                user,
                rides: rides_done,
                required: b.min_rides,
            });
        }
        Ok(out)
    }

    fn step<R: Rng>(
        &self,
        state: State,
        t: f64,
        dt: f64,
        target_rides: usize,
        rides_done: &mut usize,
        rng: &mut R,
    ) -> State {
        let b = &self.config.behavior;
        match state {
            State::Walking { pos, target, then } => {
                let remaining = distance(pos, target);
                let stride = b.walk_speed_mps * dt;
                if remaining <= stride {
                    match then {
                        AfterWalk::Wait(stop) => State::Waiting {
                            stop,
                            spot: target,
                            board_delay: uniform(rng, b.board_delay_s),
                            excluded: None,
                        },
                        AfterWalk::Idle => State::Idle { spot: target },
                    }
                } else {
                    let f = stride / remaining;
                    let pos = (pos.0 + f * (target.0 - pos.0), pos.1 + f * (target.1 - pos.1));
                    State::Walking { pos, target, then }
                }
            }
            State::Waiting { stop, board_delay, excluded, .. } => {
                let boarding = self.schedules.iter().enumerate().find_map(|(i, s)| {
                    if matches!(excluded, Some((bus, until)) if bus == i && t < until) {
                        return None;
                    }
                    s.dwell_at(t)
                        .filter(|d| d.stop == stop && t - d.arrived_at >= board_delay)
                        .map(|d| (i, d))
                });
                match boarding {
                    Some((bus, dwell)) => {
                        let r = 0.6 * b.bus_footprint_radius_m * rng.random::<f64>().sqrt();
                        let a = rng.random::<f64>() * std::f64::consts::TAU;
                        State::Riding {
                            bus,
                            dest: dwell.next_stop,
                            offset: (r * a.cos(), r * a.sin()),
                            alight_delay: uniform(rng, b.alight_delay_s),
                        }
                    }
                    None => state,
                }
            }
            State::Riding { bus, dest, alight_delay, .. } => {
                let arrived = self.schedules[bus]
                    .dwell_at(t)
                    .filter(|d| d.stop == dest && t - d.arrived_at >= alight_delay);
                let Some(dwell) = arrived else {
                    return state;
                };
                *rides_done += 1;
                let here = self.stop_pos(dest);
                let exit = self.ring_point(here, b.wait_offset_m, rng);
                if *rides_done >= target_rides {
                    let spot = self.ring_point(here, b.idle_distance_m, rng);
                    return State::Walking { pos: exit, target: spot, then: AfterWalk::Idle };
                }
                let others: Vec<u32> =
                    self.served_stops.iter().copied().filter(|&s| s != dest).collect();
                if !others.is_empty() && rng.random::<f64>() < b.walk_between_stops_prob {
                    let next = others[rng.random_range(0..others.len())];
                    let spot = self.ring_point(self.stop_pos(next), b.wait_offset_m, rng);
                    State::Walking { pos: exit, target: spot, then: AfterWalk::Wait(next) }
                } else {
                    State::Waiting {
                        stop: dest,
                        spot: exit,
                        board_delay: uniform(rng, b.board_delay_s),
                        excluded: Some((bus, dwell.departs_at)),
                    }
                }
            }
            State::Idle { .. } => state,
        }
    }
}

fn uniform<R: Rng>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

fn normal<R: Rng>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Simulates `config.n_users` passengers. Same config and seed give
/// bit-identical output regardless of thread count.
pub fn simulate_scenario(config: &ScenarioConfig) -> Result<Vec<Vec<TrajectoryPoint>>, ScenarioError> {
    Scenario::new(config.clone())?.simulate()
}
