//! Ground-truth generator for one signalized two-lane approach.
//!
//! Vehicles enter the link at `ρ = link_length` as three independent Poisson
//! streams (right, left, straight), travel at free-flow speed, and reach the
//! stop line after a fixed travel time. A vehicle that reaches the stop line
//! while its lane is red, or while its lane still holds a queue, stops in the
//! next free slot `ρ_0 + k L_V + (k-1) G_V`; otherwise it crosses. During
//! green the head of each queue leaves every `saturation_headway` seconds.
//!
//! The queue is joined at the free-flow stop-line time regardless of how
//! far back the tail slot is. That keeps the number queued at the end of a
//! red phase equal to the number of Poisson arrivals in a window of exactly
//! the red duration.

use std::collections::VecDeque;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::control;
use crate::error::{ensure, Error, Result};
use crate::estimators::last_probe_location;
use crate::model::{
    DemandProfile, Lane, LinkGeometry, LinkState, Movement, ProbeObservation, SignalTiming, TurnRatios, VehicleRecord,
};

/// 50 km/h.
pub const DEFAULT_FREE_FLOW_SPEED: f64 = 13.89;
/// Seconds between departures from a discharging queue. Not given by any
/// measurement; pick something that keeps the configured demand undersaturated.
pub const DEFAULT_SATURATION_HEADWAY: f64 = 2.0;
pub const DEFAULT_SAMPLE_PERIOD: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssignmentPolicy {
    /// Each straight vehicle picks lane M with probability α.
    BernoulliAlpha,
    /// Straight vehicles join the shorter queue; ties are Bernoulli(α).
    ShortestQueue,
    /// Bernoulli(α*(r̄)) with r̄ evaluated when the vehicle reaches the stop
    /// line; falls back to the demand's α when both lanes are green.
    AlphaStar,
}

impl fmt::Display for AssignmentPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AssignmentPolicy::BernoulliAlpha => "bernoulli_alpha",
            AssignmentPolicy::ShortestQueue => "shortest_queue",
            AssignmentPolicy::AlphaStar => "alpha_star",
        })
    }
}

impl FromStr for AssignmentPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bernoulli_alpha" => Ok(AssignmentPolicy::BernoulliAlpha),
            "shortest_queue" => Ok(AssignmentPolicy::ShortestQueue),
            "alpha_star" => Ok(AssignmentPolicy::AlphaStar),
            other => Err(Error::Config(format!(
                "unknown policy {other:?} (expected bernoulli_alpha, shortest_queue or alpha_star)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub demand: DemandProfile,
    pub timing: SignalTiming,
    pub geometry: LinkGeometry,
    pub seed: u64,
    pub duration_s: f64,
    pub policy: AssignmentPolicy,
    pub free_flow_speed: f64,
    pub saturation_headway: f64,
    pub sample_period: f64,
    /// Keep every [`LinkState`] in the trace. Long runs only need the rows.
    pub record_states: bool,
}

impl SimConfig {
    pub fn new(demand: DemandProfile, timing: SignalTiming, duration_s: f64, seed: u64) -> Self {
        SimConfig {
            demand,
            timing,
            geometry: LinkGeometry::default(),
            seed,
            duration_s,
            policy: AssignmentPolicy::BernoulliAlpha,
            free_flow_speed: DEFAULT_FREE_FLOW_SPEED,
            saturation_headway: DEFAULT_SATURATION_HEADWAY,
            sample_period: DEFAULT_SAMPLE_PERIOD,
            record_states: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        ensure(self.duration_s.is_finite() && self.duration_s > 0.0, || {
            format!("duration {} must be > 0", self.duration_s)
        })?;
        ensure(self.free_flow_speed > 0.0, || "free-flow speed must be > 0".into())?;
        ensure(self.saturation_headway > 0.0, || {
            "saturation headway must be > 0".into()
        })?;
        ensure(self.sample_period > 0.0, || "sample period must be > 0".into())
    }

    /// Seconds from link entry to the stop line.
    pub fn travel_time(&self) -> f64 {
        (self.geometry.link_length - self.geometry.stop_offset) / self.free_flow_speed
    }
}

/// One vehicle of the pre-drawn arrival stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arrival {
    pub id: u64,
    pub time: f64,
    pub movement: Movement,
    pub is_probe: bool,
    /// Uniform draw consumed by lane assignment.
    pub assign_draw: f64,
}

/// Draws the three movement streams over `[0, duration)`.
///
/// Each movement has its own ChaCha stream; the probe flag is `u < p` for
/// a per-vehicle uniform `u`. Runs that differ only in `p` therefore share
/// the same vehicles, and the probes at a lower `p` are a subset of those
/// at a higher one.
pub fn generate_arrivals(demand: &DemandProfile, duration: f64, seed: u64) -> Vec<Arrival> {
    let mut all: Vec<(f64, Movement, f64, f64)> = Vec::new();
    for (stream, movement) in Movement::ALL.into_iter().enumerate() {
        let rate = demand.rate(movement);
        if rate <= 0.0 {
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream as u64 + 1);
        let gaps = Exp::new(rate).expect("rate is positive and finite");
        let mut t = 0.0;
        loop {
            t += gaps.sample(&mut rng);
            if t >= duration {
                break;
            }
            let probe_u: f64 = rng.random();
            let assign_u: f64 = rng.random();
            all.push((t, movement, probe_u, assign_u));
        }
    }
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    all.into_iter()
        .enumerate()
        .map(|(i, (time, movement, probe_u, assign_draw))| Arrival {
            id: i as u64,
            time,
            movement,
            is_probe: probe_u < demand.p(),
            assign_draw,
        })
        .collect()
}

/// Chooses a lane for an arriving vehicle. `queues` is `(N, M)`.
pub fn assign_lane<R: Rng + ?Sized>(
    movement: Movement,
    queues: (usize, usize),
    policy: AssignmentPolicy,
    alpha: f64,
    rng: &mut R,
) -> Lane {
    assign_lane_with_draw(movement, queues, policy, alpha, rng.random())
}

/// [`assign_lane`] with the uniform draw supplied by the caller.
pub fn assign_lane_with_draw(
    movement: Movement,
    queues: (usize, usize),
    policy: AssignmentPolicy,
    alpha: f64,
    u: f64,
) -> Lane {
    if let Some(lane) = movement.forced_lane() {
        return lane;
    }
    let bernoulli = if u < alpha { Lane::M } else { Lane::N };
    match policy {
        AssignmentPolicy::BernoulliAlpha | AssignmentPolicy::AlphaStar => bernoulli,
        AssignmentPolicy::ShortestQueue => match queues.0.cmp(&queues.1) {
            std::cmp::Ordering::Less => Lane::N,
            std::cmp::Ordering::Greater => Lane::M,
            std::cmp::Ordering::Equal => bernoulli,
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EntryRecord {
    pub id: u64,
    pub time: f64,
    pub movement: Movement,
    pub lane: Lane,
    pub is_probe: bool,
}

/// A vehicle crossing the stop line onto its outgoing link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExitRecord {
    pub id: u64,
    pub time: f64,
    pub movement: Movement,
    pub lane: Lane,
    pub is_probe: bool,
}

/// A lane turned red while still holding vehicles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OverflowEvent {
    pub time: f64,
    pub lane: Lane,
    pub residual: usize,
}

#[derive(Debug, Clone, Copy)]
struct Moving {
    rec: VehicleRecord,
    stopline_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum EventKind {
    Signal(Lane),
    Departure(Lane),
    StopLine,
    Entry,
}

/// Event-driven state of the link. [`Simulator::step`] processes every
/// event in `(t, t + dt]` in time order.
#[derive(Debug, Clone)]
pub struct Simulator {
    config: SimConfig,
    ratios: TurnRatios,
    arrivals: Vec<Arrival>,
    next_arrival: usize,
    moving: VecDeque<Moving>,
    queues: [VecDeque<VehicleRecord>; 2],
    red: [bool; 2],
    next_signal: [Option<(f64, bool)>; 2],
    next_departure: [Option<f64>; 2],
    time: f64,
    entries: Vec<EntryRecord>,
    exits: Vec<ExitRecord>,
    overflows: Vec<OverflowEvent>,
}

impl Simulator {
    pub fn new(config: SimConfig) -> Result<Self> {
        let arrivals = generate_arrivals(&config.demand, config.duration_s, config.seed);
        Self::with_arrivals(config, arrivals)
    }

    /// Replays an explicit arrival log instead of drawing one.
    pub fn with_arrivals(config: SimConfig, mut arrivals: Vec<Arrival>) -> Result<Self> {
        config.validate()?;
        arrivals.sort_by(|a, b| a.time.total_cmp(&b.time));
        let timing = config.timing;
        let red = [timing.is_red(Lane::N, 0.0), timing.is_red(Lane::M, 0.0)];
        let next_signal = [
            timing.next_transition(Lane::N, 0.0),
            timing.next_transition(Lane::M, 0.0),
        ];
        Ok(Simulator {
            ratios: config.demand.turn_ratios(),
            config,
            arrivals,
            next_arrival: 0,
            moving: VecDeque::new(),
            queues: [VecDeque::new(), VecDeque::new()],
            red,
            next_signal,
            next_departure: [None, None],
            time: 0.0,
            entries: Vec::new(),
            exits: Vec::new(),
            overflows: Vec::new(),
        })
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn queue_len(&self, lane: Lane) -> usize {
        self.queues[lane.index()].len()
    }

    pub fn entries(&self) -> &[EntryRecord] {
        &self.entries
    }

    pub fn exits(&self) -> &[ExitRecord] {
        &self.exits
    }

    pub fn overflows(&self) -> &[OverflowEvent] {
        &self.overflows
    }

    pub fn vehicles_on_link(&self) -> usize {
        self.moving.len() + self.queues[0].len() + self.queues[1].len()
    }

    pub fn step(&mut self, dt: f64) -> Result<()> {
        ensure(dt > 0.0 && dt.is_finite(), || format!("step size {dt} must be > 0"))?;
        self.advance_to(self.time + dt);
        Ok(())
    }

    /// Advances to exactly `t_end`; a no-op if `t_end` is not in the future.
    pub fn advance_to(&mut self, t_end: f64) {
        if t_end <= self.time {
            return;
        }
        while let Some((tau, kind)) = self.next_event(t_end) {
            match kind {
                EventKind::Signal(lane) => self.on_signal(lane, tau),
                EventKind::Departure(lane) => self.on_departure(lane, tau),
                EventKind::StopLine => self.on_stop_line(tau),
                EventKind::Entry => self.on_entry(tau),
            }
        }
        self.time = t_end;
    }

    fn next_event(&self, t_end: f64) -> Option<(f64, EventKind)> {
        let mut best: Option<(f64, EventKind)> = None;
        let mut offer = |tau: f64, kind: EventKind| {
            if tau <= t_end && best.is_none_or(|(b, k)| tau < b || (tau == b && kind < k)) {
                best = Some((tau, kind));
            }
        };
        for lane in Lane::BOTH {
            if let Some((tau, _)) = self.next_signal[lane.index()] {
                offer(tau, EventKind::Signal(lane));
            }
            if let Some(tau) = self.next_departure[lane.index()] {
                offer(tau, EventKind::Departure(lane));
            }
        }
        if let Some(front) = self.moving.front() {
            offer(front.stopline_time, EventKind::StopLine);
        }
        if let Some(a) = self.arrivals.get(self.next_arrival) {
            offer(a.time, EventKind::Entry);
        }
        best
    }

    fn on_signal(&mut self, lane: Lane, tau: f64) {
        let i = lane.index();
        let (_, to_red) = self.next_signal[i].expect("signal event was scheduled");
        self.red[i] = to_red;
        if to_red {
            self.next_departure[i] = None;
            if !self.queues[i].is_empty() {
                log::debug!("lane {lane} turned red at {tau} with {} queued", self.queues[i].len());
                self.overflows.push(OverflowEvent {
                    time: tau,
                    lane,
                    residual: self.queues[i].len(),
                });
            }
        } else if !self.queues[i].is_empty() {
            self.next_departure[i] = Some(tau + self.config.saturation_headway);
        }
        self.next_signal[i] = self.config.timing.next_transition(lane, tau);
    }

    fn on_departure(&mut self, lane: Lane, tau: f64) {
        let i = lane.index();
        if let Some(head) = self.queues[i].pop_front() {
            self.exits.push(ExitRecord {
                id: head.id,
                time: tau,
                movement: head.movement,
                lane,
                is_probe: head.is_probe,
            });
        }
        let geometry = self.config.geometry;
        for (k, v) in self.queues[i].iter_mut().enumerate() {
            v.rho = geometry.slot_position(k as u32 + 1);
        }
        self.next_departure[i] = if !self.queues[i].is_empty() && !self.red[i] {
            Some(tau + self.config.saturation_headway)
        } else {
            None
        };
    }

    fn on_stop_line(&mut self, tau: f64) {
        let Moving { mut rec, .. } = self.moving.pop_front().expect("stop-line event was scheduled");
        let i = rec.lane.index();
        if self.red[i] || !self.queues[i].is_empty() {
            rec.v = 0.0;
            rec.rho = self.config.geometry.slot_position(self.queues[i].len() as u32 + 1);
            self.queues[i].push_back(rec);
        } else {
            self.exits.push(ExitRecord {
                id: rec.id,
                time: tau,
                movement: rec.movement,
                lane: rec.lane,
                is_probe: rec.is_probe,
            });
        }
    }

    fn on_entry(&mut self, tau: f64) {
        let a = self.arrivals[self.next_arrival];
        self.next_arrival += 1;
        let stopline_time = tau + self.config.travel_time();
        let alpha = match self.config.policy {
            AssignmentPolicy::AlphaStar => self
                .config
                .timing
                .r_bar(stopline_time)
                .and_then(|r_bar| control::alpha_star(r_bar, &self.ratios).ok())
                .unwrap_or(self.config.demand.alpha()),
            _ => self.config.demand.alpha(),
        };
        let lane = assign_lane_with_draw(
            a.movement,
            (self.queues[0].len(), self.queues[1].len()),
            self.config.policy,
            alpha,
            a.assign_draw,
        );
        let rec = VehicleRecord {
            id: a.id,
            is_probe: a.is_probe,
            lane,
            movement: a.movement,
            rho: self.config.geometry.link_length,
            v: self.config.free_flow_speed,
            entry_time: tau,
        };
        self.entries.push(EntryRecord {
            id: a.id,
            time: tau,
            movement: a.movement,
            lane,
            is_probe: a.is_probe,
        });
        self.moving.push_back(Moving { rec, stopline_time });
    }

    /// Snapshot of every vehicle on the link at the current time.
    pub fn state(&self) -> LinkState {
        let (r_n, r_m) = self.config.timing.red_elapsed_pair(self.time);
        let mut vehicles: Vec<VehicleRecord> = self.queues.iter().flatten().copied().collect();
        let geometry = &self.config.geometry;
        vehicles.extend(self.moving.iter().map(|m| {
            let mut rec = m.rec;
            let travelled = self.config.free_flow_speed * (self.time - rec.entry_time);
            rec.rho = (geometry.link_length - travelled).max(geometry.stop_offset);
            rec
        }));
        LinkState {
            time: self.time,
            vehicles,
            r_n,
            r_m,
        }
    }
}

/// What the RSU sees: queue membership from `(v*, ρ*)`, probe count in the
/// queue, farthest queued probe, and probes anywhere on the link.
pub fn observe(state: &LinkState, geometry: &LinkGeometry) -> ProbeObservation {
    let mut c_p = 0u32;
    let mut max_rho: Option<f64> = None;
    for v in state.queue(geometry).filter(|v| v.is_probe) {
        c_p += 1;
        max_rho = Some(max_rho.map_or(v.rho, |r: f64| r.max(v.rho)));
    }
    ProbeObservation {
        l_p: max_rho.map(|rho| last_probe_location(rho, geometry)),
        c_p,
        x_p: state.probes_on_link(),
        r_n: state.r_n,
        r_m: state.r_m,
        t: state.time,
    }
}

/// Ground truth and observation at one snapshot instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: f64,
    pub r_n: f64,
    pub r_m: f64,
    pub n: u32,
    pub m: u32,
    pub c_p: u32,
    pub l_p: Option<u32>,
    pub x_p: u32,
    pub vehicles_on_link: u32,
    pub entered: u64,
    pub departed: u64,
    pub end_of_red_n: bool,
    pub end_of_red_m: bool,
}

impl TraceRow {
    pub fn observation(&self) -> ProbeObservation {
        ProbeObservation {
            l_p: self.l_p,
            c_p: self.c_p,
            x_p: self.x_p,
            r_n: self.r_n,
            r_m: self.r_m,
            t: self.t,
        }
    }

    pub fn queue(&self, lane: Lane) -> u32 {
        match lane {
            Lane::N => self.n,
            Lane::M => self.m,
        }
    }

    pub fn is_end_of_red(&self, lane: Lane) -> bool {
        match lane {
            Lane::N => self.end_of_red_n,
            Lane::M => self.end_of_red_m,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Trace {
    pub rows: Vec<TraceRow>,
    /// Empty unless [`SimConfig::record_states`] is set.
    pub states: Vec<LinkState>,
    pub entries: Vec<EntryRecord>,
    pub exits: Vec<ExitRecord>,
    pub overflows: Vec<OverflowEvent>,
}

impl Trace {
    /// A lane still held vehicles when its red began at least once.
    pub fn saturated(&self) -> bool {
        !self.overflows.is_empty()
    }

    /// Row taken at exactly `t`, if any.
    pub fn row_at(&self, t: f64) -> Option<&TraceRow> {
        let i = self.rows.partition_point(|r| r.t < t);
        self.rows.get(i).filter(|r| r.t == t)
    }
}

/// Snapshot instants: every sampling period, plus every red start and red
/// end of either lane. Transition instants win over nearby periodic ones.
pub fn snapshot_times(config: &SimConfig) -> Vec<f64> {
    let horizon = config.duration_s;
    let mut times: Vec<(f64, bool)> = Vec::new();
    for lane in Lane::BOTH {
        for (s, e) in config.timing.red_phases(lane, horizon) {
            times.push((s, true));
            times.push((e, true));
        }
        // a red phase cut by the horizon still contributes its start
        let w = config.timing.window(lane);
        let cycles = (horizon / config.timing.cycle_s()).floor();
        let s = cycles * config.timing.cycle_s() + w.start;
        if !w.is_empty() && s <= horizon {
            times.push((s, true));
        }
    }
    let steps = (horizon / config.sample_period).floor() as u64;
    times.extend((0..=steps).map(|k| (k as f64 * config.sample_period, false)));
    times.retain(|&(t, _)| (0.0..=horizon).contains(&t));
    times.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)));

    let mut out: Vec<(f64, bool)> = Vec::with_capacity(times.len());
    for (t, exact) in times {
        match out.last_mut() {
            Some(last) if (t - last.0).abs() < 1e-9 => {
                if exact && !last.1 {
                    *last = (t, exact);
                }
            }
            _ => out.push((t, exact)),
        }
    }
    out.into_iter().map(|(t, _)| t).collect()
}

/// Runs a full simulation and records a row at every snapshot instant.
pub fn run(config: &SimConfig) -> Result<Trace> {
    let sim = Simulator::new(config.clone())?;
    run_with(sim)
}

pub fn run_with(mut sim: Simulator) -> Result<Trace> {
    let config = sim.config.clone();
    let mut trace = Trace::default();
    for t in snapshot_times(&config) {
        sim.advance_to(t);
        let state = sim.state();
        let obs = observe(&state, &config.geometry);
        let (n, m) = state.queue_lengths(&config.geometry);
        trace.rows.push(TraceRow {
            t,
            r_n: state.r_n,
            r_m: state.r_m,
            n,
            m,
            c_p: obs.c_p,
            l_p: obs.l_p,
            x_p: obs.x_p,
            vehicles_on_link: state.vehicles.len() as u32,
            entered: sim.entries.len() as u64,
            departed: sim.exits.len() as u64,
            end_of_red_n: config.timing.is_red_end(Lane::N, t),
            end_of_red_m: config.timing.is_red_end(Lane::M, t),
        });
        if config.record_states {
            trace.states.push(state);
        }
    }
    trace.entries = std::mem::take(&mut sim.entries);
    trace.exits = std::mem::take(&mut sim.exits);
    trace.overflows = std::mem::take(&mut sim.overflows);
    if trace.saturated() {
        log::warn!(
            "seed {}: {} overflow event(s); queues did not clear every cycle",
            config.seed,
            trace.overflows.len()
        );
    }
    Ok(trace)
}

/// Column order of the trace CSV.
pub const TRACE_COLUMNS: [&str; 8] = ["t", "r_N", "r_M", "N", "M", "c_p", "l_p", "x_p"];
/// Column order of the arrival-log CSV.
pub const ARRIVAL_COLUMNS: [&str; 4] = ["t", "movement", "lane", "is_probe"];

/// Writes `t, r_N, r_M, N, M, c_p, l_p, x_p`; `l_p` is empty when no probe
/// is queued.
pub fn write_trace_csv<W: Write>(rows: &[TraceRow], out: W) -> std::result::Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.t.to_string(),
            r.r_n.to_string(),
            r.r_m.to_string(),
            r.n.to_string(),
            r.m.to_string(),
            r.c_p.to_string(),
            r.l_p.map(|l| l.to_string()).unwrap_or_default(),
            r.x_p.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_arrivals_csv<W: Write>(entries: &[EntryRecord], out: W) -> std::result::Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(ARRIVAL_COLUMNS)?;
    for e in entries {
        w.write_record([
            e.time.to_string(),
            e.movement.to_string(),
            e.lane.to_string(),
            u8::from(e.is_probe).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_trace_csv(rows: &[TraceRow], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_trace_csv(rows, file).map_err(|e| Error::csv(path, e))
}

pub fn save_arrivals_csv(entries: &[EntryRecord], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_arrivals_csv(entries, file).map_err(|e| Error::csv(path, e))
}

#[derive(Debug, Deserialize)]
struct TraceCsvRow {
    t: f64,
    #[serde(rename = "r_N")]
    r_n: f64,
    #[serde(rename = "r_M")]
    r_m: f64,
    #[serde(rename = "N")]
    n: u32,
    #[serde(rename = "M")]
    m: u32,
    c_p: u32,
    l_p: Option<u32>,
    x_p: u32,
}

/// Reads a trace CSV back. Columns not in the file (end-of-red flags,
/// counters) are recomputed from `timing` or left at zero.
pub fn load_trace_csv(path: &Path, timing: &SignalTiming) -> Result<Vec<TraceRow>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let mut rows = Vec::new();
    for rec in reader.deserialize::<TraceCsvRow>() {
        let r = rec.map_err(|e| Error::csv(path, e))?;
        rows.push(TraceRow {
            t: r.t,
            r_n: r.r_n,
            r_m: r.r_m,
            n: r.n,
            m: r.m,
            c_p: r.c_p,
            l_p: r.l_p,
            x_p: r.x_p,
            vehicles_on_link: 0,
            entered: 0,
            departed: 0,
            end_of_red_n: timing.is_red_end(Lane::N, r.t),
            end_of_red_m: timing.is_red_end(Lane::M, r.t),
        });
    }
    Ok(rows)
}
