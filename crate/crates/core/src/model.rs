//! Domain types shared by the simulator, the estimators and the control laws.
//!
//! Everything here is an immutable value once constructed. Constructors
//! validate their invariants, so downstream code can assume e.g. that a
//! [`DemandProfile`] always has a positive total rate.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};

/// Tolerance on `l_n + l_m + l_nm = 1`.
pub const TURN_RATIO_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Lane {
    N,
    M,
}

impl Lane {
    pub const BOTH: [Lane; 2] = [Lane::N, Lane::M];

    pub fn index(self) -> usize {
        match self {
            Lane::N => 0,
            Lane::M => 1,
        }
    }

    pub fn other(self) -> Lane {
        match self {
            Lane::N => Lane::M,
            Lane::M => Lane::N,
        }
    }
}

impl fmt::Display for Lane {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Lane::N => "N",
            Lane::M => "M",
        })
    }
}

/// What a vehicle does at the junction. Right turners must use lane N,
/// left turners lane M; straight vehicles may use either.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Movement {
    Right,
    Left,
    Straight,
}

impl Movement {
    pub const ALL: [Movement; 3] = [Movement::Right, Movement::Left, Movement::Straight];

    /// The lane a movement is forced onto, if any.
    pub fn forced_lane(self) -> Option<Lane> {
        match self {
            Movement::Right => Some(Lane::N),
            Movement::Left => Some(Lane::M),
            Movement::Straight => None,
        }
    }
}

impl fmt::Display for Movement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Movement::Right => "right",
            Movement::Left => "left",
            Movement::Straight => "straight",
        })
    }
}

/// Shares of the link inflow turning right, turning left and going straight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TurnRatios {
    l_n: f64,
    l_m: f64,
    l_nm: f64,
}

impl TurnRatios {
    pub fn new(l_n: f64, l_m: f64, l_nm: f64) -> Result<Self> {
        for (name, v) in [("l_n", l_n), ("l_m", l_m), ("l_nm", l_nm)] {
            ensure(v.is_finite() && v >= 0.0, || {
                format!("{name} = {v} must be a finite ratio >= 0")
            })?;
        }
        let sum = l_n + l_m + l_nm;
        ensure((sum - 1.0).abs() <= TURN_RATIO_SUM_TOL, || {
            format!("turn ratios sum to {sum}, expected 1")
        })?;
        Ok(TurnRatios { l_n, l_m, l_nm })
    }

    /// Normalizes non-negative flows (rates or counts) into ratios.
    pub fn from_flows(n: f64, m: f64, nm: f64) -> Result<Self> {
        for (name, v) in [("n", n), ("m", m), ("nm", nm)] {
            ensure(v.is_finite() && v >= 0.0, || format!("flow {name} = {v} must be >= 0"))?;
        }
        let total = n + m + nm;
        if total <= 0.0 {
            return Err(Error::DegenerateDemand("all flows are zero".into()));
        }
        Ok(TurnRatios {
            l_n: n / total,
            l_m: m / total,
            l_nm: nm / total,
        })
    }

    pub fn l_n(&self) -> f64 {
        self.l_n
    }

    pub fn l_m(&self) -> f64 {
        self.l_m
    }

    pub fn l_nm(&self) -> f64 {
        self.l_nm
    }

    /// Per-lane inflow shares `(l_n + (1-α) l_nm, l_m + α l_nm)`.
    pub fn lane_shares(&self, alpha: f64) -> (f64, f64) {
        (self.l_n + (1.0 - alpha) * self.l_nm, self.l_m + alpha * self.l_nm)
    }
}

/// Arrival rates of the three movement flows, probe penetration and the
/// share `alpha` of straight vehicles that pick lane M.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DemandProfile {
    lambda_n: f64,
    lambda_m: f64,
    lambda_nm: f64,
    p: f64,
    alpha: f64,
}

impl DemandProfile {
    pub fn new(lambda_n: f64, lambda_m: f64, lambda_nm: f64, p: f64, alpha: f64) -> Result<Self> {
        for (name, v) in [("lambda_n", lambda_n), ("lambda_m", lambda_m), ("lambda_nm", lambda_nm)] {
            ensure(v.is_finite() && v >= 0.0, || {
                format!("{name} = {v} must be a finite rate >= 0")
            })?;
        }
        ensure(lambda_n + lambda_m + lambda_nm > 0.0, || {
            "total arrival rate must be positive".to_string()
        })?;
        ensure((0.0..=1.0).contains(&p), || format!("p = {p} must lie in [0, 1]"))?;
        ensure((0.0..=1.0).contains(&alpha), || {
            format!("alpha = {alpha} must lie in [0, 1]")
        })?;
        Ok(DemandProfile {
            lambda_n,
            lambda_m,
            lambda_nm,
            p,
            alpha,
        })
    }

    pub fn lambda_n(&self) -> f64 {
        self.lambda_n
    }

    pub fn lambda_m(&self) -> f64 {
        self.lambda_m
    }

    pub fn lambda_nm(&self) -> f64 {
        self.lambda_nm
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Total inflow `λ = λ_n + λ_m + λ_nm`.
    pub fn total(&self) -> f64 {
        self.lambda_n + self.lambda_m + self.lambda_nm
    }

    pub fn rate(&self, movement: Movement) -> f64 {
        match movement {
            Movement::Right => self.lambda_n,
            Movement::Left => self.lambda_m,
            Movement::Straight => self.lambda_nm,
        }
    }

    pub fn turn_ratios(&self) -> TurnRatios {
        let total = self.total();
        TurnRatios {
            l_n: self.lambda_n / total,
            l_m: self.lambda_m / total,
            l_nm: self.lambda_nm / total,
        }
    }

    /// Arrival rate feeding each lane queue under Bernoulli(α) assignment.
    pub fn lane_rates(&self) -> (f64, f64) {
        (
            self.lambda_n + (1.0 - self.alpha) * self.lambda_nm,
            self.lambda_m + self.alpha * self.lambda_nm,
        )
    }

    pub fn with_p(self, p: f64) -> Result<Self> {
        Self::new(self.lambda_n, self.lambda_m, self.lambda_nm, p, self.alpha)
    }

    pub fn with_alpha(self, alpha: f64) -> Result<Self> {
        Self::new(self.lambda_n, self.lambda_m, self.lambda_nm, self.p, alpha)
    }
}

/// Half-open red interval `[start, end)` within one signal cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RedWindow {
    pub start: f64,
    pub end: f64,
}

impl RedWindow {
    pub fn new(start: f64, end: f64) -> Self {
        RedWindow { start, end }
    }

    pub fn len(&self) -> f64 {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

/// Fixed-time signal plan for the two lanes of the link.
///
/// Red state is right-continuous (`[start, end)`), but the reported red
/// elapsed time `r(t)` is taken as a left limit so that a snapshot taken
/// exactly at the end of red reports the full red duration together with
/// the queue that accumulated during it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SignalTiming {
    cycle_s: f64,
    red_n: RedWindow,
    red_m: RedWindow,
}

impl SignalTiming {
    pub fn new(cycle_s: f64, red_n: RedWindow, red_m: RedWindow) -> Result<Self> {
        ensure(cycle_s.is_finite() && cycle_s > 0.0, || {
            format!("cycle length {cycle_s} must be positive")
        })?;
        for (lane, w) in [(Lane::N, red_n), (Lane::M, red_m)] {
            ensure(w.start >= 0.0 && w.start <= w.end && w.end <= cycle_s, || {
                format!(
                    "red window of lane {lane} [{}, {}) must lie inside [0, {cycle_s})",
                    w.start, w.end
                )
            })?;
        }
        Ok(SignalTiming { cycle_s, red_n, red_m })
    }

    /// Both lanes red over `[0, red)` of every cycle.
    pub fn common_red(cycle_s: f64, red: f64) -> Result<Self> {
        let w = RedWindow::new(0.0, red);
        Self::new(cycle_s, w, w)
    }

    pub fn cycle_s(&self) -> f64 {
        self.cycle_s
    }

    pub fn window(&self, lane: Lane) -> RedWindow {
        match lane {
            Lane::N => self.red_n,
            Lane::M => self.red_m,
        }
    }

    /// Longest red duration of a cycle; bounds every `r(t)`.
    pub fn total_red(&self) -> f64 {
        self.red_n.len().max(self.red_m.len())
    }

    fn always_red(&self, lane: Lane) -> bool {
        let w = self.window(lane);
        w.start == 0.0 && w.end == self.cycle_s
    }

    pub fn is_red(&self, lane: Lane, t: f64) -> bool {
        let w = self.window(lane);
        let phase = t.rem_euclid(self.cycle_s);
        w.start <= phase && phase < w.end
    }

    /// Phase in `(0, cycle]` for `t > 0`, so that cycle boundaries belong
    /// to the cycle that ends there.
    fn left_phase(&self, t: f64) -> f64 {
        let phase = t.rem_euclid(self.cycle_s);
        if phase == 0.0 && t > 0.0 {
            self.cycle_s
        } else {
            phase
        }
    }

    /// Time since the start of the current red phase of `lane`, 0 in green.
    pub fn red_elapsed(&self, lane: Lane, t: f64) -> f64 {
        let w = self.window(lane);
        if w.is_empty() {
            return 0.0;
        }
        if self.always_red(lane) {
            return self.left_phase(t);
        }
        let phase = self.left_phase(t);
        if w.start < phase && phase <= w.end {
            phase - w.start
        } else {
            0.0
        }
    }

    /// `(r_N(t), r_M(t))`.
    pub fn red_elapsed_pair(&self, t: f64) -> (f64, f64) {
        (self.red_elapsed(Lane::N, t), self.red_elapsed(Lane::M, t))
    }

    /// True when `t` is the instant a red phase of `lane` ends.
    pub fn is_red_end(&self, lane: Lane, t: f64) -> bool {
        let w = self.window(lane);
        t > 0.0 && !w.is_empty() && self.left_phase(t) == w.end
    }

    /// Red-time ratio `r_N / r_M`; `None` when both lanes are green and
    /// `+∞` when only lane N is red.
    pub fn r_bar(&self, t: f64) -> Option<f64> {
        ratio_of_reds(self.red_elapsed(Lane::N, t), self.red_elapsed(Lane::M, t))
    }

    /// Next red-start (`true`) or red-end (`false`) of `lane` strictly after `after`.
    pub fn next_transition(&self, lane: Lane, after: f64) -> Option<(f64, bool)> {
        let w = self.window(lane);
        if w.is_empty() || self.always_red(lane) {
            return None;
        }
        let k = (after / self.cycle_s).floor();
        let mut best: Option<(f64, bool)> = None;
        for j in [k - 1.0, k, k + 1.0] {
            let base = j * self.cycle_s;
            for (tau, to_red) in [(base + w.start, true), (base + w.end, false)] {
                if tau > after && best.is_none_or(|(b, _)| tau < b) {
                    best = Some((tau, to_red));
                }
            }
        }
        best
    }

    /// Start and end instants of every red phase of `lane` ending by `horizon`.
    pub fn red_phases(&self, lane: Lane, horizon: f64) -> Vec<(f64, f64)> {
        let w = self.window(lane);
        if w.is_empty() {
            return Vec::new();
        }
        let mut out = Vec::new();
        let mut k = 0.0;
        loop {
            let base = k * self.cycle_s;
            let (s, e) = (base + w.start, base + w.end);
            if e > horizon {
                break;
            }
            out.push((s, e));
            k += 1.0;
        }
        out
    }

    /// Intervals where both lanes are red, ending by `horizon`.
    pub fn common_red_phases(&self, horizon: f64) -> Vec<(f64, f64)> {
        let (a, b) = (self.red_n, self.red_m);
        let start = a.start.max(b.start);
        let end = a.end.min(b.end);
        if end <= start {
            return Vec::new();
        }
        let mut out = Vec::new();
        let mut k = 0.0;
        loop {
            let base = k * self.cycle_s;
            if base + end > horizon {
                break;
            }
            out.push((base + start, base + end));
            k += 1.0;
        }
        out
    }
}

pub(crate) fn ratio_of_reds(r_n: f64, r_m: f64) -> Option<f64> {
    if r_n <= 0.0 && r_m <= 0.0 {
        None
    } else if r_m <= 0.0 {
        Some(f64::INFINITY)
    } else {
        Some(r_n / r_m)
    }
}

/// Static description of the approach: vehicle footprint, RSU offset and
/// the thresholds `(v*, ρ*)` that define queue membership.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkGeometry {
    /// `L_V`, metres per vehicle.
    pub vehicle_length: f64,
    /// `G_V`, minimum gap in metres.
    pub gap: f64,
    /// `ρ_0`, distance from the RSU to the stop line.
    pub stop_offset: f64,
    pub link_length: f64,
    /// `v*`: vehicles slower than this are queued.
    pub speed_threshold: f64,
    /// `ρ*`: vehicles farther than this are never counted as queued.
    pub distance_threshold: f64,
}

impl Default for LinkGeometry {
    fn default() -> Self {
        LinkGeometry {
            vehicle_length: 5.0,
            gap: 2.5,
            stop_offset: 10.0,
            link_length: 300.0,
            speed_threshold: 0.1,
            distance_threshold: 300.0,
        }
    }
}

impl LinkGeometry {
    pub fn validate(&self) -> Result<()> {
        ensure(self.vehicle_length > 0.0, || "vehicle length L_V must be > 0".into())?;
        ensure(self.gap >= 0.0, || "gap G_V must be >= 0".into())?;
        ensure(
            0.0 <= self.stop_offset
                && self.stop_offset < self.distance_threshold
                && self.distance_threshold <= self.link_length,
            || {
                format!(
                    "need 0 <= rho_0 ({}) < rho* ({}) <= link length ({})",
                    self.stop_offset, self.distance_threshold, self.link_length
                )
            },
        )?;
        ensure(self.speed_threshold > 0.0, || "speed threshold v* must be > 0".into())
    }

    /// Distance to the stop line of the k-th queued vehicle (1-based),
    /// `ρ_0 + k L_V + (k-1) G_V`.
    pub fn slot_position(&self, k: u32) -> f64 {
        let k = f64::from(k.max(1));
        self.stop_offset + k * self.vehicle_length + (k - 1.0) * self.gap
    }

    pub fn is_queued(&self, v: f64, rho: f64) -> bool {
        v < self.speed_threshold && rho < self.distance_threshold
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleRecord {
    pub id: u64,
    pub is_probe: bool,
    pub lane: Lane,
    pub movement: Movement,
    /// Distance to the stop line (m).
    pub rho: f64,
    /// Speed (m/s).
    pub v: f64,
    pub entry_time: f64,
}

/// Everything on the link at one instant.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinkState {
    pub time: f64,
    pub vehicles: Vec<VehicleRecord>,
    pub r_n: f64,
    pub r_m: f64,
}

impl LinkState {
    pub fn empty(time: f64) -> Self {
        LinkState {
            time,
            vehicles: Vec::new(),
            r_n: 0.0,
            r_m: 0.0,
        }
    }

    /// Members of `Q(t, v*, ρ*)`.
    pub fn queue<'a>(&'a self, geometry: &'a LinkGeometry) -> impl Iterator<Item = &'a VehicleRecord> + 'a {
        self.vehicles.iter().filter(move |v| geometry.is_queued(v.v, v.rho))
    }

    /// Ground-truth `(N^t, M^t)`.
    pub fn queue_lengths(&self, geometry: &LinkGeometry) -> (u32, u32) {
        self.queue(geometry).fold((0, 0), |(n, m), v| match v.lane {
            Lane::N => (n + 1, m),
            Lane::M => (n, m + 1),
        })
    }

    /// `x_p(t)`: probes anywhere on the link.
    pub fn probes_on_link(&self) -> u32 {
        self.vehicles.iter().filter(|v| v.is_probe).count() as u32
    }
}

/// What the RSU can infer from probe reports at one instant. Probe lanes
/// are deliberately absent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeObservation {
    /// Queue position of the farthest queued probe; `None` when `c_p = 0`.
    pub l_p: Option<u32>,
    pub c_p: u32,
    pub x_p: u32,
    pub r_n: f64,
    pub r_m: f64,
    pub t: f64,
}

/// Probabilities over queue-length pairs `(n, m)`, `0 <= n, m <= n_max`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JointQueueDistribution {
    pub(crate) grid: Vec<f64>,
    pub(crate) n_max: usize,
    pub(crate) mu_n: f64,
    pub(crate) mu_m: f64,
}

impl JointQueueDistribution {
    /// Builds a distribution from a row-major `(n_max+1)²` grid.
    pub fn from_grid(grid: Vec<f64>, n_max: usize, mu_n: f64, mu_m: f64) -> Result<Self> {
        ensure(grid.len() == (n_max + 1) * (n_max + 1), || {
            format!("grid has {} cells, expected {}", grid.len(), (n_max + 1) * (n_max + 1))
        })?;
        ensure(grid.iter().all(|&x| x.is_finite() && x >= 0.0), || {
            "grid entries must be finite and >= 0".into()
        })?;
        Ok(JointQueueDistribution {
            grid,
            n_max,
            mu_n,
            mu_m,
        })
    }

    /// Unit mass on a single cell.
    pub fn point_mass(n: usize, m: usize, n_max: usize) -> Result<Self> {
        ensure(n <= n_max && m <= n_max, || {
            format!("({n}, {m}) outside grid of size {n_max}")
        })?;
        let side = n_max + 1;
        let mut grid = vec![0.0; side * side];
        grid[n * side + m] = 1.0;
        Self::from_grid(grid, n_max, n as f64, m as f64)
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn mu_n(&self) -> f64 {
        self.mu_n
    }

    pub fn mu_m(&self) -> f64 {
        self.mu_m
    }

    pub fn get(&self, n: usize, m: usize) -> f64 {
        if n > self.n_max || m > self.n_max {
            return 0.0;
        }
        self.grid[n * (self.n_max + 1) + m]
    }

    pub fn row(&self, n: usize) -> &[f64] {
        let side = self.n_max + 1;
        &self.grid[n * side..(n + 1) * side]
    }

    pub fn cells(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let side = self.n_max + 1;
        self.grid.iter().enumerate().map(move |(i, &p)| (i / side, i % side, p))
    }

    pub fn total_mass(&self) -> f64 {
        self.grid.iter().sum()
    }
}

/// Expected arrivals on each lane since the start of its red phase,
/// `μ_N = r_N (λ_n + (1-α) λ_nm)` and `μ_M = r_M (λ_m + α λ_nm)`.
pub fn mu_rates(demand: &DemandProfile, r_n: f64, r_m: f64) -> (f64, f64) {
    let (rate_n, rate_m) = demand.lane_rates();
    (r_n * rate_n, r_m * rate_m)
}

/// `min(μ_N, μ_M) / max(μ_N, μ_M)`.
pub fn kappa(demand: &DemandProfile, r_n: f64, r_m: f64) -> Result<f64> {
    let (mu_n, mu_m) = mu_rates(demand, r_n, r_m);
    kappa_from_mu(mu_n, mu_m)
}

/// κ from turn ratios alone; the total flow cancels.
pub fn kappa_from_ratios(ratios: &TurnRatios, alpha: f64, r_n: f64, r_m: f64) -> Result<f64> {
    let (s_n, s_m) = ratios.lane_shares(alpha);
    kappa_from_mu(r_n * s_n, r_m * s_m)
}

pub fn kappa_from_mu(mu_n: f64, mu_m: f64) -> Result<f64> {
    let hi = mu_n.max(mu_m);
    if !(hi > 0.0) {
        return Err(Error::DegenerateDemand(format!(
            "kappa undefined for mu_N = {mu_n}, mu_M = {mu_m}"
        )));
    }
    Ok(mu_n.min(mu_m) / hi)
}
