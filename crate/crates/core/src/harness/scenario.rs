//! Scenario definitions, TOML config loading and built-in presets.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::control::{alpha_star, interval_i, BalanceInterval};
use crate::error::{ensure, Error, Result};
use crate::model::{DemandProfile, LinkGeometry, RedWindow, SignalTiming, TurnRatios};
use crate::sim::{
    AssignmentPolicy, SimConfig, DEFAULT_FREE_FLOW_SPEED, DEFAULT_SAMPLE_PERIOD, DEFAULT_SATURATION_HEADWAY,
};

pub const DEFAULT_SEED_COUNT: u64 = 10;
pub const DEFAULT_P_SWEEP: [f64; 7] = [0.05, 0.10, 0.15, 0.20, 0.50, 0.70, 0.90];
pub const TABLE_PERIOD_S: f64 = 1200.0;
pub const TABLE_CYCLE_S: f64 = 90.0;
pub const TABLE_RED_S: f64 = 45.0;

/// Arrival rates in veh/s and the straight-flow share sent to lane M.
/// Unlike [`DemandProfile`], all-zero rates are allowed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScenarioDemand {
    pub lambda_n: f64,
    pub lambda_m: f64,
    pub lambda_nm: f64,
    pub alpha: f64,
}

impl ScenarioDemand {
    pub fn total(&self) -> f64 {
        self.lambda_n + self.lambda_m + self.lambda_nm
    }

    pub fn is_idle(&self) -> bool {
        self.total() == 0.0
    }

    /// Rates into lanes N and M.
    pub fn lane_rates(&self) -> (f64, f64) {
        (
            self.lambda_n + (1.0 - self.alpha) * self.lambda_nm,
            self.lambda_m + self.alpha * self.lambda_nm,
        )
    }

    pub fn turn_ratios(&self) -> Result<TurnRatios> {
        TurnRatios::from_flows(self.lambda_n, self.lambda_m, self.lambda_nm)
    }

    /// `None` for an idle demand.
    pub fn profile(&self, p: f64) -> Result<Option<DemandProfile>> {
        if self.is_idle() {
            return Ok(None);
        }
        DemandProfile::new(self.lambda_n, self.lambda_m, self.lambda_nm, p, self.alpha).map(Some)
    }
}

/// Simulator knobs that are not part of the demand or geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSettings {
    pub free_flow_speed: f64,
    pub saturation_headway: f64,
    pub sample_period: f64,
    pub policy: AssignmentPolicy,
}

impl Default for SimSettings {
    fn default() -> Self {
        SimSettings {
            free_flow_speed: DEFAULT_FREE_FLOW_SPEED,
            saturation_headway: DEFAULT_SATURATION_HEADWAY,
            sample_period: DEFAULT_SAMPLE_PERIOD,
            policy: AssignmentPolicy::BernoulliAlpha,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scenario {
    pub name: String,
    pub demand: ScenarioDemand,
    pub timing: SignalTiming,
    pub geometry: LinkGeometry,
    pub sim: SimSettings,
    pub p_sweep: Vec<f64>,
    pub seeds: Vec<u64>,
    pub duration_s: f64,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        ensure(!self.p_sweep.is_empty(), || {
            format!("scenario {}: empty p_sweep", self.name)
        })?;
        ensure(!self.seeds.is_empty(), || {
            format!("scenario {}: empty seed list", self.name)
        })?;
        ensure(self.duration_s.is_finite() && self.duration_s > 0.0, || {
            format!("scenario {}: duration must be > 0", self.name)
        })?;
        ensure(self.p_sweep.iter().all(|p| (0.0..=1.0).contains(p)), || {
            format!("scenario {}: every p must lie in [0, 1]", self.name)
        })?;
        let d = self.demand;
        ensure(
            [d.lambda_n, d.lambda_m, d.lambda_nm]
                .iter()
                .all(|v| v.is_finite() && *v >= 0.0),
            || format!("scenario {}: rates must be finite and >= 0", self.name),
        )?;
        ensure((0.0..=1.0).contains(&d.alpha), || {
            format!("scenario {}: alpha outside [0, 1]", self.name)
        })?;
        self.geometry.validate()
    }

    /// Simulator config for one grid point. Idle demand gets a placeholder
    /// profile; the caller must then replay an empty arrival log.
    pub fn sim_config(&self, p: f64, seed: u64) -> Result<SimConfig> {
        let demand = match self.demand.profile(p)? {
            Some(d) => d,
            None => DemandProfile::new(1.0, 0.0, 0.0, p, self.demand.alpha)?,
        };
        let mut cfg = SimConfig::new(demand, self.timing, self.duration_s, seed);
        cfg.geometry = self.geometry;
        cfg.policy = self.sim.policy;
        cfg.free_flow_speed = self.sim.free_flow_speed;
        cfg.saturation_headway = self.sim.saturation_headway;
        cfg.sample_period = self.sim.sample_period;
        cfg.record_states = false;
        cfg.validate()?;
        Ok(cfg)
    }

    /// `α*(1)`, or `None` without common flow.
    pub fn alpha_star_equal_red(&self) -> Option<f64> {
        self.demand.turn_ratios().ok().and_then(|t| alpha_star(1.0, &t).ok())
    }

    pub fn balance_interval(&self) -> Option<BalanceInterval> {
        self.demand.turn_ratios().ok().and_then(|t| interval_i(&t).ok())
    }
}

/// `(name, λ_nm, λ_m, λ_n)` in vehicles per 1200 s and the published `α*(1)`.
pub const REFERENCE_SCENARIOS: [(&str, f64, f64, f64, f64); 5] = [
    ("S1", 125.0, 200.0, 100.0, 0.1),
    ("S2", 100.0, 125.0, 75.0, 0.25),
    ("S3", 50.0, 200.0, 200.0, 0.5),
    ("S4", 100.0, 75.0, 125.0, 0.75),
    ("S5", 125.0, 100.0, 200.0, 0.9),
];

/// The five equal-red scenarios, 90 s cycle, both lanes red over `[0, 45)`,
/// 1200 s, `α = α*(1)`.
pub fn reference_scenarios() -> Vec<Scenario> {
    REFERENCE_SCENARIOS
        .iter()
        .map(|&(name, nm, m, n, _)| {
            let (lambda_n, lambda_m, lambda_nm) = (n / TABLE_PERIOD_S, m / TABLE_PERIOD_S, nm / TABLE_PERIOD_S);
            let ratios = TurnRatios::from_flows(lambda_n, lambda_m, lambda_nm).expect("positive flows");
            Scenario {
                name: name.to_string(),
                demand: ScenarioDemand {
                    lambda_n,
                    lambda_m,
                    lambda_nm,
                    alpha: alpha_star(1.0, &ratios).expect("common flow present"),
                },
                timing: SignalTiming::common_red(TABLE_CYCLE_S, TABLE_RED_S).expect("valid timing"),
                geometry: LinkGeometry::default(),
                sim: SimSettings::default(),
                p_sweep: DEFAULT_P_SWEEP.to_vec(),
                seeds: (0..DEFAULT_SEED_COUNT).collect(),
                duration_s: TABLE_PERIOD_S,
            }
        })
        .collect()
}

/// Heat-map example: `λ = (1/6, 1/12, 1/24)`, `α = 1`, 41 s of red on both
/// lanes, `p = 0.55`, `c_p = 8`, `l_p = 9`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosteriorPreset {
    pub demand: DemandProfile,
    pub r: f64,
    pub c_p: u32,
    pub l_p: u32,
}

pub fn posterior_preset() -> PosteriorPreset {
    PosteriorPreset {
        demand: DemandProfile::new(1.0 / 6.0, 1.0 / 12.0, 1.0 / 24.0, 0.55, 1.0).expect("valid preset"),
        r: 41.0,
        c_p: 8,
        l_p: 9,
    }
}

/// Offset-phase example: equal flows of 0.17 veh/s, 90 s cycle, lane N red
/// over `[4, 49)`, lane M red over `[12, 49)`.
pub fn offset_phase_preset() -> (TurnRatios, SignalTiming) {
    let ratios = TurnRatios::from_flows(0.17, 0.17, 0.17).expect("positive flows");
    let timing = SignalTiming::new(90.0, RedWindow::new(4.0, 49.0), RedWindow::new(12.0, 49.0)).expect("valid timing");
    (ratios, timing)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    #[serde(default)]
    scenario: Vec<ScenarioToml>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioToml {
    name: String,
    demand: DemandToml,
    timing: TimingToml,
    #[serde(default)]
    geometry: Option<GeometryToml>,
    #[serde(default)]
    sim: SimSettings,
    #[serde(default)]
    p_sweep: Option<Vec<f64>>,
    #[serde(default)]
    seeds: Option<SeedsToml>,
    #[serde(default)]
    duration_s: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DemandToml {
    n: f64,
    m: f64,
    nm: f64,
    /// Counts above are per this many seconds; 1 means veh/s.
    #[serde(default = "one")]
    per_seconds: f64,
    #[serde(default)]
    alpha: Option<AlphaToml>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum AlphaToml {
    Value(f64),
    Keyword(String),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TimingToml {
    cycle_s: f64,
    red_n: [f64; 2],
    red_m: [f64; 2],
}

/// Any subset of the geometry fields; the rest keep their defaults.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct GeometryToml {
    vehicle_length: Option<f64>,
    gap: Option<f64>,
    stop_offset: Option<f64>,
    link_length: Option<f64>,
    speed_threshold: Option<f64>,
    distance_threshold: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum SeedsToml {
    Count(u64),
    List(Vec<u64>),
}

impl ScenarioToml {
    fn into_scenario(self) -> Result<Scenario> {
        let ctx = |msg: String| Error::Config(format!("scenario {}: {msg}", self.name));
        let d = &self.demand;
        if !(d.per_seconds > 0.0) {
            return Err(ctx("demand.per_seconds must be > 0".into()));
        }
        let timing = SignalTiming::new(
            self.timing.cycle_s,
            RedWindow::new(self.timing.red_n[0], self.timing.red_n[1]),
            RedWindow::new(self.timing.red_m[0], self.timing.red_m[1]),
        )
        .map_err(|e| ctx(e.to_string()))?;
        let (lambda_n, lambda_m, lambda_nm) = (d.n / d.per_seconds, d.m / d.per_seconds, d.nm / d.per_seconds);
        let alpha = match &d.alpha {
            None => 0.5,
            Some(AlphaToml::Value(a)) => *a,
            Some(AlphaToml::Keyword(k)) if k == "balanced" => {
                balanced_alpha(lambda_n, lambda_m, lambda_nm, &timing).map_err(|e| ctx(e.to_string()))?
            }
            Some(AlphaToml::Keyword(k)) => {
                return Err(ctx(format!("alpha must be a number or \"balanced\", got {k:?}")));
            }
        };
        let mut geometry = LinkGeometry::default();
        if let Some(g) = self.geometry {
            geometry.vehicle_length = g.vehicle_length.unwrap_or(geometry.vehicle_length);
            geometry.gap = g.gap.unwrap_or(geometry.gap);
            geometry.stop_offset = g.stop_offset.unwrap_or(geometry.stop_offset);
            geometry.link_length = g.link_length.unwrap_or(geometry.link_length);
            geometry.speed_threshold = g.speed_threshold.unwrap_or(geometry.speed_threshold);
            // ρ* follows the link length unless set
            geometry.distance_threshold = g.distance_threshold.unwrap_or(geometry.link_length);
        }
        let seeds = match self.seeds {
            None => (0..DEFAULT_SEED_COUNT).collect(),
            Some(SeedsToml::Count(k)) => (0..k).collect(),
            Some(SeedsToml::List(v)) => v,
        };
        let scenario = Scenario {
            name: self.name.clone(),
            demand: ScenarioDemand {
                lambda_n,
                lambda_m,
                lambda_nm,
                alpha,
            },
            timing,
            geometry,
            sim: self.sim,
            p_sweep: self.p_sweep.unwrap_or_else(|| DEFAULT_P_SWEEP.to_vec()),
            seeds,
            duration_s: self.duration_s.unwrap_or(TABLE_PERIOD_S),
        };
        scenario.validate().map_err(|e| ctx(e.to_string()))?;
        Ok(scenario)
    }
}

/// `α*` at the ratio of the two red durations; 0.5 without common flow.
fn balanced_alpha(lambda_n: f64, lambda_m: f64, lambda_nm: f64, timing: &SignalTiming) -> Result<f64> {
    if lambda_nm == 0.0 {
        return Ok(0.5);
    }
    let ratios = TurnRatios::from_flows(lambda_n, lambda_m, lambda_nm)?;
    let (red_n, red_m) = (timing.window(crate::Lane::N).len(), timing.window(crate::Lane::M).len());
    let r_bar = crate::model::ratio_of_reds(red_n, red_m).unwrap_or(1.0);
    alpha_star(r_bar, &ratios)
}

pub fn parse_scenarios(text: &str) -> Result<Vec<Scenario>> {
    let file: ConfigFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    if file.scenario.is_empty() {
        return Err(Error::Config("no [[scenario]] tables found".into()));
    }
    file.scenario.into_iter().map(ScenarioToml::into_scenario).collect()
}

pub fn load_scenarios(path: &Path) -> Result<Vec<Scenario>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_scenarios(&text).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// One row of the equal-red assignment table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlphaRow {
    pub scenario: String,
    /// Vehicles per 1200 s.
    pub lambda_nm: f64,
    pub lambda_m: f64,
    pub lambda_n: f64,
    pub alpha_star: Option<f64>,
    /// Published value for the named reference scenarios.
    pub published: Option<f64>,
}

/// `α*(1)` for each scenario next to the published value when the name
/// matches a reference scenario.
pub fn reproduce_alpha_table(scenarios: &[Scenario]) -> Vec<AlphaRow> {
    scenarios
        .iter()
        .map(|s| AlphaRow {
            scenario: s.name.clone(),
            lambda_nm: s.demand.lambda_nm * TABLE_PERIOD_S,
            lambda_m: s.demand.lambda_m * TABLE_PERIOD_S,
            lambda_n: s.demand.lambda_n * TABLE_PERIOD_S,
            alpha_star: s.alpha_star_equal_red(),
            published: REFERENCE_SCENARIOS.iter().find(|r| r.0 == s.name).map(|r| r.4),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn reference_alphas() {
        for row in reproduce_alpha_table(&reference_scenarios()) {
            assert_abs_diff_eq!(row.alpha_star.unwrap(), row.published.unwrap(), epsilon = 1e-12);
        }
    }

    #[test]
    fn parses_minimal_and_full_configs() {
        let text = r#"
            [[scenario]]
            name = "a"
            demand = { n = 100, m = 200, nm = 125, per_seconds = 1200, alpha = "balanced" }
            timing = { cycle_s = 90, red_n = [0, 45], red_m = [0, 45] }

            [[scenario]]
            name = "b"
            demand = { n = 0.1, m = 0.1, nm = 0.0, alpha = 0.3 }
            timing = { cycle_s = 60, red_n = [0, 30], red_m = [5, 30] }
            geometry = { link_length = 400 }
            sim = { saturation_headway = 1.8, policy = "shortest_queue" }
            p_sweep = [0.5]
            seeds = [3, 4]
            duration_s = 600
        "#;
        let s = parse_scenarios(text).unwrap();
        assert_eq!(s.len(), 2);
        assert_abs_diff_eq!(s[0].demand.alpha, 0.1, epsilon = 1e-12);
        assert_eq!(s[0].seeds.len(), 10);
        assert_eq!(s[0].p_sweep, DEFAULT_P_SWEEP.to_vec());
        assert_eq!(s[1].geometry.distance_threshold, 400.0);
        assert_eq!(s[1].sim.policy, AssignmentPolicy::ShortestQueue);
        assert_eq!(s[1].seeds, vec![3, 4]);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(parse_scenarios("").is_err());
        let bad_alpha = r#"
            [[scenario]]
            name = "x"
            demand = { n = 1, m = 1, nm = 1, alpha = "greedy" }
            timing = { cycle_s = 90, red_n = [0, 45], red_m = [0, 45] }
        "#;
        assert!(matches!(parse_scenarios(bad_alpha), Err(Error::Config(_))));
        let bad_window = r#"
            [[scenario]]
            name = "x"
            demand = { n = 1, m = 1, nm = 1 }
            timing = { cycle_s = 90, red_n = [0, 95], red_m = [0, 45] }
        "#;
        assert!(parse_scenarios(bad_window).is_err());
    }

    #[test]
    fn idle_demand_has_no_profile() {
        let mut s = reference_scenarios().remove(0);
        s.demand = ScenarioDemand {
            lambda_n: 0.0,
            lambda_m: 0.0,
            lambda_nm: 0.0,
            alpha: 0.5,
        };
        assert!(s.demand.profile(0.5).unwrap().is_none());
        assert!(s.sim_config(0.5, 1).is_ok());
    }
}
