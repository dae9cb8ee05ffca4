//! Estimator evaluation against simulator ground truth.

use std::collections::HashMap;
use std::fmt;

use rayon::prelude::*;
use serde::Serialize;

use crate::bayes::{expected_queue_lengths, lp_point_estimate, posterior_joint, prior_point_estimate, PosteriorInput};
use crate::control::BalanceInterval;
use crate::error::{Error, Result};
use crate::estimators::{estimate_p_two_lane, LambdaAccumulator, LambdaWindow};
use crate::model::{kappa_from_mu, Lane};
use crate::sim::{self, Simulator, Trace, TraceRow};

use super::scenario::Scenario;

/// Seconds of the per-run time series kept for plotting.
pub const SERIES_HORIZON_S: f64 = 450.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum QueueEstimator {
    /// Posterior mean given `(l_p, c_p)`.
    P2,
    /// Prior mean `(μ_N, μ_M)`.
    P1,
    /// `(l_p, κ l_p)` mapped onto lanes by the larger `μ`.
    Lp,
}

impl QueueEstimator {
    pub const ALL: [QueueEstimator; 3] = [QueueEstimator::P2, QueueEstimator::P1, QueueEstimator::Lp];

    pub fn label(self) -> &'static str {
        match self {
            QueueEstimator::P2 => "P2",
            QueueEstimator::P1 => "P1",
            QueueEstimator::Lp => "l_p",
        }
    }
}

impl fmt::Display for QueueEstimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// `(N̂, M̂)` from each estimator at one snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RowEstimates {
    pub mu_n: f64,
    pub mu_m: f64,
    /// `None` when both `μ` vanish.
    pub kappa: Option<f64>,
    pub p2: (f64, f64),
    pub p1: (f64, f64),
    pub lp: (f64, f64),
    /// P2 had no probe data (or an inconsistent observation) and returned P1.
    pub p2_fallback: bool,
}

impl RowEstimates {
    pub fn get(&self, estimator: QueueEstimator) -> (f64, f64) {
        match estimator {
            QueueEstimator::P2 => self.p2,
            QueueEstimator::P1 => self.p1,
            QueueEstimator::Lp => self.lp,
        }
    }
}

/// Computes all three estimators for trace rows of one run. Posterior
/// means are cached by `(r_N, r_M, l_p, c_p)`.
/// `(r_N bits, r_M bits, l_p, c_p)`.
type PosteriorKey = (u64, u64, u32, u32);

#[derive(Debug, Clone)]
pub struct RowEstimator {
    rate_n: f64,
    rate_m: f64,
    p: f64,
    cache: HashMap<PosteriorKey, Option<(f64, f64)>>,
}

impl RowEstimator {
    /// `rate_n`, `rate_m` are lane arrival rates in veh/s.
    pub fn new(rate_n: f64, rate_m: f64, p: f64) -> Self {
        RowEstimator {
            rate_n,
            rate_m,
            p,
            cache: HashMap::new(),
        }
    }

    pub fn estimate(&mut self, row: &TraceRow) -> Result<RowEstimates> {
        let (mu_n, mu_m) = (row.r_n * self.rate_n, row.r_m * self.rate_m);
        let p1 = prior_point_estimate(mu_n, mu_m);
        let kappa = kappa_from_mu(mu_n, mu_m).ok();

        let (p2, p2_fallback) = match row.l_p {
            Some(l_p) if row.c_p > 0 && self.p > 0.0 => match self.posterior_mean(row, l_p)? {
                Some(mean) => (mean, false),
                None => (p1, true),
            },
            _ => (p1, true),
        };

        let lp = match (row.l_p, kappa) {
            (Some(l_p), Some(k)) => {
                let (hi, lo) = lp_point_estimate(l_p, k)?;
                if mu_n >= mu_m {
                    (hi, lo)
                } else {
                    (lo, hi)
                }
            }
            (Some(l_p), None) => (f64::from(l_p), 0.0),
            (None, _) => (0.0, 0.0),
        };

        Ok(RowEstimates {
            mu_n,
            mu_m,
            kappa,
            p2,
            p1,
            lp,
            p2_fallback,
        })
    }

    fn posterior_mean(&mut self, row: &TraceRow, l_p: u32) -> Result<Option<(f64, f64)>> {
        let key = (row.r_n.to_bits(), row.r_m.to_bits(), l_p, row.c_p);
        if let Some(hit) = self.cache.get(&key) {
            return Ok(*hit);
        }
        let (mu_n, mu_m) = (row.r_n * self.rate_n, row.r_m * self.rate_m);
        let input = PosteriorInput::new(mu_n, mu_m, self.p, l_p, row.c_p)?;
        let value = match posterior_joint(&input) {
            Ok(d) => Some(expected_queue_lengths(&d)),
            Err(Error::InfeasibleObservation(msg)) => {
                log::debug!("posterior fallback at t = {}: {msg}", row.t);
                None
            }
            Err(e) => return Err(e),
        };
        self.cache.insert(key, value);
        Ok(value)
    }
}

/// Rows used for error metrics: both lanes in red.
pub fn is_evaluation_row(row: &TraceRow) -> bool {
    row.r_n > 0.0 && row.r_m > 0.0
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
struct LaneAccum {
    abs_err: [f64; 3],
    evaluated: usize,
    ape_sum: f64,
    ape_count: usize,
    queue_sum: f64,
    queue_count: usize,
    queue_max: u32,
    p2_fallbacks: usize,
}

/// One plotted instant of the time series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeriesPoint {
    pub t: f64,
    pub truth: (u32, u32),
    /// `None` outside evaluation rows.
    pub estimates: Option<RowEstimates>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesSample {
    pub p: f64,
    pub seed: u64,
    pub points: Vec<SeriesPoint>,
}

/// Outcome of one `(scenario, p, seed)` grid point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub p: f64,
    pub seed: u64,
    /// Mean usable two-lane `p̂` over end-of-red snapshots.
    pub p_hat_mean: Option<f64>,
    pub p_hat_samples: usize,
    /// Pooled over all-red windows.
    pub lambda_hat: Option<f64>,
    pub lambda_true: f64,
    pub overflow_events: usize,
    #[serde(skip)]
    lanes: [LaneAccum; 2],
}

impl RunSummary {
    pub fn saturated(&self) -> bool {
        self.overflow_events > 0
    }

    /// Mean absolute error of one estimator on one lane; `None` without
    /// evaluation rows.
    pub fn mae(&self, lane: Lane, estimator: QueueEstimator) -> Option<f64> {
        let a = &self.lanes[lane.index()];
        (a.evaluated > 0).then(|| a.abs_err[estimator as usize] / a.evaluated as f64)
    }

    /// End-of-red MAPE of P2 in percent.
    pub fn mape_p2(&self, lane: Lane) -> Option<f64> {
        let a = &self.lanes[lane.index()];
        (a.ape_count > 0).then(|| 100.0 * a.ape_sum / a.ape_count as f64)
    }
}

/// Seed-averaged metrics for one `(p, lane)` cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LaneMetrics {
    pub p: f64,
    pub lane: Lane,
    pub mae_p2: f64,
    pub mae_p1: f64,
    pub mae_lp: f64,
    /// Percent; `None` when no end-of-red snapshot had a nonzero queue.
    pub mape_p2: Option<f64>,
    pub avg_queue: f64,
    pub max_queue: f64,
    pub saturated_runs: usize,
    pub seeds: usize,
    pub evaluated_rows: usize,
    pub p2_fallbacks: usize,
}

impl LaneMetrics {
    pub fn mae(&self, estimator: QueueEstimator) -> f64 {
        match estimator {
            QueueEstimator::P2 => self.mae_p2,
            QueueEstimator::P1 => self.mae_p1,
            QueueEstimator::Lp => self.mae_lp,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioReport {
    pub name: String,
    pub alpha: f64,
    pub alpha_star_equal_red: Option<f64>,
    pub interval: Option<BalanceInterval>,
    /// Ordered by p, then lane N before M.
    pub lanes: Vec<LaneMetrics>,
    /// Ordered by p, then seed.
    pub runs: Vec<RunSummary>,
    pub series: Option<SeriesSample>,
}

impl ScenarioReport {
    pub fn cell(&self, p: f64, lane: Lane) -> Option<&LaneMetrics> {
        self.lanes.iter().find(|m| m.p == p && m.lane == lane)
    }

    /// MAE averaged over the two lanes.
    pub fn mae_combined(&self, p: f64, estimator: QueueEstimator) -> Option<f64> {
        let n = self.cell(p, Lane::N)?.mae(estimator);
        let m = self.cell(p, Lane::M)?.mae(estimator);
        Some(0.5 * (n + m))
    }

    pub fn p_values(&self) -> Vec<f64> {
        let mut ps: Vec<f64> = Vec::new();
        for m in &self.lanes {
            if !ps.contains(&m.p) {
                ps.push(m.p);
            }
        }
        ps
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct MetricReport {
    pub scenarios: Vec<ScenarioReport>,
}

impl MetricReport {
    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }

    pub fn scenario(&self, name: &str) -> Option<&ScenarioReport> {
        self.scenarios.iter().find(|s| s.name == name)
    }
}

/// Simulates and scores one grid point.
pub fn run_one(scenario: &Scenario, p: f64, seed: u64, keep_series: bool) -> Result<RunSummary> {
    simulate_and_score(scenario, p, seed, keep_series).map(|(summary, _)| summary)
}

fn simulate_and_score(
    scenario: &Scenario,
    p: f64,
    seed: u64,
    keep_series: bool,
) -> Result<(RunSummary, Option<SeriesSample>)> {
    let config = scenario.sim_config(p, seed)?;
    let sim = if scenario.demand.is_idle() {
        Simulator::with_arrivals(config, Vec::new())?
    } else {
        Simulator::new(config)?
    };
    let trace = sim::run_with(sim)?;
    score_trace(scenario, p, seed, &trace, keep_series)
}

/// Scores an existing trace; also returns the series when requested.
pub fn score_trace(
    scenario: &Scenario,
    p: f64,
    seed: u64,
    trace: &Trace,
    keep_series: bool,
) -> Result<(RunSummary, Option<SeriesSample>)> {
    let (rate_n, rate_m) = scenario.demand.lane_rates();
    let mut estimator = RowEstimator::new(rate_n, rate_m, p);
    let mut lanes = [LaneAccum::default(); 2];
    let mut p_hats = Vec::new();
    let mut series = Vec::new();

    for row in &trace.rows {
        for lane in Lane::BOTH {
            let a = &mut lanes[lane.index()];
            let q = row.queue(lane);
            a.queue_sum += f64::from(q);
            a.queue_count += 1;
            a.queue_max = a.queue_max.max(q);
        }
        let est = if is_evaluation_row(row) {
            let est = estimator.estimate(row)?;
            for lane in Lane::BOTH {
                let a = &mut lanes[lane.index()];
                let truth = f64::from(row.queue(lane));
                for e in QueueEstimator::ALL {
                    a.abs_err[e as usize] += (pick(est.get(e), lane) - truth).abs();
                }
                a.evaluated += 1;
                a.p2_fallbacks += usize::from(est.p2_fallback);
                if row.is_end_of_red(lane) && truth > 0.0 {
                    a.ape_sum += (pick(est.p2, lane) - truth).abs() / truth;
                    a.ape_count += 1;
                }
            }
            if row.end_of_red_n || row.end_of_red_m {
                if let (Some(l_p), Some(k)) = (row.l_p, est.kappa) {
                    if let Some(v) = estimate_p_two_lane(row.c_p, l_p, k).value() {
                        p_hats.push(v);
                    }
                }
            }
            Some(est)
        } else {
            None
        };
        if keep_series && row.t <= SERIES_HORIZON_S {
            series.push(SeriesPoint {
                t: row.t,
                truth: (row.n, row.m),
                estimates: est,
            });
        }
    }

    let lambda_hat = if p > 0.0 {
        let mut acc = LambdaAccumulator::new();
        for (t0, t1) in scenario.timing.common_red_phases(scenario.duration_s) {
            if let (Some(a), Some(b)) = (trace.row_at(t0), trace.row_at(t1)) {
                acc.push(LambdaWindow {
                    t0,
                    t1,
                    x_p_t0: a.x_p,
                    x_p_t1: b.x_p,
                })?;
            }
        }
        acc.estimate(p)?
    } else {
        None
    };

    let summary = RunSummary {
        p,
        seed,
        p_hat_mean: (!p_hats.is_empty()).then(|| p_hats.iter().sum::<f64>() / p_hats.len() as f64),
        p_hat_samples: p_hats.len(),
        lambda_hat,
        lambda_true: scenario.demand.total(),
        overflow_events: trace.overflows.len(),
        lanes,
    };
    let series = keep_series.then_some(SeriesSample {
        p,
        seed,
        points: series,
    });
    Ok((summary, series))
}

fn pick(pair: (f64, f64), lane: Lane) -> f64 {
    match lane {
        Lane::N => pair.0,
        Lane::M => pair.1,
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// p closest to 0.5 in the sweep; its first seed provides the time series.
fn series_p(scenario: &Scenario) -> f64 {
    scenario
        .p_sweep
        .iter()
        .copied()
        .min_by(|a, b| (a - 0.5).abs().total_cmp(&(b - 0.5).abs()))
        .unwrap_or(0.5)
}

fn aggregate(scenario: &Scenario, runs: Vec<RunSummary>, series: Option<SeriesSample>) -> ScenarioReport {
    let mut lanes = Vec::new();
    for &p in &scenario.p_sweep {
        let at_p: Vec<&RunSummary> = runs.iter().filter(|r| r.p == p).collect();
        for lane in Lane::BOTH {
            let mae = |e: QueueEstimator| mean(at_p.iter().filter_map(|r| r.mae(lane, e))).unwrap_or(0.0);
            let accs = at_p.iter().map(|r| &r.lanes[lane.index()]);
            lanes.push(LaneMetrics {
                p,
                lane,
                mae_p2: mae(QueueEstimator::P2),
                mae_p1: mae(QueueEstimator::P1),
                mae_lp: mae(QueueEstimator::Lp),
                mape_p2: mean(at_p.iter().filter_map(|r| r.mape_p2(lane))),
                avg_queue: mean(
                    accs.clone()
                        .filter(|a| a.queue_count > 0)
                        .map(|a| a.queue_sum / a.queue_count as f64),
                )
                .unwrap_or(0.0),
                max_queue: mean(accs.clone().map(|a| f64::from(a.queue_max))).unwrap_or(0.0),
                saturated_runs: at_p.iter().filter(|r| r.saturated()).count(),
                seeds: at_p.len(),
                evaluated_rows: accs.clone().map(|a| a.evaluated).sum(),
                p2_fallbacks: accs.map(|a| a.p2_fallbacks).sum(),
            });
        }
    }
    ScenarioReport {
        name: scenario.name.clone(),
        alpha: scenario.demand.alpha,
        alpha_star_equal_red: scenario.alpha_star_equal_red(),
        interval: scenario.balance_interval(),
        lanes,
        runs,
        series,
    }
}

/// Runs every `(p, seed)` of one scenario and averages across seeds.
pub fn run_scenario(scenario: &Scenario) -> Result<ScenarioReport> {
    Ok(run_suite(std::slice::from_ref(scenario))?.scenarios.remove(0))
}

/// Runs all scenarios; grid points execute in parallel and are reduced in
/// `(scenario, p, seed)` order.
pub fn run_suite(scenarios: &[Scenario]) -> Result<MetricReport> {
    for s in scenarios {
        s.validate()?;
    }
    let jobs: Vec<(usize, f64, u64, bool)> = scenarios
        .iter()
        .enumerate()
        .flat_map(|(i, s)| {
            let sp = series_p(s);
            let first_seed = s.seeds[0];
            s.p_sweep.iter().flat_map(move |&p| {
                s.seeds
                    .iter()
                    .map(move |&seed| (i, p, seed, p == sp && seed == first_seed))
            })
        })
        .collect();

    let results: Vec<(usize, RunSummary, Option<SeriesSample>)> = jobs
        .par_iter()
        .map(|&(i, p, seed, keep)| {
            let (summary, series) = simulate_and_score(&scenarios[i], p, seed, keep)?;
            Ok((i, summary, series))
        })
        .collect::<Result<_>>()?;

    let mut per: Vec<(Vec<RunSummary>, Option<SeriesSample>)> = scenarios.iter().map(|_| (Vec::new(), None)).collect();
    for (i, summary, series) in results {
        per[i].0.push(summary);
        if series.is_some() {
            per[i].1 = series;
        }
    }
    let scenarios = scenarios
        .iter()
        .zip(per)
        .map(|(s, (runs, series))| aggregate(s, runs, series))
        .collect();
    Ok(MetricReport { scenarios })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::scenario::{reference_scenarios, ScenarioDemand};

    fn small(mut s: Scenario) -> Scenario {
        s.p_sweep = vec![0.5];
        s.seeds = vec![1, 2];
        s
    }

    #[test]
    fn idle_scenario_has_zero_error() {
        let mut s = small(reference_scenarios().remove(2));
        s.demand = ScenarioDemand {
            lambda_n: 0.0,
            lambda_m: 0.0,
            lambda_nm: 0.0,
            alpha: 0.5,
        };
        let r = run_scenario(&s).unwrap();
        for m in &r.lanes {
            assert_eq!((m.mae_p2, m.mae_p1, m.mae_lp), (0.0, 0.0, 0.0));
            assert_eq!(m.max_queue, 0.0);
            assert!(m.evaluated_rows > 0);
            assert_eq!(m.mape_p2, None);
        }
    }

    #[test]
    fn lp_estimate_maps_max_to_larger_mu() {
        let mut est = RowEstimator::new(0.1, 0.2, 0.5);
        let row = TraceRow {
            t: 20.0,
            r_n: 20.0,
            r_m: 20.0,
            n: 2,
            m: 4,
            c_p: 2,
            l_p: Some(4),
            x_p: 3,
            vehicles_on_link: 6,
            entered: 6,
            departed: 0,
            end_of_red_n: false,
            end_of_red_m: false,
        };
        let e = est.estimate(&row).unwrap();
        assert_eq!(e.lp, (2.0, 4.0));
        assert_eq!(e.p1, (2.0, 4.0));
        assert!(!e.p2_fallback);
        let no_probe = TraceRow {
            c_p: 0,
            l_p: None,
            ..row
        };
        let e = est.estimate(&no_probe).unwrap();
        assert!(e.p2_fallback);
        assert_eq!(e.p2, e.p1);
        assert_eq!(e.lp, (0.0, 0.0));
    }

    #[test]
    fn suite_is_ordered_and_deterministic() {
        let scenarios: Vec<Scenario> = reference_scenarios().into_iter().take(2).map(small).collect();
        let a = run_suite(&scenarios).unwrap();
        let b = run_suite(&scenarios).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.scenarios[0].name, "S1");
        assert_eq!(
            a.scenarios[0].runs.iter().map(|r| r.seed).collect::<Vec<_>>(),
            vec![1, 2]
        );
        assert!(a.scenarios[0].series.is_some());
        let cell = a.scenarios[1].cell(0.5, Lane::N).unwrap();
        assert!(cell.mae_p2 >= 0.0 && cell.avg_queue > 0.0);
        assert!(a.scenarios[1].runs[0].lambda_hat.is_some());
    }
}
