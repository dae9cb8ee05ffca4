mod common;

use std::path::PathBuf;

use probeq::harness::metrics::{run_one, QueueEstimator};
use probeq::harness::{emit_report, load_scenarios, reference_scenarios, run_suite};
use probeq::sim::{self, SimConfig};
use probeq::{AssignmentPolicy, DemandProfile, RedWindow, SignalTiming};

use common::{mean_and_se, welch_t};

fn scenario_file(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
}

fn offset_timing() -> SignalTiming {
    SignalTiming::new(90.0, RedWindow::new(4.0, 49.0), RedWindow::new(12.0, 49.0)).unwrap()
}

/// `N − M` at every common end of red.
fn end_of_red_gaps(policy: AssignmentPolicy, alpha: f64, seed: u64) -> Vec<f64> {
    let demand = DemandProfile::new(0.1, 0.1, 0.1, 0.5, alpha).unwrap();
    let mut config = SimConfig::new(demand, offset_timing(), 90.0 * 400.0, seed);
    config.policy = policy;
    let trace = sim::run(&config).unwrap();
    trace
        .rows
        .iter()
        .filter(|r| r.end_of_red_n && r.end_of_red_m)
        .map(|r| f64::from(r.n) - f64::from(r.m))
        .collect()
}

#[test]
fn shipped_table_file_matches_built_in_scenarios() {
    let loaded = load_scenarios(&scenario_file("reference.toml")).unwrap();
    let built_in = reference_scenarios();
    assert_eq!(loaded.len(), built_in.len());
    for (a, b) in loaded.iter().zip(&built_in) {
        assert_eq!(a.name, b.name);
        assert!((a.demand.alpha - b.demand.alpha).abs() < 1e-12, "{}", a.name);
        assert!((a.demand.total() - b.demand.total()).abs() < 1e-12);
        assert_eq!(a.timing, b.timing);
        assert_eq!(a.seeds, b.seeds);
    }
}

#[test]
fn offset_file_parses_and_runs() {
    let mut s = load_scenarios(&scenario_file("offset_phase.toml")).unwrap();
    assert_eq!(s[0].seeds.len(), 5);
    s[0].seeds.truncate(2);
    let report = run_suite(&s).unwrap();
    assert_eq!(report.scenarios[0].p_values(), vec![0.2, 0.5, 0.9]);
}

#[test]
fn trace_csv_round_trips() {
    let scenario = &reference_scenarios()[0];
    let trace = sim::run(&scenario.sim_config(0.5, 3).unwrap()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trace.csv");
    sim::save_trace_csv(&trace.rows, &path).unwrap();
    let loaded = sim::load_trace_csv(&path, &scenario.timing).unwrap();
    assert_eq!(loaded.len(), trace.rows.len());
    for (a, b) in loaded.iter().zip(&trace.rows) {
        assert_eq!((a.n, a.m, a.c_p, a.l_p, a.x_p), (b.n, b.m, b.c_p, b.l_p, b.x_p));
        assert!((a.t - b.t).abs() < 1e-9);
        assert_eq!((a.end_of_red_n, a.end_of_red_m), (b.end_of_red_n, b.end_of_red_m));
    }
}

#[test]
fn end_of_red_means_follow_red_lengths() {
    // Lane rates are 0.15 each; reds last 45 s and 37 s.
    let demand = DemandProfile::new(0.1, 0.1, 0.1, 0.5, 0.5).unwrap();
    let config = SimConfig::new(demand, offset_timing(), 90.0 * 3000.0, 9);
    let trace = sim::run(&config).unwrap();
    let ends: Vec<_> = trace.rows.iter().filter(|r| r.end_of_red_n).collect();
    let n: Vec<f64> = ends.iter().map(|r| f64::from(r.n)).collect();
    let m: Vec<f64> = ends.iter().map(|r| f64::from(r.m)).collect();
    let (mn, sn) = mean_and_se(&n);
    let (mm, sm) = mean_and_se(&m);
    assert!((mn - 0.15 * 45.0).abs() < 4.0 * sn, "N mean {mn}");
    assert!((mm - 0.15 * 37.0).abs() < 4.0 * sm, "M mean {mm}");
}

/// `|N − M|` at each end of red, equal 45 s reds, flows skewed towards M.
fn skewed_end_of_red_gaps(policy: AssignmentPolicy, seed: u64) -> Vec<f64> {
    let demand = DemandProfile::new(100.0 / 1200.0, 200.0 / 1200.0, 125.0 / 1200.0, 0.5, 0.5).unwrap();
    let timing = SignalTiming::common_red(90.0, 45.0).unwrap();
    let mut config = SimConfig::new(demand, timing, 90.0 * 100.0, seed);
    config.policy = policy;
    let trace = sim::run(&config).unwrap();
    trace
        .rows
        .iter()
        .filter(|r| r.end_of_red_n)
        .map(|r| (f64::from(r.n) - f64::from(r.m)).abs())
        .collect()
}

#[test]
fn balancing_policy_narrows_end_of_red_gap() {
    let mut fixed = Vec::new();
    let mut balanced = Vec::new();
    for seed in 0..4 {
        fixed.extend(skewed_end_of_red_gaps(AssignmentPolicy::BernoulliAlpha, seed));
        balanced.extend(skewed_end_of_red_gaps(AssignmentPolicy::AlphaStar, seed));
    }
    assert!(fixed.len() >= 200);
    let t = welch_t(&fixed, &balanced);
    assert!(t > 3.0, "Welch t = {t}");
}

#[test]
fn shortest_queue_narrows_gap_spread() {
    let fixed = end_of_red_gaps(AssignmentPolicy::BernoulliAlpha, 0.5, 1);
    let greedy = end_of_red_gaps(AssignmentPolicy::ShortestQueue, 0.5, 1);
    let abs_mean = |v: &[f64]| v.iter().map(|x| x.abs()).sum::<f64>() / v.len() as f64;
    assert!(abs_mean(&greedy) < abs_mean(&fixed));
}

#[test]
fn estimates_improve_with_penetration_on_one_scenario() {
    let scenario = &reference_scenarios()[2];
    let mae = |p: f64| {
        let runs: Vec<f64> = (0..6)
            .map(|seed| {
                let r = run_one(scenario, p, seed, false).unwrap();
                r.mae(probeq::Lane::N, QueueEstimator::P2).unwrap()
            })
            .collect();
        mean_and_se(&runs).0
    };
    assert!(mae(0.9) < mae(0.1));
}

#[test]
fn report_directory_has_table_rows_for_every_p() {
    let mut scenarios = reference_scenarios();
    for s in &mut scenarios {
        s.p_sweep = vec![0.1, 0.9];
        s.seeds = vec![0];
    }
    let report = run_suite(&scenarios).unwrap();
    let dir = tempfile::tempdir().unwrap();
    emit_report(&report, dir.path()).unwrap();
    let table = std::fs::read_to_string(dir.path().join("table_lane_N.csv")).unwrap();
    assert_eq!(table.lines().next().unwrap(), "row,S1,S2,S3,S4,S5");
    assert!(table.contains("\nAverage queue,"));
    assert!(table.contains("\nMax queue,"));
    for p in ["0.1", "0.9"] {
        for est in ["MAE(P2)", "MAE(P1)", "MAE(l_p)"] {
            let label = format!("p={p} {est}");
            assert!(table.contains(&label), "missing {label}");
        }
        assert!(table.contains(&format!("\"p={p} MAPE(P2,R)(%)\"")));
    }
    for file in ["p_hat_vs_p.svg", "lambda_hat_vs_p.svg", "queue_series_S1_N.svg"] {
        assert!(dir.path().join(file).exists(), "{file}");
    }
}
