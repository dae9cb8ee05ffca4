mod common;

use probeq::estimators::{estimate_p_one_lane, estimate_p_two_lane, estimate_turn_ratios, ExitSighting};
use probeq::harness::metrics::run_one;
use probeq::harness::reference_scenarios;
use probeq::sim;

use common::{flag_lane, mean_and_se, poisson, rng, Draw};

#[test]
fn one_lane_estimator_mean_matches_p() {
    let mut r = rng(21);
    let mut values = Vec::new();
    while values.len() < 10_000 {
        let n = poisson(10.0, &mut r);
        let (l, c) = flag_lane(n, 0.3, &mut r);
        if let Some(v) = estimate_p_one_lane(c as u32, l as u32).value() {
            values.push(v);
        }
    }
    let (mean, _) = mean_and_se(&values);
    assert!((mean - 0.3).abs() < 0.01, "mean {mean}");
}

#[test]
fn two_lane_estimator_mean_at_half_penetration() {
    let kappa = 0.5;
    let mut r = rng(22);
    let mut values = Vec::new();
    while values.len() < 20_000 {
        let d = Draw::sample(10.0, kappa * 10.0, 0.5, &mut r);
        if let Some(v) = estimate_p_two_lane(d.probes as u32, d.l_p() as u32, kappa).value() {
            values.push(v);
        }
    }
    let (mean, _) = mean_and_se(&values);
    assert!((mean - 0.5).abs() < 0.015, "mean {mean}");
}

#[test]
fn lambda_error_within_poisson_bound_over_forty_minutes() {
    let mut scenario = reference_scenarios().remove(1);
    scenario.duration_s = 2400.0;
    let lambda = scenario.demand.total();
    let p = 0.5;
    let red: f64 = scenario
        .timing
        .common_red_phases(2400.0)
        .iter()
        .map(|(a, b)| b - a)
        .sum();
    let expected_probes = p * lambda * red;
    let est = run_one(&scenario, p, 0, false).unwrap().lambda_hat.unwrap();
    assert!(
        (est - lambda).abs() / lambda < 3.0 / expected_probes.sqrt(),
        "λ̂ = {est}"
    );
}

#[test]
fn turn_ratios_from_tracked_probes() {
    // Right, left, straight = 200, 200, 50 per 1200 s.
    let scenario = &reference_scenarios()[2];
    let trace = sim::run(&scenario.sim_config(0.5, 5).unwrap()).unwrap();
    let probes = trace.entries.iter().filter(|e| e.is_probe).map(|e| e.id);
    let exits = trace.exits.iter().map(|e| ExitSighting {
        id: e.id,
        movement: e.movement,
    });
    let est = estimate_turn_ratios(probes, exits);
    assert!(est.usable());
    let n = est.sample_count as f64;
    for (got, truth) in [
        (est.l_n_hat, 200.0 / 450.0),
        (est.l_m_hat, 200.0 / 450.0),
        (est.l_nm_hat, 50.0 / 450.0),
    ] {
        let se = (truth * (1.0 - truth) / n).sqrt();
        assert!((got - truth).abs() < 3.0 * se, "{got} vs {truth} (n = {n})");
    }
}
