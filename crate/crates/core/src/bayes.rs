//! Joint queue-length laws on a truncated `(n, m)` grid.
//!
//! All weights are built in log-space and normalized after subtracting the
//! largest log-weight, so binomials of realistic queues never overflow.

use std::io::Write;

use serde::Serialize;
use statrs::distribution::{DiscreteCDF, Poisson};
use statrs::function::factorial::{ln_binomial, ln_factorial};

use crate::error::{ensure, Error, Result};
use crate::model::JointQueueDistribution;

/// Largest prior mass allowed outside the grid.
pub const TAIL_MASS_LIMIT: f64 = 1e-12;

/// Conditioning data of the probe-informed posterior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PosteriorInput {
    pub mu_n: f64,
    pub mu_m: f64,
    pub p: f64,
    /// Queue position of the farthest queued probe.
    pub l_p: u32,
    /// Queued probes over both lanes.
    pub c_p: u32,
    pub n_max: usize,
}

impl PosteriorInput {
    /// Uses [`default_truncation`] and checks the prior tail bound.
    pub fn new(mu_n: f64, mu_m: f64, p: f64, l_p: u32, c_p: u32) -> Result<Self> {
        let input = PosteriorInput {
            mu_n,
            mu_m,
            p,
            l_p,
            c_p,
            n_max: default_truncation(mu_n, mu_m, l_p),
        };
        input.validate()?;
        check_tail(mu_n, mu_m, input.n_max)?;
        Ok(input)
    }

    /// Explicit grid size; the tail bound is the caller's responsibility.
    pub fn with_n_max(self, n_max: usize) -> Result<Self> {
        let input = PosteriorInput { n_max, ..self };
        input.validate()?;
        Ok(input)
    }

    pub fn validate(&self) -> Result<()> {
        validate_mu(self.mu_n, self.mu_m)?;
        ensure(self.p > 0.0 && self.p <= 1.0, || {
            format!("p = {} outside (0, 1]", self.p)
        })?;
        ensure(self.l_p >= 1, || "l_p must be >= 1".into())?;
        ensure(self.c_p >= 1, || "c_p must be >= 1".into())?;
        ensure((self.n_max as f64) >= (self.mu_n + self.mu_m).ceil(), || {
            format!("n_max = {} below ceil(mu_N + mu_M)", self.n_max)
        })
    }
}

fn validate_mu(mu_n: f64, mu_m: f64) -> Result<()> {
    ensure(
        mu_n.is_finite() && mu_n >= 0.0 && mu_m.is_finite() && mu_m >= 0.0,
        || format!("expected arrivals ({mu_n}, {mu_m}) must be finite and >= 0"),
    )
}

/// `max(l_p, ceil(μ_N + μ_M)) + 10 sqrt(μ_N + μ_M) + 10`.
pub fn default_truncation(mu_n: f64, mu_m: f64, l_p: u32) -> usize {
    let total = (mu_n + mu_m).max(0.0);
    let base = (l_p as f64).max(total.ceil());
    (base + 10.0 * total.sqrt() + 10.0).ceil() as usize
}

/// Prior mass outside `[0, n_max]²`, bounded by the sum of the two
/// marginal tails.
pub fn poisson_tail_mass(mu_n: f64, mu_m: f64, n_max: usize) -> f64 {
    let tail = |mu: f64| {
        if mu <= 0.0 {
            0.0
        } else {
            Poisson::new(mu).map(|d| d.sf(n_max as u64)).unwrap_or(1.0)
        }
    };
    tail(mu_n) + tail(mu_m)
}

fn check_tail(mu_n: f64, mu_m: f64, n_max: usize) -> Result<()> {
    let tail = poisson_tail_mass(mu_n, mu_m, n_max);
    if tail < TAIL_MASS_LIMIT {
        Ok(())
    } else {
        Err(Error::Truncation {
            n_max,
            tail,
            limit: TAIL_MASS_LIMIT,
        })
    }
}

fn ln_poisson(mu: f64, k: usize) -> f64 {
    if mu == 0.0 {
        return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    k as f64 * mu.ln() - mu - ln_factorial(k as u64)
}

/// `ln C(n, k)`, `-∞` when `k > n`.
fn ln_choose(n: u64, k: u64) -> f64 {
    if k > n {
        f64::NEG_INFINITY
    } else {
        ln_binomial(n, k)
    }
}

/// Product-Poisson prior on `[0, n_max]²`. Not renormalized: the missing
/// mass is below [`TAIL_MASS_LIMIT`].
pub fn prior_joint(mu_n: f64, mu_m: f64, n_max: usize) -> Result<JointQueueDistribution> {
    validate_mu(mu_n, mu_m)?;
    check_tail(mu_n, mu_m, n_max)?;
    let side = n_max + 1;
    let ln_n: Vec<f64> = (0..side).map(|k| ln_poisson(mu_n, k)).collect();
    let ln_m: Vec<f64> = (0..side).map(|k| ln_poisson(mu_m, k)).collect();
    let mut grid = Vec::with_capacity(side * side);
    for a in &ln_n {
        grid.extend(ln_m.iter().map(|b| (a + b).exp()));
    }
    JointQueueDistribution::from_grid(grid, n_max, mu_n, mu_m)
}

/// True when `(n, m)` can produce the observation at all.
pub fn in_support(n: usize, m: usize, l_p: u32, c_p: u32) -> bool {
    n.max(m) >= l_p as usize && n + m >= c_p as usize
}

/// Log of the unnormalized posterior weight of `(n, m)` without the prior.
fn ln_likelihood(n: usize, m: usize, l_p: u32, c_p: u32, ln_q: f64) -> f64 {
    if !in_support(n, m, l_p, c_p) {
        return f64::NEG_INFINITY;
    }
    let l = l_p as u64;
    let shorter = l.min(n as u64).min(m as u64);
    let ln_place = ln_choose(l - 1 + shorter, u64::from(c_p) - 1);
    let missed = (n + m) as u64 - u64::from(c_p);
    // 0^0 = 1 at p = 1
    let ln_missed = if missed == 0 { 0.0 } else { missed as f64 * ln_q };
    ln_place + ln_missed
}

/// Probe-conditioned joint law of `(N, M)`.
///
/// Weight `C(l_p − 1 + min(l_p, n, m), c_p − 1) (1 − p)^(n + m − c_p)`
/// times the prior on `max(n, m) ≥ l_p, n + m ≥ c_p`, zero elsewhere.
pub fn posterior_joint(input: &PosteriorInput) -> Result<JointQueueDistribution> {
    input.validate()?;
    let PosteriorInput {
        mu_n,
        mu_m,
        p,
        l_p,
        c_p,
        n_max,
    } = *input;
    let side = n_max + 1;
    let ln_q = (1.0 - p).ln();
    let ln_n: Vec<f64> = (0..side).map(|k| ln_poisson(mu_n, k)).collect();
    let ln_m: Vec<f64> = (0..side).map(|k| ln_poisson(mu_m, k)).collect();

    let mut logs = Vec::with_capacity(side * side);
    let mut peak = f64::NEG_INFINITY;
    for (n, &prior_n) in ln_n.iter().enumerate() {
        for (m, &prior_m) in ln_m.iter().enumerate() {
            let w = ln_likelihood(n, m, l_p, c_p, ln_q) + prior_n + prior_m;
            peak = peak.max(w);
            logs.push(w);
        }
    }
    if !peak.is_finite() {
        return Err(Error::InfeasibleObservation(format!(
            "no (n, m) in [0, {n_max}]² is consistent with l_p = {l_p}, c_p = {c_p}"
        )));
    }
    let mut grid: Vec<f64> = logs.into_iter().map(|w| (w - peak).exp()).collect();
    let total: f64 = grid.iter().sum();
    grid.iter_mut().for_each(|x| *x /= total);
    JointQueueDistribution::from_grid(grid, n_max, mu_n, mu_m)
}

/// Marginal means `(E[N], E[M])` of a normalized grid.
pub fn expected_queue_lengths(dist: &JointQueueDistribution) -> (f64, f64) {
    dist.cells()
        .fold((0.0, 0.0), |(en, em), (n, m, w)| (en + n as f64 * w, em + m as f64 * w))
}

/// Prior means, the baseline that ignores probe data.
pub fn prior_point_estimate(mu_n: f64, mu_m: f64) -> (f64, f64) {
    (mu_n, mu_m)
}

/// `(max, min) = (l_p, κ l_p)`.
pub fn lp_point_estimate(l_p: u32, kappa: f64) -> Result<(f64, f64)> {
    ensure(l_p >= 1, || "l_p must be >= 1".into())?;
    ensure((0.0..=1.0).contains(&kappa), || format!("kappa {kappa} outside [0, 1]"))?;
    let l = l_p as f64;
    Ok((l, kappa * l))
}

/// Share of the `C(n + m, c_p)` probe placements on queues `(n, m)` that
/// put the farthest probe at `l_p`: `C(l_p − 1 + min(l_p, n, m), c_p − 1) / C(n + m, c_p)`.
pub fn placement_probability(l_p: u32, c_p: u32, n: usize, m: usize) -> f64 {
    if l_p == 0 || c_p == 0 || !in_support(n, m, l_p, c_p) {
        return 0.0;
    }
    let l = l_p as u64;
    let shorter = l.min(n as u64).min(m as u64);
    let ln_p = ln_choose(l - 1 + shorter, u64::from(c_p) - 1) - ln_choose((n + m) as u64, u64::from(c_p));
    ln_p.exp()
}

/// Row-per-`n` matrix: header `n,m0,m1,…`.
pub fn write_distribution_csv<W: Write>(dist: &JointQueueDistribution, out: W) -> std::result::Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    let side = dist.n_max() + 1;
    let mut header = vec!["n".to_string()];
    header.extend((0..side).map(|m| format!("m{m}")));
    w.write_record(&header)?;
    for n in 0..side {
        let mut row = vec![n.to_string()];
        row.extend(dist.row(n).iter().map(|x| x.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct DistributionJson<'a> {
    n_max: usize,
    mu_n: f64,
    mu_m: f64,
    expected_n: f64,
    expected_m: f64,
    grid: Vec<&'a [f64]>,
}

pub fn distribution_json(dist: &JointQueueDistribution) -> serde_json::Value {
    let (expected_n, expected_m) = expected_queue_lengths(dist);
    let doc = DistributionJson {
        n_max: dist.n_max(),
        mu_n: dist.mu_n(),
        mu_m: dist.mu_m(),
        expected_n,
        expected_m,
        grid: (0..=dist.n_max()).map(|n| dist.row(n)).collect(),
    };
    serde_json::to_value(doc).expect("distribution serializes")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn prior_origin_and_means() {
        let (mu_n, mu_m) = (6.833, 5.125);
        let n_max = default_truncation(mu_n, mu_m, 0);
        let d = prior_joint(mu_n, mu_m, n_max).unwrap();
        assert_abs_diff_eq!(d.get(0, 0), (-(mu_n + mu_m)).exp(), epsilon = 1e-15);
        let (en, em) = expected_queue_lengths(&d);
        assert_abs_diff_eq!(en, mu_n, epsilon = 1e-9);
        assert_abs_diff_eq!(em, mu_m, epsilon = 1e-9);
    }

    #[test]
    fn prior_symmetric_for_equal_means() {
        let d = prior_joint(4.0, 4.0, 40).unwrap();
        for (n, m, w) in d.cells() {
            assert_eq!(w, d.get(m, n));
        }
    }

    #[test]
    fn prior_zero_rates_is_point_mass() {
        let d = prior_joint(0.0, 0.0, 10).unwrap();
        assert_eq!(d.get(0, 0), 1.0);
        assert_eq!(d.total_mass(), 1.0);
    }

    #[test]
    fn small_grid_is_truncation_error() {
        assert!(matches!(prior_joint(10.0, 10.0, 12), Err(Error::Truncation { .. })));
    }

    #[test]
    fn full_penetration_concentrates_on_count_diagonal() {
        let input = PosteriorInput::new(3.0, 2.0, 1.0, 3, 5).unwrap();
        let d = posterior_joint(&input).unwrap();
        let mut on = 0.0;
        for (n, m, w) in d.cells() {
            if n + m == 5 && n.max(m) >= 3 {
                on += w;
            } else {
                assert_eq!(w, 0.0, "({n}, {m})");
            }
        }
        assert_abs_diff_eq!(on, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn placement_matches_event_count() {
        let expected = 462.0 / 3432.0; // C(11,6) / C(14,7)
        assert_abs_diff_eq!(placement_probability(6, 7, 6, 8), expected, epsilon = 1e-12);
        assert_eq!(placement_probability(6, 7, 5, 1), 0.0);
    }

    #[test]
    fn single_probe_needs_no_special_case() {
        let d = posterior_joint(&PosteriorInput::new(2.0, 2.0, 0.5, 2, 1).unwrap()).unwrap();
        assert_abs_diff_eq!(d.total_mass(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn worked_scenario_puts_about_ten_on_n() {
        let d = posterior_joint(&PosteriorInput::new(6.833, 5.125, 0.55, 9, 8).unwrap()).unwrap();
        let (en, em) = expected_queue_lengths(&d);
        assert!(en > em);
        let longest: f64 = d.cells().map(|(n, m, w)| n.max(m) as f64 * w).sum();
        assert!((9.0..11.0).contains(&longest), "E[max(N, M)] = {longest}");
    }

    #[test]
    fn empty_support_is_infeasible() {
        let input = PosteriorInput::new(1.0, 1.0, 0.5, 2, 2).unwrap().with_n_max(1);
        // n_max = 1 < ceil(μ_N + μ_M) trips validation first
        assert!(input.is_err());
        let input = PosteriorInput::new(0.5, 0.5, 0.5, 3, 2).unwrap().with_n_max(2).unwrap();
        assert!(matches!(posterior_joint(&input), Err(Error::InfeasibleObservation(_))));
        let too_many = PosteriorInput::new(1.0, 1.0, 0.5, 2, 5).unwrap();
        assert!(matches!(
            posterior_joint(&too_many),
            Err(Error::InfeasibleObservation(_))
        ));
    }

    #[test]
    fn large_means_stay_finite() {
        let input = PosteriorInput::new(50.0, 50.0, 0.3, 40, 20)
            .unwrap()
            .with_n_max(200)
            .unwrap();
        let d = posterior_joint(&input).unwrap();
        assert!(d.cells().all(|(_, _, w)| w.is_finite()));
        assert_abs_diff_eq!(d.total_mass(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn point_mass_expectation() {
        let d = JointQueueDistribution::point_mass(4, 7, 10).unwrap();
        assert_eq!(expected_queue_lengths(&d), (4.0, 7.0));
    }

    #[test]
    fn lp_estimates() {
        assert_eq!(lp_point_estimate(9, 0.75).unwrap(), (9.0, 6.75));
        assert_eq!(lp_point_estimate(4, 1.0).unwrap(), (4.0, 4.0));
        assert_eq!(lp_point_estimate(4, 0.0).unwrap(), (4.0, 0.0));
        assert_eq!(prior_point_estimate(0.0, 0.0), (0.0, 0.0));
    }

    #[test]
    fn csv_and_json_exports() {
        let d = prior_joint(1.0, 1.0, 20).unwrap();
        let mut buf = Vec::new();
        write_distribution_csv(&d, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("n,m0,m1,"));
        assert_eq!(text.lines().count(), 22);
        let json = distribution_json(&d);
        assert_eq!(json["grid"].as_array().unwrap().len(), 21);
    }

    proptest! {
        #[test]
        fn posterior_normalized_and_supported(
            mu_n in 0.0f64..15.0,
            mu_m in 0.0f64..15.0,
            p in 0.05f64..=1.0,
            l_p in 1u32..12,
            extra in 0u32..12,
        ) {
            let c_p = 1 + extra.min(2 * l_p - 1);
            let d = posterior_joint(&PosteriorInput::new(mu_n, mu_m, p, l_p, c_p).unwrap()).unwrap();
            prop_assert!((d.total_mass() - 1.0).abs() < 1e-9);
            for (n, m, w) in d.cells() {
                if !in_support(n, m, l_p, c_p) {
                    prop_assert_eq!(w, 0.0);
                }
            }
        }

        #[test]
        fn prior_means_recovered(mu_n in 0.0f64..20.0, mu_m in 0.0f64..20.0) {
            let d = prior_joint(mu_n, mu_m, default_truncation(mu_n, mu_m, 0)).unwrap();
            let (en, em) = expected_queue_lengths(&d);
            prop_assert!((en - mu_n).abs() < 1e-9 && (em - mu_m).abs() < 1e-9);
        }

        #[test]
        fn more_probes_never_lower_total(mu in 0.5f64..10.0, p in 0.1f64..0.9, l_p in 2u32..8, c in 1u32..6) {
            let c_p = c.min(2 * l_p - 1);
            let mean = |c: u32| {
                let d = posterior_joint(&PosteriorInput::new(mu, mu, p, l_p, c).unwrap()).unwrap();
                let (a, b) = expected_queue_lengths(&d);
                a + b
            };
            prop_assert!(mean(c_p + 1) >= mean(c_p) - 1e-9);
        }
    }
}
