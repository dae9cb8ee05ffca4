//! Monte Carlo checks runnable from the command line.
//!
//! Samples the generative model directly (Poisson queues, i.i.d. probe
//! flags per vehicle) and compares estimator means and posterior cells with
//! the empirical conditional laws.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::Serialize;

use crate::bayes::{in_support, posterior_joint, PosteriorInput};
use crate::error::{Error, Result};
use crate::estimators::{estimate_p_one_lane, estimate_p_two_lane};

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonteCarloMean {
    pub mean: f64,
    pub std_error: f64,
    pub samples: usize,
}

impl MonteCarloMean {
    fn from_values(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return MonteCarloMean {
                mean: f64::NAN,
                std_error: f64::NAN,
                samples: 0,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n.max(2) - 1) as f64;
        MonteCarloMean {
            mean,
            std_error: (var / n as f64).sqrt(),
            samples: n,
        }
    }

    /// `|mean − target|` in standard errors.
    pub fn z(&self, target: f64) -> f64 {
        (self.mean - target).abs() / self.std_error
    }
}

fn poisson_draw<R: Rng>(mu: f64, rng: &mut R) -> usize {
    if mu <= 0.0 {
        return 0;
    }
    Poisson::new(mu).expect("positive mean").sample(rng) as usize
}

/// `(deepest probe position, probe count)` for a lane of `len` vehicles.
fn probe_lane<R: Rng>(len: usize, p: f64, rng: &mut R) -> (usize, usize) {
    let mut deepest = 0;
    let mut count = 0;
    for pos in 1..=len {
        if rng.random::<f64>() < p {
            deepest = pos;
            count += 1;
        }
    }
    (deepest, count)
}

/// Mean one-lane `p̂` over observations with `l_p > 1`.
pub fn one_lane_p_hat(p: f64, mu: f64, observations: usize, seed: u64) -> MonteCarloMean {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(observations);
    while values.len() < observations {
        let n = poisson_draw(mu, &mut rng);
        let (l, c) = probe_lane(n, p, &mut rng);
        if let Some(v) = estimate_p_one_lane(c as u32, l as u32).value() {
            values.push(v);
        }
    }
    MonteCarloMean::from_values(&values)
}

/// Mean two-lane `p̂` over observations with `l_p > 1` and `c_p > 1`.
/// Lane means are `μ_max` and `κ μ_max`; `l_p` is the deepest probe over
/// both lanes.
pub fn two_lane_p_hat(p: f64, kappa: f64, mu_max: f64, observations: usize, seed: u64) -> MonteCarloMean {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(observations);
    while values.len() < observations {
        let n = poisson_draw(mu_max, &mut rng);
        let m = poisson_draw(kappa * mu_max, &mut rng);
        let (ln, cn) = probe_lane(n, p, &mut rng);
        let (lm, cm) = probe_lane(m, p, &mut rng);
        if let Some(v) = estimate_p_two_lane((cn + cm) as u32, ln.max(lm) as u32, kappa).value() {
            values.push(v);
        }
    }
    MonteCarloMean::from_values(&values)
}

/// Cell-wise comparison of a posterior grid with an empirical conditional law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleComparison {
    pub accepted: usize,
    pub cells_compared: usize,
    /// Largest `|empirical − exact|` in binomial standard errors.
    pub worst_z: f64,
    /// Mass of the empirical law outside the exact support.
    pub mass_off_support: f64,
}

impl OracleComparison {
    pub fn passed(&self, z_limit: f64) -> bool {
        self.cells_compared > 0 && self.worst_z <= z_limit && self.mass_off_support == 0.0
    }
}

/// Draws `(N, M)` and probe flags, keeps draws whose farthest probe sits in
/// the longer lane (ties: lane N) at depth `l_p` with `c_p` probes in total,
/// and compares the empirical law of `(N, M)` with the posterior on cells
/// expecting at least `min_expected` hits.
pub fn posterior_oracle(
    input: &PosteriorInput,
    draws: usize,
    min_expected: f64,
    seed: u64,
) -> Result<OracleComparison> {
    let exact = posterior_joint(input)?;
    let side = input.n_max + 1;
    let mut counts = vec![0usize; side * side];
    let mut off_grid = 0usize;
    let mut accepted = 0usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (l_p, c_p) = (input.l_p as usize, input.c_p as usize);
    for _ in 0..draws {
        let n = poisson_draw(input.mu_n, &mut rng);
        let m = poisson_draw(input.mu_m, &mut rng);
        let (ln, cn) = probe_lane(n, input.p, &mut rng);
        let (lm, cm) = probe_lane(m, input.p, &mut rng);
        let (long_depth, short_depth) = if n >= m { (ln, lm) } else { (lm, ln) };
        if long_depth == 0 || short_depth > long_depth {
            continue;
        }
        if long_depth != l_p || cn + cm != c_p {
            continue;
        }
        accepted += 1;
        if n < side && m < side {
            counts[n * side + m] += 1;
        } else {
            off_grid += 1;
        }
    }
    if accepted == 0 {
        return Err(Error::InfeasibleObservation(format!(
            "no draw out of {draws} produced l_p = {l_p}, c_p = {c_p}"
        )));
    }
    let total = accepted as f64;
    let mut worst_z: f64 = 0.0;
    let mut cells = 0;
    let mut off_support = off_grid as f64;
    for (n, m, prob) in exact.cells() {
        let hits = counts[n * side + m] as f64;
        if !in_support(n, m, input.l_p, input.c_p) {
            off_support += hits;
            continue;
        }
        if prob * total < min_expected {
            continue;
        }
        let se = (prob * (1.0 - prob) / total).sqrt();
        worst_z = worst_z.max((hits / total - prob).abs() / se);
        cells += 1;
    }
    Ok(OracleComparison {
        accepted,
        cells_compared: cells,
        worst_z,
        mass_off_support: off_support / total,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelftestCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SelftestReport {
    pub checks: Vec<SelftestCheck>,
}

impl SelftestReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    fn push(&mut self, name: impl Into<String>, passed: bool, detail: String) {
        self.checks.push(SelftestCheck {
            name: name.into(),
            passed,
            detail,
        });
    }
}

/// Runs the unbiasedness and posterior-oracle checks. `quick` uses about
/// a fifth of the samples.
pub fn run_selftest(quick: bool, seed: u64) -> Result<SelftestReport> {
    let scale = if quick { 5 } else { 1 };
    let mut report = SelftestReport::default();

    let one = one_lane_p_hat(0.3, 10.0, 100_000 / scale, seed);
    report.push(
        "one_lane_p_hat_unbiased",
        one.z(0.3) < 3.0,
        format!(
            "p = 0.3, mean = {:.5}, se = {:.5}, z = {:.2}",
            one.mean,
            one.std_error,
            one.z(0.3)
        ),
    );

    for (i, kappa) in [0.5, 1.0].into_iter().enumerate() {
        for (j, p) in [0.2, 0.5, 0.9].into_iter().enumerate() {
            let s = seed.wrapping_add(1 + 3 * i as u64 + j as u64);
            let two = two_lane_p_hat(p, kappa, 10.0, 100_000 / scale, s);
            report.push(
                format!("two_lane_p_hat_unbiased[kappa={kappa},p={p}]"),
                two.z(p) < 3.0,
                format!("mean = {:.5}, se = {:.5}, z = {:.2}", two.mean, two.std_error, two.z(p)),
            );
        }
    }

    let input = PosteriorInput::new(2.0, 2.0, 0.5, 2, 2)?;
    let cmp = posterior_oracle(&input, 1_000_000 / scale, 50.0, seed.wrapping_add(100))?;
    report.push(
        "posterior_matches_sampling_oracle",
        cmp.passed(3.0),
        format!(
            "accepted = {}, cells = {}, worst z = {:.2}, off-support mass = {}",
            cmp.accepted, cmp.cells_compared, cmp.worst_z, cmp.mass_off_support
        ),
    );

    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(200));
    let mut worst_mass: f64 = 0.0;
    let mut leaks = 0;
    for _ in 0..200 {
        let mu_n = rng.random_range(0.0..20.0);
        let mu_m = rng.random_range(0.0..20.0);
        let p = rng.random_range(0.01..=1.0);
        let l_p = rng.random_range(1..=15u32);
        let c_p = rng.random_range(1..=2 * l_p);
        let d = posterior_joint(&PosteriorInput::new(mu_n, mu_m, p, l_p, c_p)?)?;
        worst_mass = worst_mass.max((d.total_mass() - 1.0).abs());
        leaks += d
            .cells()
            .filter(|&(n, m, w)| w != 0.0 && !in_support(n, m, l_p, c_p))
            .count();
    }
    report.push(
        "posterior_normalized_on_support",
        worst_mass <= 1e-9 && leaks == 0,
        format!("max |mass − 1| = {worst_mass:e}, off-support cells = {leaks}"),
    );
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_lane_sampler_is_unbiased() {
        let m = one_lane_p_hat(0.3, 8.0, 20_000, 11);
        assert!(m.z(0.3) < 4.0, "{m:?}");
    }

    #[test]
    fn oracle_agrees_on_small_grid() {
        let input = PosteriorInput::new(1.5, 2.5, 0.6, 2, 3).unwrap();
        let cmp = posterior_oracle(&input, 200_000, 50.0, 5).unwrap();
        assert!(cmp.passed(4.0), "{cmp:?}");
    }

    #[test]
    fn impossible_observation_reports_error() {
        let input = PosteriorInput::new(0.01, 0.01, 0.5, 8, 1).unwrap();
        assert!(posterior_oracle(&input, 1000, 50.0, 1).is_err());
    }
}
