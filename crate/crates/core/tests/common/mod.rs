//! Oracles shared by the integration and acceptance targets. Nothing here
//! calls into the estimators or the posterior; the samplers restate the
//! generative model from scratch.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF, Discrete, Poisson as PoissonPmf};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Poisson draw by inversion; adequate for means below ~30.
pub fn poisson<R: Rng>(mu: f64, rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut k = 0usize;
    let mut pmf = (-mu).exp();
    let mut cdf = pmf;
    while u > cdf && k < 1000 {
        k += 1;
        pmf *= mu / k as f64;
        cdf += pmf;
    }
    k
}

/// One lane of `len` vehicles with i.i.d. probe flags: `(deepest probe, count)`.
pub fn flag_lane<R: Rng>(len: usize, p: f64, rng: &mut R) -> (usize, usize) {
    let mut deepest = 0;
    let mut count = 0;
    for pos in 1..=len {
        if rng.random_bool(p) {
            deepest = pos;
            count += 1;
        }
    }
    (deepest, count)
}

/// A full two-lane draw.
#[derive(Debug, Clone, Copy)]
pub struct Draw {
    pub n: usize,
    pub m: usize,
    pub deepest_n: usize,
    pub deepest_m: usize,
    pub probes: usize,
}

impl Draw {
    pub fn sample<R: Rng>(mu_n: f64, mu_m: f64, p: f64, rng: &mut R) -> Self {
        let n = poisson(mu_n, rng);
        let m = poisson(mu_m, rng);
        let (deepest_n, cn) = flag_lane(n, p, rng);
        let (deepest_m, cm) = flag_lane(m, p, rng);
        Draw {
            n,
            m,
            deepest_n,
            deepest_m,
            probes: cn + cm,
        }
    }

    /// Deepest probe over both lanes.
    pub fn l_p(&self) -> usize {
        self.deepest_n.max(self.deepest_m)
    }

    /// The longer lane (ties: N) holds the farthest probe.
    pub fn deepest_in_longer_lane(&self) -> bool {
        let (long, short) = if self.n >= self.m {
            (self.deepest_n, self.deepest_m)
        } else {
            (self.deepest_m, self.deepest_n)
        };
        long > 0 && long >= short
    }
}

pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Two-lane penetration estimate restated: `(c/(1+κ) − 1)/(l − 1)`, clamped.
pub fn p_hat_two_lane(c: usize, l: usize, kappa: f64) -> f64 {
    ((c as f64 / (1.0 + kappa) - 1.0) / (l as f64 - 1.0)).clamp(0.0, 1.0)
}

/// Pearson chi-square of `(observed count, cell probability)` pairs.
/// Cells with expected count below `min_expected` are pooled with the
/// remaining mass into one bin. Returns `(statistic, dof, p-value)`.
pub fn chi_square(cells: &[(usize, f64)], total: usize, min_expected: f64) -> (f64, usize, f64) {
    let total_f = total as f64;
    let mut stat = 0.0;
    let mut bins = 0usize;
    let mut pooled_obs = 0.0;
    let mut pooled_exp = 0.0;
    let mut seen_obs = 0.0;
    let mut seen_prob = 0.0;
    for &(count, prob) in cells {
        let o = count as f64;
        let e = prob * total_f;
        seen_obs += o;
        seen_prob += prob;
        if e >= min_expected {
            stat += (o - e).powi(2) / e;
            bins += 1;
        } else {
            pooled_obs += o;
            pooled_exp += e;
        }
    }
    pooled_obs += total_f - seen_obs;
    pooled_exp += (1.0 - seen_prob).max(0.0) * total_f;
    if pooled_exp > 0.0 {
        stat += (pooled_obs - pooled_exp).powi(2) / pooled_exp;
        bins += 1;
    }
    let dof = bins.saturating_sub(1).max(1);
    let p_value = 1.0 - ChiSquared::new(dof as f64).unwrap().cdf(stat);
    (stat, dof, p_value)
}

/// Independent-Poisson pmf at `(n, m)`.
pub fn poisson_pair(mu_n: f64, mu_m: f64, n: usize, m: usize) -> f64 {
    let pn = if mu_n > 0.0 {
        PoissonPmf::new(mu_n).unwrap().pmf(n as u64)
    } else {
        f64::from(u8::from(n == 0))
    };
    let pm = if mu_m > 0.0 {
        PoissonPmf::new(mu_m).unwrap().pmf(m as u64)
    } else {
        f64::from(u8::from(m == 0))
    };
    pn * pm
}

/// Welch two-sample t statistic.
pub fn welch_t(a: &[f64], b: &[f64]) -> f64 {
    let (ma, sa) = mean_and_se(a);
    let (mb, sb) = mean_and_se(b);
    (ma - mb) / (sa * sa + sb * sb).sqrt()
}
