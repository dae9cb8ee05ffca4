//! Lane-assignment laws that keep the two queues in proportion.
//!
//! With `r̄ = r_N / r_M` and lane shares `s_N = l_n + (1-α) l_nm`,
//! `s_M = l_m + α l_nm`, the expected queues are balanced when
//! `r̄ s_N = s_M`.

use std::io::Write;

use serde::Serialize;

use crate::error::{ensure, Error, Result};
use crate::model::{ratio_of_reds, SignalTiming, TurnRatios};

/// Inputs of the balance laws.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BalanceInput {
    pub ratios: TurnRatios,
    pub alpha: f64,
    /// `r_N / r_M`, possibly `+∞`.
    pub r_bar: f64,
}

/// Relative imbalance `|r̄ s_N − s_M| / (r̄ s_N)`.
pub fn imbalance_f(input: &BalanceInput) -> Result<f64> {
    ensure((0.0..=1.0).contains(&input.alpha), || {
        format!("alpha {} outside [0, 1]", input.alpha)
    })?;
    ensure(input.r_bar >= 0.0, || format!("red ratio {} must be >= 0", input.r_bar))?;
    let (s_n, s_m) = input.ratios.lane_shares(input.alpha);
    let denom = input.r_bar * s_n;
    if !(denom > 0.0) {
        return Err(Error::DegenerateConfiguration(format!(
            "imbalance undefined: r_bar * s_N = {denom}"
        )));
    }
    if input.r_bar.is_infinite() {
        return Ok(1.0);
    }
    Ok((denom - s_m).abs() / denom)
}

/// Red ratio that balances the queues for a given `α`.
pub fn r_star(ratios: &TurnRatios, alpha: f64) -> Result<f64> {
    ensure((0.0..=1.0).contains(&alpha), || format!("alpha {alpha} outside [0, 1]"))?;
    let (s_n, s_m) = ratios.lane_shares(alpha);
    if !(s_n > 0.0) {
        return Err(Error::DegenerateConfiguration(
            "r* undefined: no flow can use lane N".into(),
        ));
    }
    Ok(s_m / s_n)
}

/// Assignment share that balances the queues for a given red ratio,
/// clamped to `[0, 1]`. `r̄ = +∞` sends every straight vehicle to M.
pub fn alpha_star(r_bar: f64, ratios: &TurnRatios) -> Result<f64> {
    ensure(r_bar >= 0.0, || format!("red ratio {r_bar} must be >= 0"))?;
    let l_nm = ratios.l_nm();
    if l_nm <= 0.0 {
        return Err(Error::NoCommonFlow);
    }
    if r_bar.is_infinite() {
        return Ok(1.0);
    }
    let raw = (r_bar * ratios.l_n() + r_bar * l_nm - ratios.l_m()) / (l_nm * (r_bar + 1.0));
    Ok(raw.clamp(0.0, 1.0))
}

/// Range of red ratios reachable by some `α ∈ [0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BalanceInterval {
    pub lower: f64,
    /// `+∞` when `l_n = 0`.
    pub upper: f64,
}

impl BalanceInterval {
    pub fn contains(&self, r_bar: f64) -> bool {
        self.lower <= r_bar && r_bar <= self.upper
    }
}

/// `[l_m / (l_n + l_nm), (l_m + l_nm) / l_n]`.
pub fn interval_i(ratios: &TurnRatios) -> Result<BalanceInterval> {
    let lower_den = ratios.l_n() + ratios.l_nm();
    if !(lower_den > 0.0) {
        return Err(Error::DegenerateConfiguration(
            "balance interval undefined: no flow can use lane N".into(),
        ));
    }
    let upper = if ratios.l_n() > 0.0 {
        (ratios.l_m() + ratios.l_nm()) / ratios.l_n()
    } else {
        f64::INFINITY
    };
    Ok(BalanceInterval {
        lower: ratios.l_m() / lower_den,
        upper,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectoryPoint {
    pub t: f64,
    pub r_n: f64,
    pub r_m: f64,
    /// `None` while both lanes are green.
    pub r_bar: Option<f64>,
    pub alpha_star: Option<f64>,
}

/// `r̄(t)` and `α*(t)` over one cycle, sampled every `dt` from `t0`.
pub fn trajectory_alpha_r(
    timing: &SignalTiming,
    ratios: &TurnRatios,
    t0: f64,
    dt: f64,
) -> Result<Vec<TrajectoryPoint>> {
    ensure(dt > 0.0, || format!("step {dt} must be > 0"))?;
    if ratios.l_nm() <= 0.0 {
        return Err(Error::NoCommonFlow);
    }
    let steps = (timing.cycle_s() / dt).round() as usize;
    (0..=steps)
        .map(|k| {
            let t = t0 + k as f64 * dt;
            let (r_n, r_m) = timing.red_elapsed_pair(t);
            let r_bar = ratio_of_reds(r_n, r_m);
            let alpha_star = r_bar.map(|r| alpha_star(r, ratios)).transpose()?;
            Ok(TrajectoryPoint {
                t,
                r_n,
                r_m,
                r_bar,
                alpha_star,
            })
        })
        .collect()
}

/// Columns `t, r_N, r_M, r_bar, alpha_star`; undefined values are empty
/// and `r̄ = +∞` is written as `inf`.
pub fn write_trajectory_csv<W: Write>(points: &[TrajectoryPoint], out: W) -> std::result::Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "r_N", "r_M", "r_bar", "alpha_star"])?;
    let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    for p in points {
        w.write_record([
            p.t.to_string(),
            p.r_n.to_string(),
            p.r_m.to_string(),
            opt(p.r_bar),
            opt(p.alpha_star),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::RedWindow;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn ratios(n: f64, m: f64, nm: f64) -> TurnRatios {
        TurnRatios::from_flows(n, m, nm).unwrap()
    }

    #[test]
    fn alpha_star_balances_at_r_star() {
        let t = ratios(100.0, 200.0, 125.0);
        let a = alpha_star(1.0, &t).unwrap();
        assert_abs_diff_eq!(a, 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(r_star(&t, a).unwrap(), 1.0, epsilon = 1e-12);
        let f = imbalance_f(&BalanceInput {
            ratios: t,
            alpha: a,
            r_bar: 1.0,
        })
        .unwrap();
        assert_abs_diff_eq!(f, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn table_alphas_at_equal_red() {
        let cases = [
            ((100.0, 200.0, 125.0), 0.1),
            ((75.0, 125.0, 100.0), 0.25),
            ((200.0, 200.0, 50.0), 0.5),
            ((125.0, 75.0, 100.0), 0.75),
            ((200.0, 100.0, 125.0), 0.9),
        ];
        for ((n, m, nm), expected) in cases {
            assert_abs_diff_eq!(alpha_star(1.0, &ratios(n, m, nm)).unwrap(), expected, epsilon = 1e-12);
        }
    }

    #[test]
    fn infinite_ratio_and_no_common_flow() {
        let t = ratios(1.0, 1.0, 1.0);
        assert_eq!(alpha_star(f64::INFINITY, &t).unwrap(), 1.0);
        assert!(matches!(
            alpha_star(1.0, &ratios(1.0, 1.0, 0.0)),
            Err(Error::NoCommonFlow)
        ));
        assert!(alpha_star(-1.0, &t).is_err());
    }

    #[test]
    fn interval_for_zero_l_n_is_unbounded() {
        let i = interval_i(&ratios(0.0, 1.0, 1.0)).unwrap();
        assert_eq!(i.upper, f64::INFINITY);
        assert_abs_diff_eq!(i.lower, 1.0);
        assert!(i.contains(1e9));
    }

    #[test]
    fn alpha_star_long_red_limit() {
        // equal movement flows: α* → 1/2 as both reds grow in lockstep
        let t = ratios(1.0, 1.0, 1.0);
        let timing = SignalTiming::new(4000.0, RedWindow::new(0.0, 3990.0), RedWindow::new(8.0, 3990.0)).unwrap();
        let pts = trajectory_alpha_r(&timing, &t, 0.0, 10.0).unwrap();
        let last = pts.iter().find(|p| p.t == 3990.0).unwrap();
        assert!((last.alpha_star.unwrap() - 0.5).abs() < 0.005);
    }

    #[test]
    fn trajectory_alpha_one_when_only_n_red() {
        let t = ratios(1.0, 1.0, 1.0);
        let timing = SignalTiming::new(90.0, RedWindow::new(4.0, 49.0), RedWindow::new(12.0, 49.0)).unwrap();
        let pts = trajectory_alpha_r(&timing, &t, 0.0, 1.0).unwrap();
        let at = |t: f64| pts.iter().find(|p| p.t == t).unwrap();
        assert_eq!(at(2.0).alpha_star, None);
        assert_eq!(at(10.0).alpha_star, Some(1.0));
        // r̄ = 2 at t = 20 saturates the clamp
        assert_eq!(at(20.0).r_bar, Some(2.0));
        assert_eq!(at(20.0).alpha_star, Some(1.0));
        let mut buf = Vec::new();
        write_trajectory_csv(&pts, &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().contains(",inf,1\n"));
    }

    fn ratios_strategy() -> impl Strategy<Value = TurnRatios> {
        (0.01f64..1.0, 0.01f64..1.0, 0.01f64..1.0).prop_map(|(n, m, nm)| ratios(n, m, nm))
    }

    fn inside(t: &TurnRatios, u: f64) -> f64 {
        let i = interval_i(t).unwrap();
        (i.lower + u * (i.upper - i.lower)).clamp(i.lower, i.upper)
    }

    proptest! {
        #[test]
        fn r_star_of_unclamped_alpha_star_is_identity(t in ratios_strategy(), u in 0.0f64..=1.0) {
            let r = inside(&t, u);
            let a = alpha_star(r, &t).unwrap();
            prop_assert!((r_star(&t, a).unwrap() - r).abs() <= 1e-9 * r.max(1.0));
        }

        #[test]
        fn alpha_star_nondecreasing_in_ratio(t in ratios_strategy(), r1 in 0.0f64..50.0, dr in 0.0f64..50.0) {
            prop_assert!(alpha_star(r1, &t).unwrap() <= alpha_star(r1 + dr, &t).unwrap() + 1e-12);
        }

        #[test]
        fn alpha_star_in_unit_interval(t in ratios_strategy(), r in 0.0f64..1e6) {
            let a = alpha_star(r, &t).unwrap();
            prop_assert!((0.0..=1.0).contains(&a));
        }

        #[test]
        fn imbalance_vanishes_inside_interval(t in ratios_strategy(), u in 0.0f64..=1.0) {
            let r = inside(&t, u);
            let a = alpha_star(r, &t).unwrap();
            let f = imbalance_f(&BalanceInput { ratios: t, alpha: a, r_bar: r }).unwrap();
            prop_assert!(f < 1e-9);
        }
    }
}
