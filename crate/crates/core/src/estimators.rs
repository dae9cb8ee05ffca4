//! Primary traffic parameters from probe reports: last-probe position,
//! penetration ratio, arrival rate and turn ratios.

use std::collections::{HashMap, HashSet};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{LinkGeometry, Movement};

/// Queue position (in vehicles) of the farthest queued probe, inverting
/// `ρ = ρ_0 + l L_V + (l-1) G_V` and rounding to the nearest integer.
///
/// Ties round half away from zero. A probe that is queued always occupies
/// at least position 1, so a rounded 0 is lifted to 1.
pub fn last_probe_location(max_probe_rho: f64, geometry: &LinkGeometry) -> u32 {
    let pitch = geometry.vehicle_length + geometry.gap;
    let pos = ((max_probe_rho - geometry.stop_offset + geometry.gap) / pitch).round();
    if pos < 1.0 {
        1
    } else {
        pos as u32
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PenetrationEstimate {
    /// Clamped into `[0, 1]`; NaN when unusable.
    pub p_hat: f64,
    /// Unclamped formula value; NaN when unusable.
    pub raw: f64,
    pub usable: bool,
}

impl PenetrationEstimate {
    fn unusable() -> Self {
        PenetrationEstimate {
            p_hat: f64::NAN,
            raw: f64::NAN,
            usable: false,
        }
    }

    fn from_raw(raw: f64) -> Self {
        PenetrationEstimate {
            p_hat: raw.clamp(0.0, 1.0),
            raw,
            usable: true,
        }
    }

    pub fn value(&self) -> Option<f64> {
        self.usable.then_some(self.p_hat)
    }
}

/// Single-lane estimator `(c_p - 1) / (l_p - 1)`, defined for `l_p > 1`.
pub fn estimate_p_one_lane(c_p: u32, l_p: u32) -> PenetrationEstimate {
    if l_p > 1 && c_p >= 1 {
        PenetrationEstimate::from_raw((f64::from(c_p) - 1.0) / (f64::from(l_p) - 1.0))
    } else {
        PenetrationEstimate::unusable()
    }
}

/// Two-lane estimator `(c_p/(1+κ) - 1) / (l_p - 1)`, defined for
/// `l_p > 1` and `c_p > 1`.
pub fn estimate_p_two_lane(c_p: u32, l_p: u32, kappa: f64) -> PenetrationEstimate {
    if l_p > 1 && c_p > 1 {
        let c_kappa = f64::from(c_p) / (1.0 + kappa);
        PenetrationEstimate::from_raw((c_kappa - 1.0) / (f64::from(l_p) - 1.0))
    } else {
        PenetrationEstimate::unusable()
    }
}

/// `λ̂ = (x_p(t1) - x_p(t0)) / (p (t1 - t0))` over an interval where every
/// lane is red.
pub fn estimate_lambda(x_p_t1: u32, x_p_t0: u32, p: f64, t0: f64, t1: f64) -> Result<f64> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::InvalidParameter(format!("p = {p} must lie in (0, 1]")));
    }
    if !(t1 > t0) {
        return Err(Error::InvalidParameter(format!("need t1 > t0, got [{t0}, {t1}]")));
    }
    Ok((f64::from(x_p_t1) - f64::from(x_p_t0)) / (p * (t1 - t0)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LambdaWindow {
    pub t0: f64,
    pub t1: f64,
    pub x_p_t0: u32,
    pub x_p_t1: u32,
}

/// Pools probe accumulation over several all-red windows:
/// `Σ Δx_p / (p Σ Δt)`.
#[derive(Debug, Clone, Default)]
pub struct LambdaAccumulator {
    windows: Vec<LambdaWindow>,
}

impl LambdaAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, window: LambdaWindow) -> Result<()> {
        if !(window.t1 > window.t0) {
            return Err(Error::InvalidParameter(format!(
                "empty window [{}, {}]",
                window.t0, window.t1
            )));
        }
        self.windows.push(window);
        Ok(())
    }

    pub fn windows(&self) -> &[LambdaWindow] {
        &self.windows
    }

    pub fn total_seconds(&self) -> f64 {
        self.windows.iter().map(|w| w.t1 - w.t0).sum()
    }

    pub fn total_probe_increase(&self) -> f64 {
        self.windows
            .iter()
            .map(|w| f64::from(w.x_p_t1) - f64::from(w.x_p_t0))
            .sum()
    }

    /// Pooled estimate; `None` when no window was recorded.
    pub fn estimate(&self, p: f64) -> Result<Option<f64>> {
        if self.windows.is_empty() {
            return Ok(None);
        }
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::InvalidParameter(format!("p = {p} must lie in (0, 1]")));
        }
        Ok(Some(self.total_probe_increase() / (p * self.total_seconds())))
    }

    pub fn per_window(&self, p: f64) -> Result<Vec<f64>> {
        self.windows
            .iter()
            .map(|w| estimate_lambda(w.x_p_t1, w.x_p_t0, p, w.t0, w.t1))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TurnRatioEstimate {
    pub l_n_hat: f64,
    pub l_m_hat: f64,
    pub l_nm_hat: f64,
    pub sample_count: usize,
}

impl TurnRatioEstimate {
    pub fn usable(&self) -> bool {
        self.sample_count > 0
    }
}

/// A probe leaving the junction, as seen on an outgoing link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExitSighting {
    pub id: u64,
    pub movement: Movement,
}

/// Follows probe identifiers seen on the entry link to the outgoing link
/// they show up on later, and counts the resulting movements.
pub fn estimate_turn_ratios(
    probe_ids_on_entry: impl IntoIterator<Item = u64>,
    exits: impl IntoIterator<Item = ExitSighting>,
) -> TurnRatioEstimate {
    let seen: HashSet<u64> = probe_ids_on_entry.into_iter().collect();
    let mut counts: HashMap<Movement, usize> = HashMap::new();
    let mut classified = HashSet::new();
    for exit in exits {
        if seen.contains(&exit.id) && classified.insert(exit.id) {
            *counts.entry(exit.movement).or_default() += 1;
        }
    }
    let total = classified.len();
    if total == 0 {
        return TurnRatioEstimate {
            l_n_hat: f64::NAN,
            l_m_hat: f64::NAN,
            l_nm_hat: f64::NAN,
            sample_count: 0,
        };
    }
    let share = |mv| counts.get(&mv).copied().unwrap_or(0) as f64 / total as f64;
    let l_n_hat = share(Movement::Right);
    let l_m_hat = share(Movement::Left);
    TurnRatioEstimate {
        l_n_hat,
        l_m_hat,
        // Derived from the other two so the three always sum to one.
        l_nm_hat: (1.0 - l_n_hat - l_m_hat).max(0.0),
        sample_count: total,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn last_probe_location_inverts_slots() {
        let g = LinkGeometry::default();
        assert_eq!(last_probe_location(52.5, &g), 6);
        assert_eq!(last_probe_location(g.stop_offset, &g), 1);
        // (53.9 - 10 + 2.5) / 7.5 = 6.1867
        assert_eq!(last_probe_location(53.9, &g), 6);
        for k in 1..40 {
            assert_eq!(last_probe_location(g.slot_position(k), &g), k);
        }
    }

    #[test]
    fn last_probe_location_ties_round_away_from_zero() {
        let g = LinkGeometry::default();
        // exactly 6.5 positions
        let rho = g.stop_offset - g.gap + 6.5 * (g.vehicle_length + g.gap);
        assert_eq!(last_probe_location(rho, &g), 7);
    }

    #[test]
    fn one_lane_examples() {
        assert_eq!(estimate_p_one_lane(5, 5).value(), Some(1.0));
        assert_eq!(estimate_p_one_lane(1, 9).value(), Some(0.0));
        assert!(!estimate_p_one_lane(1, 1).usable);
        assert!(!estimate_p_one_lane(0, 0).usable);
    }

    #[test]
    fn two_lane_worked_example() {
        let est = estimate_p_two_lane(8, 9, 0.75);
        let expected = (8.0 / 1.75 - 1.0) / 8.0;
        assert!((est.raw - expected).abs() < 1e-12);
        assert_eq!((est.p_hat * 100.0).round() / 100.0, 0.45);
    }

    #[test]
    fn two_lane_full_penetration_and_clamp() {
        assert_relative_eq!(estimate_p_two_lane(18, 9, 1.0).p_hat, 1.0, epsilon = 1e-15);
        let over = estimate_p_two_lane(10, 2, 0.0);
        assert_eq!(over.p_hat, 1.0);
        assert_eq!(over.raw, 9.0);
        assert!(!estimate_p_two_lane(1, 5, 0.5).usable);
    }

    #[test]
    fn lambda_examples_and_errors() {
        assert_relative_eq!(estimate_lambda(30, 20, 0.5, 0.0, 20.0).unwrap(), 1.0);
        assert_eq!(estimate_lambda(7, 7, 0.5, 0.0, 20.0).unwrap(), 0.0);
        assert!(estimate_lambda(3, 1, 0.0, 0.0, 10.0).is_err());
        assert!(estimate_lambda(3, 1, 0.5, 10.0, 10.0).is_err());
    }

    #[test]
    fn lambda_accumulator_pools_windows() {
        let mut acc = LambdaAccumulator::new();
        assert_eq!(acc.estimate(0.5).unwrap(), None);
        acc.push(LambdaWindow {
            t0: 0.0,
            t1: 10.0,
            x_p_t0: 2,
            x_p_t1: 5,
        })
        .unwrap();
        acc.push(LambdaWindow {
            t0: 90.0,
            t1: 120.0,
            x_p_t0: 4,
            x_p_t1: 9,
        })
        .unwrap();
        assert_relative_eq!(acc.estimate(0.5).unwrap().unwrap(), 8.0 / (0.5 * 40.0));
        assert_eq!(acc.per_window(0.5).unwrap().len(), 2);
        assert!(acc
            .push(LambdaWindow {
                t0: 3.0,
                t1: 3.0,
                x_p_t0: 0,
                x_p_t1: 0
            })
            .is_err());
    }

    #[test]
    fn turn_ratio_examples() {
        let exits = (0..10).map(|id| ExitSighting {
            id,
            movement: Movement::Straight,
        });
        let est = estimate_turn_ratios(0..10, exits);
        assert_eq!((est.l_n_hat, est.l_m_hat, est.l_nm_hat), (0.0, 0.0, 1.0));
        assert_eq!(est.sample_count, 10);

        let none = estimate_turn_ratios(std::iter::empty(), std::iter::empty());
        assert!(!none.usable());

        // exits of vehicles never seen as probes are ignored
        let est = estimate_turn_ratios(
            [1, 2],
            [
                ExitSighting {
                    id: 1,
                    movement: Movement::Right,
                },
                ExitSighting {
                    id: 2,
                    movement: Movement::Left,
                },
                ExitSighting {
                    id: 3,
                    movement: Movement::Left,
                },
            ],
        );
        assert_eq!((est.l_n_hat, est.l_m_hat, est.l_nm_hat), (0.5, 0.5, 0.0));
    }

    proptest! {
        #[test]
        fn full_probe_queue_gives_one(l_p in 2u32..500) {
            prop_assert_eq!(estimate_p_one_lane(l_p, l_p).p_hat, 1.0);
        }

        #[test]
        fn two_lane_reduces_to_one_lane_at_zero_kappa(c_p in 2u32..60, l_p in 2u32..60) {
            let a = estimate_p_two_lane(c_p, l_p, 0.0);
            let b = estimate_p_one_lane(c_p, l_p);
            prop_assert_eq!(a.raw, b.raw);
            prop_assert_eq!(a.p_hat, b.p_hat);
        }

        #[test]
        fn lambda_scale_consistent(dx in 0u32..500, p in 0.01..0.5f64, dt in 1.0..500.0f64) {
            let a = estimate_lambda(dx, 0, p, 0.0, dt).unwrap();
            let b = estimate_lambda(2 * dx, 0, 2.0 * p, 0.0, dt).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a));
        }

        #[test]
        fn turn_ratios_sum_to_one(moves in proptest::collection::vec(0usize..3, 1..200)) {
            let exits: Vec<_> = moves.iter().enumerate()
                .map(|(i, &k)| ExitSighting { id: i as u64, movement: Movement::ALL[k] })
                .collect();
            let est = estimate_turn_ratios(0..moves.len() as u64, exits);
            prop_assert!(est.usable());
            let sum = est.l_n_hat + est.l_m_hat + est.l_nm_hat;
            prop_assert!((sum - 1.0).abs() <= 1e-12);
            for v in [est.l_n_hat, est.l_m_hat, est.l_nm_hat] {
                prop_assert!((-1e-12..=1.0 + 1e-12).contains(&v));
            }
        }
    }
}
