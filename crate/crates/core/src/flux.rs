//! Boundary flux functions at cell interfaces and nodes.
//!
//! All rules are memoryless: the flux is re-evaluated from the current
//! upstream demand and downstream supply with no hysteresis state.

use serde::Serialize;

use crate::scalar::{max_of, min_of, Scalar};
use crate::{Error, Result};

fn check_nonneg<T: Scalar>(what: &'static str, v: T) -> Result<()> {
    if v < T::zero() {
        return Err(Error::Domain {
            what,
            value: v.to_f64_lossy(),
            lo: 0.0,
            hi: f64::INFINITY,
        });
    }
    Ok(())
}

/// The continuous min rule `q = min{d_up, s_down}`.
pub fn standard_flux<T: Scalar>(demand_up: T, supply_down: T) -> Result<T> {
    check_nonneg("upstream demand", demand_up)?;
    check_nonneg("downstream supply", supply_down)?;
    Ok(min_of(demand_up, supply_down))
}

/// Capacity-drop rule at a bottleneck:
/// `q = d` if `d <= s`, otherwise `q = min{s, C*}`.
///
/// The drop is triggered only on strict `d > s`; there is no tolerance band.
pub fn capdrop_flux<T: Scalar>(demand_up: T, supply_down: T, c_star: T) -> Result<T> {
    check_nonneg("upstream demand", demand_up)?;
    check_nonneg("downstream supply", supply_down)?;
    check_nonneg("dropped capacity", c_star)?;
    if demand_up <= supply_down {
        Ok(demand_up)
    } else {
        Ok(min_of(supply_down, c_star))
    }
}

/// Fluxes through a two-into-one merge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MergeFlux<T> {
    /// Out of the first (mainline) upstream link.
    pub first: T,
    /// Out of the second (on-ramp) upstream link.
    pub second: T,
    /// Into the downstream link; always `first + second`.
    pub total: T,
}

/// Priority merge with capacity drop.
///
/// The downstream supply is first reduced to
/// `s̃ = min{s3, c3 (1 - δ·[d1 + d2 > s3])}`, then split with priority `alpha`
/// for the first upstream link.
pub fn merge_capdrop_flux<T: Scalar>(
    d1: T,
    d2: T,
    s3: T,
    alpha: T,
    delta: T,
    c3: T,
) -> Result<MergeFlux<T>> {
    check_nonneg("first upstream demand", d1)?;
    check_nonneg("second upstream demand", d2)?;
    check_nonneg("downstream supply", s3)?;
    check_nonneg("downstream capacity", c3)?;
    if !(alpha > T::zero() && alpha < T::one()) {
        return Err(Error::Domain {
            what: "merge priority",
            value: alpha.to_f64_lossy(),
            lo: 0.0,
            hi: 1.0,
        });
    }
    if !(delta >= T::zero() && delta < T::one()) {
        return Err(Error::Domain {
            what: "capacity-drop ratio",
            value: delta.to_f64_lossy(),
            lo: 0.0,
            hi: 1.0,
        });
    }
    let total_demand = d1 + d2;
    let reduced = if total_demand > s3 {
        min_of(s3, c3 * (T::one() - delta))
    } else {
        min_of(s3, c3)
    };
    if total_demand <= reduced {
        return Ok(MergeFlux {
            first: d1,
            second: d2,
            total: total_demand,
        });
    }
    let first = min_of(d1, max_of(reduced - d2, alpha * reduced));
    let second = min_of(d2, max_of(reduced - d1, (T::one() - alpha) * reduced));
    Ok(MergeFlux {
        first,
        second,
        total: first + second,
    })
}

/// Piecewise-constant time series `t -> value`, holding each value from its
/// start time until the next breakpoint.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Schedule<T> {
    breakpoints: Vec<(T, T)>,
}

impl<T: Scalar> Schedule<T> {
    pub fn constant(value: T) -> Self {
        Schedule {
            breakpoints: vec![(T::zero(), value)],
        }
    }

    /// Breakpoints `(start_time, value)` with strictly increasing times and
    /// non-negative values. Before the first breakpoint the first value holds.
    pub fn piecewise(breakpoints: Vec<(T, T)>) -> Result<Self> {
        if breakpoints.is_empty() {
            return Err(Error::param("schedule needs at least one breakpoint"));
        }
        if breakpoints.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::param("schedule times must be strictly increasing"));
        }
        if let Some((_, v)) = breakpoints.iter().find(|(_, v)| *v < T::zero()) {
            return Err(Error::param(format!("schedule value {v} is negative")));
        }
        Ok(Schedule { breakpoints })
    }

    pub fn value_at(&self, t: T) -> T {
        let idx = self.breakpoints.partition_point(|(start, _)| *start <= t);
        self.breakpoints[idx.saturating_sub(1)].1
    }

    pub fn max_value(&self) -> T {
        self.breakpoints
            .iter()
            .map(|(_, v)| *v)
            .fold(T::zero(), max_of)
    }

    pub fn breakpoints(&self) -> &[(T, T)] {
        &self.breakpoints
    }
}

/// Flux rule attached to an interface.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum NodeModel<T> {
    /// `min{d, s}`.
    Standard,
    /// Lane-drop bottleneck with dropped capacity `c_star`.
    CapacityDrop { c_star: T },
    /// Two-into-one merge; the second upstream stream is supplied separately.
    MergeCapacityDrop { alpha: T, delta: T, c3: T },
    /// Entry boundary fed by an external demand `d0(t)`.
    ExternalDemand(Schedule<T>),
    /// Exit boundary limited by an external supply `s0(t)`.
    ExternalSupply(Schedule<T>),
}

impl<T: Scalar> NodeModel<T> {
    /// Checks the model against the capacity of the link it feeds.
    pub fn validate(&self, downstream_capacity: T) -> Result<()> {
        match self {
            NodeModel::Standard | NodeModel::ExternalDemand(_) | NodeModel::ExternalSupply(_) => Ok(()),
            NodeModel::CapacityDrop { c_star } => {
                if *c_star <= T::zero() || *c_star >= downstream_capacity {
                    return Err(Error::param(format!(
                        "dropped capacity {c_star} must lie in (0, {downstream_capacity})"
                    )));
                }
                Ok(())
            }
            NodeModel::MergeCapacityDrop { alpha, delta, c3 } => {
                if !(*alpha > T::zero() && *alpha < T::one()) {
                    return Err(Error::param(format!("merge priority {alpha} must lie in (0, 1)")));
                }
                if !(*delta >= T::zero() && *delta < T::one()) {
                    return Err(Error::param(format!("capacity-drop ratio {delta} must lie in [0, 1)")));
                }
                let tol = T::tolerance() * max_of(T::one(), downstream_capacity);
                if (*c3 - downstream_capacity).abs() > tol {
                    return Err(Error::param(format!(
                        "merge capacity {c3} does not match downstream capacity {downstream_capacity}"
                    )));
                }
                Ok(())
            }
        }
    }

    /// Capacity-drop ratio `Δ = 1 - C*/C` implied by this model, if any.
    pub fn drop_ratio(&self, downstream_capacity: T) -> Option<T> {
        match self {
            NodeModel::CapacityDrop { c_star } => Some(T::one() - *c_star / downstream_capacity),
            NodeModel::MergeCapacityDrop { delta, .. } => Some(*delta),
            _ => None,
        }
    }

    /// Flux for a one-to-one interface at time `t`.
    ///
    /// Boundary variants replace the missing side by their schedule. Merges
    /// need two upstream demands and are evaluated with [`Self::merge_flux`];
    /// calling this on a merge treats the second stream as empty.
    pub fn flux(&self, demand_up: T, supply_down: T, t: T) -> Result<T> {
        match self {
            NodeModel::Standard => standard_flux(demand_up, supply_down),
            NodeModel::CapacityDrop { c_star } => capdrop_flux(demand_up, supply_down, *c_star),
            NodeModel::MergeCapacityDrop { .. } => Ok(self.merge_flux(demand_up, T::zero(), supply_down)?.total),
            NodeModel::ExternalDemand(d0) => standard_flux(d0.value_at(t), supply_down),
            NodeModel::ExternalSupply(s0) => standard_flux(demand_up, s0.value_at(t)),
        }
    }

    /// Two-into-one flux; only defined for [`NodeModel::MergeCapacityDrop`].
    pub fn merge_flux(&self, d1: T, d2: T, s3: T) -> Result<MergeFlux<T>> {
        match self {
            NodeModel::MergeCapacityDrop { alpha, delta, c3 } => {
                merge_capdrop_flux(d1, d2, s3, *alpha, *delta, *c3)
            }
            _ => Err(Error::param("merge flux requested from a one-to-one node model")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Rational64;
    use proptest::prelude::*;

    fn r(n: i64, d: i64) -> Rational64 {
        Rational64::new(n, d)
    }

    /// Maximise `q` subject to `q <= d`, `q <= s` and `q <= C*` when `d > s`,
    /// by scanning a grid of candidate flows (plus the active bounds).
    fn optimisation_oracle(d: f64, s: f64, c_star: f64) -> f64 {
        let upper = d.max(s).max(c_star);
        let mut candidates: Vec<f64> = (0..=20_000).map(|i| upper * i as f64 / 20_000.0).collect();
        candidates.extend([d, s, c_star]);
        candidates
            .into_iter()
            .filter(|&q| q <= d && q <= s && (d <= s || q <= c_star))
            .fold(0.0, f64::max)
    }

    #[test]
    fn standard_examples() {
        assert_eq!(standard_flux(r(84, 49), r(120, 49)).unwrap(), r(84, 49));
        assert_eq!(standard_flux(r(0, 1), r(5, 1)).unwrap(), r(0, 1));
        assert_eq!(standard_flux(r(90, 49), r(81, 49)).unwrap(), r(81, 49));
        assert!(standard_flux(-1.0, 1.0).is_err());
        assert!(standard_flux(1.0, -1.0).is_err());
    }

    #[test]
    fn capdrop_examples() {
        let c = 81.0 / 49.0;
        assert_eq!(capdrop_flux(r(84, 49), r(90, 49), r(81, 49)).unwrap(), r(84, 49));
        let d = 90.0 / 49.0;
        let s = d - 1e-9;
        assert_eq!(capdrop_flux(d, s, c).unwrap(), c);
        assert_eq!(optimisation_oracle(d, s, c), c);
        assert_eq!(capdrop_flux(d, 40.0 / 49.0, c).unwrap(), 40.0 / 49.0);
        assert_eq!(optimisation_oracle(d, 40.0 / 49.0, c), 40.0 / 49.0);
        // tie: no drop
        assert_eq!(capdrop_flux(d, d, c).unwrap(), d);
    }

    #[test]
    fn capdrop_matches_optimisation_oracle_on_grid() {
        let c_star = 81.0 / 49.0;
        let cap = 120.0 / 49.0;
        for i in 0..=40 {
            for j in 0..=40 {
                let d = cap * i as f64 / 40.0;
                let s = cap * j as f64 / 40.0;
                let q = capdrop_flux(d, s, c_star).unwrap();
                assert!((q - optimisation_oracle(d, s, c_star)).abs() < 1e-12, "d={d} s={s}");
            }
        }
    }

    #[test]
    fn capdrop_agrees_with_min_rule_off_the_drop_region() {
        let c_star = 81.0 / 49.0;
        let cap = 120.0 / 49.0;
        for i in 0..=60 {
            for j in 0..=60 {
                let d = cap * i as f64 / 60.0;
                let s = cap * j as f64 / 60.0;
                if d <= s || s <= c_star {
                    assert_eq!(capdrop_flux(d, s, c_star).unwrap(), standard_flux(d, s).unwrap());
                }
            }
        }
    }

    #[test]
    fn capdrop_discontinuous_only_on_the_diagonal_above_c_star() {
        let c_star = 81.0 / 49.0;
        let cap = 120.0 / 49.0;
        let h = 1e-9;
        let n = 50;
        for i in 0..=n {
            for j in 0..=n {
                let d = cap * i as f64 / n as f64 + 0.37 * h;
                let s = cap * j as f64 / n as f64 + 0.11 * h;
                let q = capdrop_flux(d, s, c_star).unwrap();
                let jump = [(h, 0.0), (-h, 0.0), (0.0, h), (0.0, -h)]
                    .iter()
                    .filter(|(a, b)| d + a >= 0.0 && s + b >= 0.0)
                    .map(|(a, b)| (capdrop_flux(d + a, s + b, c_star).unwrap() - q).abs())
                    .fold(0.0, f64::max);
                let near_diagonal = (d - s).abs() <= 2.0 * h;
                if near_diagonal && s > c_star + 2.0 * h {
                    assert!(jump > 1e-3, "expected a jump at d={d} s={s}");
                } else if !near_diagonal {
                    assert!(jump <= 2.0 * h, "unexpected jump {jump} at d={d} s={s}");
                }
            }
        }
    }

    #[test]
    fn merge_uncongested_passes_everything() {
        let m = merge_capdrop_flux(0.5, 0.3, 1.0, 0.6, 0.1, 1.0).unwrap();
        assert_eq!((m.first, m.second, m.total), (0.5, 0.3, 0.8));
    }

    #[test]
    fn merge_congested_example() {
        // d1 = d2 = 0.6 c3, s3 = c3: s̃ = 0.9 c3 split evenly
        let c3 = r(120, 49);
        let d = c3 * r(6, 10);
        let m = merge_capdrop_flux(d, d, c3, r(1, 2), r(1, 10), c3).unwrap();
        assert_eq!(m.total, c3 * r(9, 10));
        assert_eq!(m.first, c3 * r(45, 100));
        assert_eq!(m.second, c3 * r(45, 100));
        assert_eq!(m.first + m.second, m.total);
    }

    #[test]
    fn merge_without_ramp_reduces_to_capdrop_when_congested() {
        let c3 = 90.0 / 49.0;
        let delta = 0.1;
        let c_star = c3 * (1.0 - delta);
        for i in 0..=30 {
            for j in 0..=30 {
                let d1 = 2.0 * c3 * i as f64 / 30.0;
                let s3 = c3 * j as f64 / 30.0;
                if d1 <= s3 {
                    continue;
                }
                let m = merge_capdrop_flux(d1, 0.0, s3, 0.7, delta, c3).unwrap();
                assert_eq!(m.second, 0.0);
                assert!((m.total - capdrop_flux(d1, s3, c_star).unwrap()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn merge_rejects_bad_parameters() {
        assert!(merge_capdrop_flux(1.0, 1.0, 1.0, 0.0, 0.1, 1.0).is_err());
        assert!(merge_capdrop_flux(1.0, 1.0, 1.0, 1.0, 0.1, 1.0).is_err());
        assert!(merge_capdrop_flux(1.0, 1.0, 1.0, 0.5, 1.0, 1.0).is_err());
        assert!(merge_capdrop_flux(-1.0, 1.0, 1.0, 0.5, 0.1, 1.0).is_err());
    }

    #[test]
    fn node_model_validation() {
        assert!(NodeModel::CapacityDrop { c_star: 81.0 / 49.0 }.validate(90.0 / 49.0).is_ok());
        assert!(NodeModel::CapacityDrop { c_star: 95.0 / 49.0 }.validate(90.0 / 49.0).is_err());
        assert!(NodeModel::CapacityDrop { c_star: 0.0 }.validate(90.0 / 49.0).is_err());
        let merge = NodeModel::MergeCapacityDrop { alpha: 0.5, delta: 0.1, c3: 2.0 };
        assert!(merge.validate(2.0).is_ok());
        assert!(merge.validate(3.0).is_err());
        assert_eq!(
            NodeModel::CapacityDrop { c_star: r(81, 49) }.drop_ratio(r(90, 49)),
            Some(r(1, 10))
        );
    }

    #[test]
    fn boundary_models_use_schedules() {
        let entry = NodeModel::ExternalDemand(Schedule::piecewise(vec![(0.0, 1.0), (10.0, 2.0)]).unwrap());
        assert_eq!(entry.flux(99.0, 1.5, 5.0).unwrap(), 1.0);
        assert_eq!(entry.flux(99.0, 1.5, 10.0).unwrap(), 1.5);
        let exit = NodeModel::ExternalSupply(Schedule::constant(0.5));
        assert_eq!(exit.flux(1.0, 99.0, 0.0).unwrap(), 0.5);
    }

    #[test]
    fn schedule_validation() {
        assert!(Schedule::<f64>::piecewise(vec![]).is_err());
        assert!(Schedule::piecewise(vec![(1.0, 1.0), (1.0, 2.0)]).is_err());
        assert!(Schedule::piecewise(vec![(0.0, -1.0)]).is_err());
        let s = Schedule::piecewise(vec![(5.0, 1.0), (6.0, 3.0)]).unwrap();
        assert_eq!(s.value_at(0.0), 1.0);
        assert_eq!(s.value_at(7.0), 3.0);
        assert_eq!(s.max_value(), 3.0);
    }

    proptest! {
        #[test]
        fn capdrop_bounds(d in 0.0f64..3.0, s in 0.0f64..3.0, c in 0.1f64..2.0) {
            let q = capdrop_flux(d, s, c).unwrap();
            prop_assert!(q >= 0.0);
            prop_assert!(q <= d.min(s));
            if d > s {
                prop_assert!(q <= c);
            }
        }

        #[test]
        fn merge_conserves_and_respects_bounds(
            d1 in 0.0f64..3.0, d2 in 0.0f64..3.0, s3 in 0.0f64..3.0,
            alpha in 0.01f64..0.99, delta in 0.0f64..0.5, c3 in 0.5f64..3.0,
        ) {
            let m = merge_capdrop_flux(d1, d2, s3, alpha, delta, c3).unwrap();
            prop_assert_eq!(m.first + m.second, m.total);
            prop_assert!(m.first >= 0.0 && m.second >= 0.0);
            prop_assert!(m.first <= d1 && m.second <= d2);
            prop_assert!(m.total <= s3 + 1e-12);
            let reduced = if d1 + d2 > s3 { s3.min(c3 * (1.0 - delta)) } else { s3.min(c3) };
            prop_assert!((m.total - (d1 + d2).min(reduced)).abs() <= 1e-12);
        }
    }
}
