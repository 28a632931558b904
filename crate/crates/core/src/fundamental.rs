//! Steady-state traffic laws: fundamental diagrams, the demand/supply
//! encoding of traffic states and the congestion-level inverse.
//!
//! Units are SI throughout: densities in veh/m, flows in veh/s, speeds in m/s.

use serde::Serialize;

use crate::scalar::{approx_eq, max_of, min_of, Scalar};
use crate::{Error, Result};

/// A traffic state encoded by its demand `d` (sending flow) and supply `s`
/// (receiving flow). A state lying on a diagram with capacity `C` satisfies
/// `max{d, s} = C`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DemandSupply<T> {
    pub demand: T,
    pub supply: T,
}

impl<T: Scalar> DemandSupply<T> {
    pub fn new(demand: T, supply: T) -> Result<Self> {
        if demand < T::zero() || supply < T::zero() {
            return Err(Error::InvalidState {
                demand: demand.to_f64_lossy(),
                supply: supply.to_f64_lossy(),
                capacity: f64::NAN,
            });
        }
        Ok(DemandSupply { demand, supply })
    }

    /// Flow carried by the state, `min{d, s}`.
    pub fn flow(&self) -> T {
        min_of(self.demand, self.supply)
    }

    /// Congestion level `d / s`.
    pub fn congestion(&self) -> Congestion<T> {
        if self.supply == T::zero() {
            Congestion::Jammed
        } else {
            Congestion::Level(self.demand / self.supply)
        }
    }

    /// Over-critical (congested) side of the diagram: `d > s`.
    pub fn is_congested(&self) -> bool {
        self.demand > self.supply
    }

    pub fn is_on_diagram(&self, capacity: T) -> bool {
        approx_eq(max_of(self.demand, self.supply), capacity, T::tolerance())
    }
}

/// Congestion level `γ = d / s`. The jam state has `s = 0` and is encoded
/// separately so exact scalar types need no infinity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Congestion<T> {
    Level(T),
    Jammed,
}

impl Congestion<f64> {
    /// Maps `+∞` to [`Congestion::Jammed`].
    pub fn from_f64(gamma: f64) -> Self {
        if gamma.is_infinite() && gamma > 0.0 {
            Congestion::Jammed
        } else {
            Congestion::Level(gamma)
        }
    }
}

/// A unimodal flow-density law for one homogeneous link.
///
/// Implementors provide the primitive quantities; demand, supply and the
/// state conversions have default implementations in terms of them.
pub trait FundamentalDiagram<T: Scalar> {
    fn jam_density(&self) -> T;

    fn critical_density(&self) -> T;

    fn capacity(&self) -> T;

    /// Largest characteristic speed magnitude, used for the CFL bound.
    fn max_wave_speed(&self) -> T;

    /// Flow on `[0, jam_density]`, with no domain check.
    fn flow_unchecked(&self, k: T) -> T;

    /// Inverse of the congestion level on the diagram.
    fn density_from_congestion(&self, gamma: Congestion<T>) -> Result<T>;

    /// One-sided characteristic speed `Q'(k⁻)`.
    fn char_speed_left(&self, k: T) -> T;

    /// One-sided characteristic speed `Q'(k⁺)`.
    fn char_speed_right(&self, k: T) -> T;

    /// Validates `0 <= k <= jam` with the scalar tolerance and clamps drift.
    fn check_density(&self, k: T) -> Result<T> {
        let tol = T::tolerance();
        let jam = self.jam_density();
        if k < -tol || k > jam + tol {
            return Err(Error::Domain {
                what: "density",
                value: k.to_f64_lossy(),
                lo: 0.0,
                hi: jam.to_f64_lossy(),
            });
        }
        Ok(max_of(T::zero(), min_of(k, jam)))
    }

    fn flow(&self, k: T) -> Result<T> {
        let k = self.check_density(k)?;
        Ok(self.flow_unchecked(k))
    }

    /// Increasing branch, `Q(min{k_c, k})`.
    fn demand(&self, k: T) -> Result<T> {
        let k = self.check_density(k)?;
        if k >= self.critical_density() {
            Ok(self.capacity())
        } else {
            Ok(self.flow_unchecked(k))
        }
    }

    /// Decreasing branch, `Q(max{k_c, k})`.
    fn supply(&self, k: T) -> Result<T> {
        let k = self.check_density(k)?;
        if k <= self.critical_density() {
            Ok(self.capacity())
        } else {
            Ok(self.flow_unchecked(k))
        }
    }

    fn state_from_density(&self, k: T) -> Result<DemandSupply<T>> {
        Ok(DemandSupply {
            demand: self.demand(k)?,
            supply: self.supply(k)?,
        })
    }

    /// Rejects states with a negative component or `max{d, s} != C`.
    fn check_state(&self, st: DemandSupply<T>) -> Result<()> {
        if st.demand < T::zero() || st.supply < T::zero() || !st.is_on_diagram(self.capacity()) {
            return Err(Error::InvalidState {
                demand: st.demand.to_f64_lossy(),
                supply: st.supply.to_f64_lossy(),
                capacity: self.capacity().to_f64_lossy(),
            });
        }
        Ok(())
    }

    fn density_from_state(&self, st: DemandSupply<T>) -> Result<T> {
        self.check_state(st)?;
        match st.congestion() {
            Congestion::Jammed => Ok(self.jam_density()),
            gamma => self.density_from_congestion(gamma),
        }
    }
}

/// Triangular fundamental diagram
/// `Q(n, k) = min{v* k, (n - k / k*) / τ}` for an `n`-lane link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TriangularFd<T> {
    lanes: u32,
    free_flow_speed: T,
    time_gap: T,
    jam_density_per_lane: T,
}

impl<T: Scalar> TriangularFd<T> {
    pub fn new(lanes: u32, free_flow_speed: T, time_gap: T, jam_density_per_lane: T) -> Result<Self> {
        if lanes == 0 {
            return Err(Error::param("lane count must be at least 1"));
        }
        for (name, v) in [
            ("free-flow speed", free_flow_speed),
            ("time gap", time_gap),
            ("jam density per lane", jam_density_per_lane),
        ] {
            if v <= T::zero() {
                return Err(Error::param(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(TriangularFd {
            lanes,
            free_flow_speed,
            time_gap,
            jam_density_per_lane,
        })
    }

    /// `v* = 30 m/s`, `τ = 1.4 s`, `k* = 1/7 veh/m` per lane, for which
    /// `k_c(n) = n/49` and `C(n) = 30n/49`.
    pub fn reference(lanes: u32) -> Result<Self> {
        Self::new(lanes, T::ratio(30, 1), T::ratio(7, 5), T::ratio(1, 7))
    }

    pub fn lanes(&self) -> u32 {
        self.lanes
    }

    pub fn free_flow_speed(&self) -> T {
        self.free_flow_speed
    }

    pub fn time_gap(&self) -> T {
        self.time_gap
    }

    pub fn jam_density_per_lane(&self) -> T {
        self.jam_density_per_lane
    }

    /// Congested-branch slope `-1 / (τ k*)`.
    pub fn backward_wave_speed(&self) -> T {
        -(T::one() / (self.time_gap * self.jam_density_per_lane))
    }

    fn n(&self) -> T {
        T::from_count(self.lanes)
    }
}

impl<T: Scalar> FundamentalDiagram<T> for TriangularFd<T> {
    fn jam_density(&self) -> T {
        self.n() * self.jam_density_per_lane
    }

    fn critical_density(&self) -> T {
        self.n() * self.jam_density_per_lane
            / (T::one() + self.time_gap * self.free_flow_speed * self.jam_density_per_lane)
    }

    fn capacity(&self) -> T {
        self.free_flow_speed * self.critical_density()
    }

    fn max_wave_speed(&self) -> T {
        max_of(self.free_flow_speed, self.backward_wave_speed().abs())
    }

    fn flow_unchecked(&self, k: T) -> T {
        if k <= self.critical_density() {
            self.free_flow_speed * k
        } else {
            (self.n() - k / self.jam_density_per_lane) / self.time_gap
        }
    }

    fn density_from_congestion(&self, gamma: Congestion<T>) -> Result<T> {
        match gamma {
            Congestion::Jammed => Ok(self.jam_density()),
            Congestion::Level(g) if g < T::zero() => Err(Error::Domain {
                what: "congestion level",
                value: g.to_f64_lossy(),
                lo: 0.0,
                hi: f64::INFINITY,
            }),
            Congestion::Level(g) if g <= T::one() => Ok(g * self.critical_density()),
            // supply = C / γ on the congested branch
            Congestion::Level(g) => Ok(self.jam_density_per_lane
                * (self.n() - self.time_gap * self.capacity() / g)),
        }
    }

    fn char_speed_left(&self, k: T) -> T {
        if k <= self.critical_density() {
            self.free_flow_speed
        } else {
            self.backward_wave_speed()
        }
    }

    fn char_speed_right(&self, k: T) -> T {
        if k < self.critical_density() {
            self.free_flow_speed
        } else {
            self.backward_wave_speed()
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

    fn exact(lanes: u32) -> TriangularFd<Rational64> {
        TriangularFd::reference(lanes).unwrap()
    }

    #[test]
    fn reference_parameters_give_n_over_49() {
        for n in 1..=6u32 {
            let fd = exact(n);
            assert_eq!(fd.critical_density(), r(n as i64, 49));
            assert_eq!(fd.capacity(), r(30 * n as i64, 49));
        }
    }

    #[test]
    fn flow_examples() {
        assert_eq!(exact(3).flow(r(3, 49)).unwrap(), r(90, 49));
        assert_eq!(exact(4).flow(r(4, 49)).unwrap(), r(120, 49));
        assert_eq!(exact(3).flow(r(0, 1)).unwrap(), r(0, 1));
        let fd = Fd::reference(3).unwrap();
        assert!((fd.flow(3.0 / 49.0).unwrap() - 90.0 / 49.0).abs() < 1e-12);
    }

    type Fd = TriangularFd<f64>;

    #[test]
    fn flow_rejects_out_of_domain() {
        let fd = Fd::reference(3).unwrap();
        assert!(matches!(fd.flow(-0.01), Err(Error::Domain { .. })));
        assert!(matches!(fd.flow(3.0 / 7.0 + 1e-6), Err(Error::Domain { .. })));
        // drift inside the tolerance is clamped
        assert_eq!(fd.flow(-1e-12).unwrap(), 0.0);
        assert_eq!(fd.flow(3.0 / 7.0 + 1e-12).unwrap(), 0.0);
    }

    #[test]
    fn demand_supply_examples() {
        let fd = exact(3);
        assert_eq!(fd.demand(r(0, 1)).unwrap(), r(0, 1));
        assert_eq!(fd.supply(r(0, 1)).unwrap(), r(90, 49));
        assert_eq!(fd.demand(r(3, 49)).unwrap(), r(90, 49));
        assert_eq!(fd.supply(r(3, 49)).unwrap(), r(90, 49));
        // jam: full demand, no supply
        assert_eq!(fd.demand(r(3, 7)).unwrap(), r(90, 49));
        assert_eq!(fd.supply(r(3, 7)).unwrap(), r(0, 1));
    }

    #[test]
    fn congestion_inverse_examples() {
        assert_eq!(exact(4).density_from_congestion(Congestion::Level(r(1, 1))).unwrap(), r(4, 49));
        assert_eq!(
            exact(3).density_from_congestion(Congestion::Level(r(90, 81))).unwrap(),
            r(48, 490)
        );
        assert_eq!(exact(3).density_from_congestion(Congestion::Level(r(0, 1))).unwrap(), r(0, 1));
        assert_eq!(exact(3).density_from_congestion(Congestion::Jammed).unwrap(), r(3, 7));
        assert_eq!(
            Fd::reference(3).unwrap().density_from_congestion(Congestion::from_f64(f64::INFINITY)).unwrap(),
            3.0 / 7.0
        );
        assert!(exact(3).density_from_congestion(Congestion::Level(r(-1, 2))).is_err());
    }

    #[test]
    fn closed_form_inverse_for_reference_parameters() {
        // k = nγ/49 for γ <= 1, n/7 - 6n/(49γ) otherwise
        for n in 1..=5i64 {
            let fd = exact(n as u32);
            for (p, q) in [(1, 3), (7, 10), (1, 1), (11, 10), (3, 1), (40, 7)] {
                let g = r(p, q);
                let want = if g <= r(1, 1) {
                    r(n, 49) * g
                } else {
                    r(n, 7) - r(6 * n, 49) / g
                };
                assert_eq!(fd.density_from_congestion(Congestion::Level(g)).unwrap(), want);
            }
        }
    }

    #[test]
    fn state_round_trip_examples() {
        let fd = exact(3);
        let st = fd.state_from_density(r(3, 49)).unwrap();
        assert_eq!(st, DemandSupply { demand: r(90, 49), supply: r(90, 49) });
        assert_eq!(fd.density_from_state(st).unwrap(), r(3, 49));

        let st = fd.state_from_density(r(28, 490)).unwrap();
        assert_eq!(st, DemandSupply { demand: r(84, 49), supply: r(90, 49) });
        assert_eq!(fd.density_from_state(st).unwrap(), r(28, 490));

        let st = fd.state_from_density(r(0, 1)).unwrap();
        assert_eq!(st, DemandSupply { demand: r(0, 1), supply: r(90, 49) });
        assert_eq!(fd.density_from_state(st).unwrap(), r(0, 1));
    }

    #[test]
    fn off_diagram_state_is_rejected() {
        let fd = exact(3);
        let bad = DemandSupply { demand: r(1, 1), supply: r(1, 1) };
        assert!(matches!(fd.density_from_state(bad), Err(Error::InvalidState { .. })));
        assert!(DemandSupply::new(-1.0, 1.0).is_err());
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(Fd::new(0, 30.0, 1.4, 1.0 / 7.0).is_err());
        assert!(Fd::new(3, -30.0, 1.4, 1.0 / 7.0).is_err());
        assert!(Fd::new(3, 30.0, 0.0, 1.0 / 7.0).is_err());
    }

    #[test]
    fn single_precision_works() {
        let fd = TriangularFd::<f32>::reference(3).unwrap();
        assert!((fd.capacity() - 90.0 / 49.0).abs() < 1e-5);
        let k = fd.density_from_state(fd.state_from_density(0.07).unwrap()).unwrap();
        assert!((k - 0.07).abs() < 1e-5);
    }

    #[test]
    fn unimodal_and_branch_consistent_on_grid() {
        for n in 1..=5 {
            let fd = Fd::reference(n).unwrap();
            let jam = fd.jam_density();
            let kc = fd.critical_density();
            let cap = fd.capacity();
            let m = 2000;
            let mut prev = (0.0, fd.flow(0.0).unwrap());
            for i in 1..=m {
                let k = jam * i as f64 / m as f64;
                let q = fd.flow(k).unwrap();
                if k <= kc {
                    assert!(q >= prev.1 - 1e-15);
                } else if prev.0 >= kc {
                    assert!(q <= prev.1 + 1e-15);
                }
                prev = (k, q);
                let (d, s) = (fd.demand(k).unwrap(), fd.supply(k).unwrap());
                assert!((d.min(s) - q).abs() < 1e-12);
                assert!((d.max(s) - cap).abs() < 1e-12);
            }
            assert!(fd.flow(jam).unwrap().abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn congestion_level_round_trips(
            n in 1u32..6,
            v in 10.0f64..40.0,
            tau in 0.8f64..2.5,
            kstar in 0.1f64..0.2,
            frac in 0.0f64..1.0,
        ) {
            let fd = Fd::new(n, v, tau, kstar).unwrap();
            let k = frac * fd.jam_density();
            let st = fd.state_from_density(k).unwrap();
            let back = fd.density_from_state(st).unwrap();
            prop_assert!((back - k).abs() <= 1e-12 * fd.jam_density());
        }

        #[test]
        fn congestion_strictly_increasing(n in 1u32..6, a in 0.0f64..1.0, b in 0.0f64..1.0) {
            prop_assume!((a - b).abs() > 1e-6);
            let fd = Fd::reference(n).unwrap();
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let g = |f: f64| {
                let st = fd.state_from_density(f * fd.jam_density()).unwrap();
                if st.supply == 0.0 { f64::INFINITY } else { st.demand / st.supply }
            };
            prop_assert!(g(lo) < g(hi));
        }
    }
}
