//! Riemann problem at a capacity-drop interface.
//!
//! Given constant states on an upstream link (`x < 0`) and a downstream link
//! (`x > 0`), the solution consists of a stationary state on each link next
//! to the interface and one homogeneous-LWR wave per link connecting the
//! initial state to that stationary state. The interface flux is
//!
//! ```text
//! q = d1               if d1 <= s2
//! q = min{s2, C*}      otherwise
//! ```
//!
//! and the stationary states follow from it:
//! `U1* = (d1, C1)` if `q = d1`, else `(C1, q)`;
//! `U2* = (C2, s2)` if `q = s2`, else `(q, C2)`.
//!
//! [`oracle::entropy_oracle`] recovers the same flux independently by
//! enumerating feasible stationary/interior states and maximising the flux.

use serde::Serialize;

use crate::fundamental::{DemandSupply, FundamentalDiagram};
use crate::scalar::{min_of, Scalar};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum WaveKind {
    None,
    Shock,
    Rarefaction,
}

/// A homogeneous-LWR wave. Shocks have `speed_min == speed_max` equal to the
/// Rankine–Hugoniot speed; rarefactions report their characteristic fan.
/// `WaveKind::None` reports a zero range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WaveDescriptor<T> {
    pub kind: WaveKind,
    pub speed_min: T,
    pub speed_max: T,
}

impl<T: Scalar> WaveDescriptor<T> {
    fn none() -> Self {
        WaveDescriptor {
            kind: WaveKind::None,
            speed_min: T::zero(),
            speed_max: T::zero(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RiemannSolution<T> {
    /// Interface flux.
    pub flux: T,
    pub up_stationary: DemandSupply<T>,
    pub down_stationary: DemandSupply<T>,
    /// Wave on the upstream link, from the initial to the stationary state.
    pub up_wave: WaveDescriptor<T>,
    /// Wave on the downstream link, from the stationary to the initial state.
    pub down_wave: WaveDescriptor<T>,
}

/// Entropy solution of the homogeneous Riemann problem `k_left | k_right`
/// for a concave unimodal diagram.
pub fn lwr_wave<T, F>(fd: &F, k_left: T, k_right: T) -> Result<WaveDescriptor<T>>
where
    T: Scalar,
    F: FundamentalDiagram<T>,
{
    let kl = fd.check_density(k_left)?;
    let kr = fd.check_density(k_right)?;
    if kl == kr {
        return Ok(WaveDescriptor::none());
    }
    if kl < kr {
        let speed = (fd.flow_unchecked(kr) - fd.flow_unchecked(kl)) / (kr - kl);
        Ok(WaveDescriptor {
            kind: WaveKind::Shock,
            speed_min: speed,
            speed_max: speed,
        })
    } else {
        Ok(WaveDescriptor {
            kind: WaveKind::Rarefaction,
            speed_min: fd.char_speed_left(kl),
            speed_max: fd.char_speed_right(kr),
        })
    }
}

/// Solves the Riemann problem with the capacity-drop rule at the interface.
///
/// `c_star` may exceed the downstream capacity, in which case the rule never
/// binds and the result is the standard inhomogeneous solution. The
/// stationary states are invariant (solving again from them reproduces them)
/// when the upstream capacity exceeds the downstream one, i.e. at a lane drop.
pub fn solve_riemann<T, F1, F2>(
    up: DemandSupply<T>,
    down: DemandSupply<T>,
    fd_up: &F1,
    fd_down: &F2,
    c_star: T,
) -> Result<RiemannSolution<T>>
where
    T: Scalar,
    F1: FundamentalDiagram<T>,
    F2: FundamentalDiagram<T>,
{
    if c_star <= T::zero() {
        return Err(Error::param(format!("dropped capacity {c_star} must be positive")));
    }
    fd_up.check_state(up)?;
    fd_down.check_state(down)?;
    let q = if up.demand <= down.supply {
        up.demand
    } else {
        min_of(down.supply, c_star)
    };
    assemble(up, down, fd_up, fd_down, q)
}

/// The same problem with the continuous min rule at the interface.
pub fn solve_riemann_standard<T, F1, F2>(
    up: DemandSupply<T>,
    down: DemandSupply<T>,
    fd_up: &F1,
    fd_down: &F2,
) -> Result<RiemannSolution<T>>
where
    T: Scalar,
    F1: FundamentalDiagram<T>,
    F2: FundamentalDiagram<T>,
{
    fd_up.check_state(up)?;
    fd_down.check_state(down)?;
    assemble(up, down, fd_up, fd_down, min_of(up.demand, down.supply))
}

/// Convenience wrapper taking initial densities.
pub fn solve_riemann_densities<T, F1, F2>(
    k_up: T,
    k_down: T,
    fd_up: &F1,
    fd_down: &F2,
    c_star: T,
) -> Result<RiemannSolution<T>>
where
    T: Scalar,
    F1: FundamentalDiagram<T>,
    F2: FundamentalDiagram<T>,
{
    solve_riemann(
        fd_up.state_from_density(k_up)?,
        fd_down.state_from_density(k_down)?,
        fd_up,
        fd_down,
        c_star,
    )
}

fn assemble<T, F1, F2>(
    up: DemandSupply<T>,
    down: DemandSupply<T>,
    fd_up: &F1,
    fd_down: &F2,
    q: T,
) -> Result<RiemannSolution<T>>
where
    T: Scalar,
    F1: FundamentalDiagram<T>,
    F2: FundamentalDiagram<T>,
{
    let c1 = fd_up.capacity();
    let c2 = fd_down.capacity();
    let up_stationary = if q == up.demand {
        DemandSupply { demand: q, supply: c1 }
    } else {
        DemandSupply { demand: c1, supply: q }
    };
    let down_stationary = if q == down.supply {
        DemandSupply { demand: c2, supply: q }
    } else {
        DemandSupply { demand: q, supply: c2 }
    };
    let k1 = fd_up.density_from_state(up)?;
    let k1_star = fd_up.density_from_state(up_stationary)?;
    let k2 = fd_down.density_from_state(down)?;
    let k2_star = fd_down.density_from_state(down_stationary)?;
    let up_wave = lwr_wave(fd_up, k1, k1_star)?;
    let down_wave = lwr_wave(fd_down, k2_star, k2)?;
    debug_assert!(up_wave.speed_max <= T::tolerance());
    debug_assert!(down_wave.speed_min >= -T::tolerance());
    Ok(RiemannSolution {
        flux: q,
        up_stationary,
        down_stationary,
        up_wave,
        down_wave,
    })
}

pub mod oracle {
    //! Brute-force entropy solution.
    //!
    //! For every candidate flux `q`, the feasible stationary and interior
    //! states on each link are enumerated:
    //!
    //! - upstream: strictly over-critical `U1* = U1⁰ = (C1, q)` when `q < d1`;
    //!   under-critical `U1* = (q, C1)` with any interior state `s1⁰ >= d1`
    //!   when `q = d1`;
    //! - downstream: strictly under-critical `U2* = U2⁰ = (q, C2)` when
    //!   `q < s2`; over-critical `U2* = (C2, q)` with any interior state
    //!   `d2⁰ >= s2` when `q = s2`.
    //!
    //! Interior states are drawn from a grid of spacing `10⁻³ C` on each branch
    //! of the diagram, together with the states whose free component equals a
    //! case boundary. A candidate is admissible when some interior pair
    //! reproduces it through the interface rule applied to `(d1⁰, s2⁰)`; the
    //! oracle returns the largest admissible flux.

    use crate::fundamental::{DemandSupply, FundamentalDiagram};
    use crate::{Error, Result};

    const GRID: usize = 1000;

    fn interior_states(capacity: f64, specials: &[f64]) -> Vec<DemandSupply<f64>> {
        let mut states = Vec::with_capacity(2 * GRID + 2 * specials.len() + 2);
        for i in 0..=GRID {
            let v = capacity * i as f64 / GRID as f64;
            states.push(DemandSupply { demand: v, supply: capacity });
            states.push(DemandSupply { demand: capacity, supply: v });
        }
        for &v in specials.iter().filter(|v| (0.0..=capacity).contains(*v)) {
            states.push(DemandSupply { demand: v, supply: capacity });
            states.push(DemandSupply { demand: capacity, supply: v });
        }
        states
    }

    pub fn entropy_oracle<F1, F2>(
        up: DemandSupply<f64>,
        down: DemandSupply<f64>,
        fd_up: &F1,
        fd_down: &F2,
        c_star: f64,
    ) -> Result<f64>
    where
        F1: FundamentalDiagram<f64>,
        F2: FundamentalDiagram<f64>,
    {
        fd_up.check_state(up)?;
        fd_down.check_state(down)?;
        let c1 = fd_up.capacity();
        let c2 = fd_down.capacity();
        let (d1, s2) = (up.demand, down.supply);
        let tol = 1e-12 * c1.max(c2).max(1.0);
        let eq = |a: f64, b: f64| (a - b).abs() <= tol;

        let bound = d1.min(s2);
        let step = c1.max(c2) / GRID as f64;
        let mut candidates: Vec<f64> = (0..)
            .map(|i| i as f64 * step)
            .take_while(|q| *q <= bound + tol)
            .collect();
        candidates.extend([d1, s2, c_star, 0.0].into_iter().filter(|q| *q <= bound + tol));

        let mut best: Option<f64> = None;
        for q in candidates {
            if best.is_some_and(|b| q <= b) {
                continue;
            }
            let specials = [q, d1, s2, c_star];
            let up_interior: Vec<DemandSupply<f64>> = if q < d1 - tol {
                vec![DemandSupply { demand: c1, supply: q }]
            } else if eq(q, d1) {
                interior_states(c1, &specials)
                    .into_iter()
                    .filter(|u| u.supply >= d1 - tol)
                    .collect()
            } else {
                Vec::new()
            };
            let down_interior: Vec<DemandSupply<f64>> = if q < s2 - tol {
                vec![DemandSupply { demand: q, supply: c2 }]
            } else if eq(q, s2) {
                interior_states(c2, &specials)
                    .into_iter()
                    .filter(|u| u.demand >= s2 - tol)
                    .collect()
            } else {
                Vec::new()
            };
            let admissible = up_interior.iter().any(|u1| {
                down_interior.iter().any(|u2| {
                    let reproduced = if u1.demand <= u2.supply + tol {
                        u1.demand
                    } else {
                        u2.supply.min(c_star)
                    };
                    eq(reproduced, q)
                })
            });
            if admissible {
                best = Some(q);
            }
        }
        best.ok_or_else(|| Error::param("no admissible interface flux found"))
    }
}

#[cfg(test)]
mod tests {
    use super::oracle::entropy_oracle;
    use super::*;
    use crate::fundamental::TriangularFd;
    use num_rational::Rational64;

    type Fd = TriangularFd<f64>;

    fn r(n: i64, d: i64) -> Rational64 {
        Rational64::new(n, d)
    }

    fn lane_drop() -> (Fd, Fd, f64) {
        (Fd::reference(4).unwrap(), Fd::reference(3).unwrap(), 81.0 / 49.0)
    }

    #[test]
    fn wave_examples() {
        let fd = Fd::reference(3).unwrap();
        assert_eq!(lwr_wave(&fd, 0.1, 0.1).unwrap().kind, WaveKind::None);

        let (kl, kr) = (2.8 / 49.0, 10.0 / 49.0);
        let w = lwr_wave(&fd, kl, kr).unwrap();
        let rh = (fd.flow(kr).unwrap() - fd.flow(kl).unwrap()) / (kr - kl);
        assert_eq!(w.kind, WaveKind::Shock);
        assert_eq!(w.speed_min, rh);
        assert!(rh < 0.0);

        // same linear branch: fan collapses to the branch slope
        let w = lwr_wave(&fd, 2.0 / 49.0, 1.0 / 49.0).unwrap();
        assert_eq!(w.kind, WaveKind::Rarefaction);
        assert_eq!((w.speed_min, w.speed_max), (30.0, 30.0));
        let w = lwr_wave(&fd, 12.0 / 49.0, 8.0 / 49.0).unwrap();
        assert_eq!((w.speed_min, w.speed_max), (-5.0, -5.0));
        // across the kink the fan spans both slopes
        let w = lwr_wave(&fd, 12.0 / 49.0, 1.0 / 49.0).unwrap();
        assert_eq!((w.speed_min, w.speed_max), (-5.0, 30.0));
    }

    #[test]
    fn exact_rankine_hugoniot() {
        let fd = TriangularFd::<Rational64>::reference(3).unwrap();
        let w = lwr_wave(&fd, r(28, 490), r(10, 49)).unwrap();
        // Q(2.8/49) = 84/49, Q(10/49) = (3 - 70/49)/1.4 = 55/49
        assert_eq!(w.speed_min, (r(55, 49) - r(84, 49)) / (r(10, 49) - r(28, 490)));
    }

    #[test]
    fn flux_cases() {
        let (f1, f2, c) = lane_drop();
        let st = |fd: &Fd, k: f64| fd.state_from_density(k).unwrap();
        // d1 <= min{s2, C*}
        let s = solve_riemann(st(&f1, 2.0 / 49.0), st(&f2, 1.0 / 49.0), &f1, &f2, c).unwrap();
        assert!((s.flux - 60.0 / 49.0).abs() < 1e-12);
        // C* < d1 <= s2
        let s = solve_riemann(st(&f1, 2.8 / 49.0), st(&f2, 1.0 / 49.0), &f1, &f2, c).unwrap();
        assert!((s.flux - 84.0 / 49.0).abs() < 1e-12);
        // d1 > s2 > C*
        let up = st(&f1, 3.5 / 49.0);
        let down = st(&f2, 3.3 / 49.0);
        assert!(up.demand > down.supply && down.supply > c);
        let s = solve_riemann(up, down, &f1, &f2, c).unwrap();
        assert_eq!(s.flux, c);
        assert_eq!(s.up_stationary, DemandSupply { demand: f1.capacity(), supply: c });
        assert_eq!(s.down_stationary, DemandSupply { demand: c, supply: f2.capacity() });
        assert!(s.up_wave.speed_max < 0.0);
        assert!(s.down_wave.speed_min > 0.0);
    }

    #[test]
    fn drop_versus_no_drop_scenario() {
        // initial A upstream and B downstream with C* < s2 < C2 and s2 < d1 < C1
        let (f1, f2, c) = lane_drop();
        let up = f1.state_from_density(3.6 / 49.0).unwrap();
        let down = f2.state_from_density(3.4 / 49.0).unwrap();
        assert!(c < down.supply && down.supply < f2.capacity());
        assert!(down.supply < up.demand && up.demand < f1.capacity());

        let with_drop = solve_riemann(up, down, &f1, &f2, c).unwrap();
        assert_eq!(with_drop.flux, c);
        assert_eq!(with_drop.down_wave.kind, WaveKind::Shock);
        assert!(with_drop.down_wave.speed_min > 0.0);

        let without = solve_riemann_standard(up, down, &f1, &f2).unwrap();
        assert_eq!(without.flux, down.supply);
        assert_eq!(without.down_wave.kind, WaveKind::None);
        assert_eq!(without.down_stationary, down);
    }

    #[test]
    fn rejects_off_diagram_states() {
        let (f1, f2, c) = lane_drop();
        let bad = DemandSupply { demand: 0.5, supply: 0.5 };
        let ok = f2.state_from_density(0.0).unwrap();
        assert!(matches!(solve_riemann(bad, ok, &f1, &f2, c), Err(Error::InvalidState { .. })));
        assert!(entropy_oracle(bad, ok, &f1, &f2, c).is_err());
    }

    #[test]
    fn oracle_trivial_cases() {
        let (f1, f2, c) = lane_drop();
        let empty = f1.state_from_density(0.0).unwrap();
        for k2 in [0.0, 2.0 / 49.0, 10.0 / 49.0] {
            let down = f2.state_from_density(k2).unwrap();
            assert_eq!(entropy_oracle(empty, down, &f1, &f2, c).unwrap(), 0.0);
        }
        // without a binding drop the oracle is the min rule
        let no_drop = f2.capacity() * 1.01;
        for (k1, k2) in [(3.6, 3.4), (2.0, 1.0), (10.0, 10.0), (4.0, 3.0)] {
            let up = f1.state_from_density(k1 / 49.0).unwrap();
            let down = f2.state_from_density(k2 / 49.0).unwrap();
            let q = entropy_oracle(up, down, &f1, &f2, no_drop).unwrap();
            assert!((q - up.demand.min(down.supply)).abs() < 1e-9);
        }
    }

    #[test]
    fn exact_arithmetic_solution() {
        let f1 = TriangularFd::<Rational64>::reference(4).unwrap();
        let f2 = TriangularFd::<Rational64>::reference(3).unwrap();
        let s = solve_riemann_densities(r(35, 490), r(33, 490), &f1, &f2, r(81, 49)).unwrap();
        assert_eq!(s.flux, r(81, 49));
        assert_eq!(s.up_stationary, DemandSupply { demand: r(120, 49), supply: r(81, 49) });
        // free 2.7/49 behind a congested 3.3/49: (177/98 - 81/49) / (6/490)
        assert_eq!(s.down_wave.kind, WaveKind::Shock);
        assert_eq!(s.down_wave.speed_min, r(25, 2));
    }
}
