//! Stationary states of an initially empty lane-drop road driven by constant
//! boundary demand `d0` and supply `s0`.

use serde::Serialize;

use crate::fundamental::{DemandSupply, FundamentalDiagram};
use crate::scalar::Scalar;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StaticsCase {
    /// `d0 <= s0`: free flow on both links, `q = d0`.
    FreeFlow,
    /// `d0 > s0`, `s0 <= C*`: both links congested, `q = s0`.
    Congested,
    /// `d0 > s0 > C*`: queue upstream of the drop, free flow below, `q = C*`.
    CapacityDrop,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StaticsSolution<T> {
    pub case: StaticsCase,
    pub q: T,
    pub upstream: DemandSupply<T>,
    pub downstream: DemandSupply<T>,
    pub k_upstream: T,
    pub k_downstream: T,
}

/// Requires `0 <= d0 <= C1`, `0 <= s0 <= C2` and `0 < C* < C2`.
pub fn open_road_statics<T: Scalar, F1: FundamentalDiagram<T>, F2: FundamentalDiagram<T>>(
    d0: T,
    s0: T,
    fd_up: &F1,
    fd_down: &F2,
    c_star: T,
) -> Result<StaticsSolution<T>> {
    let c1 = fd_up.capacity();
    let c2 = fd_down.capacity();
    let check = |what, v: T, hi: T| {
        if v < T::zero() || v > hi {
            Err(Error::Domain {
                what,
                value: v.to_f64_lossy(),
                lo: 0.0,
                hi: hi.to_f64_lossy(),
            })
        } else {
            Ok(())
        }
    };
    check("upstream demand d0", d0, c1)?;
    check("downstream supply s0", s0, c2)?;
    if !(c_star > T::zero() && c_star < c2) {
        return Err(Error::param(format!("dropped capacity {c_star} must lie in (0, {c2})")));
    }

    let (case, q, upstream, downstream) = if d0 <= s0 {
        (StaticsCase::FreeFlow, d0, DemandSupply { demand: d0, supply: c1 }, DemandSupply { demand: d0, supply: c2 })
    } else if s0 <= c_star {
        (StaticsCase::Congested, s0, DemandSupply { demand: c1, supply: s0 }, DemandSupply { demand: c2, supply: s0 })
    } else {
        (
            StaticsCase::CapacityDrop,
            c_star,
            DemandSupply { demand: c1, supply: c_star },
            DemandSupply { demand: c_star, supply: c2 },
        )
    };
    Ok(StaticsSolution {
        case,
        q,
        upstream,
        downstream,
        k_upstream: fd_up.density_from_state(upstream)?,
        k_downstream: fd_down.density_from_state(downstream)?,
    })
}

/// Stationary `(k, q)` points observed on each side of the drop.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ObservableFd<T> {
    pub upstream: Vec<(T, T)>,
    pub downstream: Vec<(T, T)>,
}

/// Statics over the grid `d0s × s0s`.
pub fn observable_fd<T: Scalar, F1: FundamentalDiagram<T>, F2: FundamentalDiagram<T>>(
    fd_up: &F1,
    fd_down: &F2,
    c_star: T,
    d0s: &[T],
    s0s: &[T],
) -> Result<ObservableFd<T>> {
    let mut out = ObservableFd { upstream: Vec::new(), downstream: Vec::new() };
    for &d0 in d0s {
        for &s0 in s0s {
            let sol = open_road_statics(d0, s0, fd_up, fd_down, c_star)?;
            out.upstream.push((sol.k_upstream, sol.q));
            out.downstream.push((sol.k_downstream, sol.q));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fundamental::TriangularFd;
    use crate::riemann::solve_riemann;
    use num_rational::Rational64;

    fn r(n: i64, d: i64) -> Rational64 {
        Rational64::new(n, d)
    }

    fn fds() -> (TriangularFd<Rational64>, TriangularFd<Rational64>) {
        (TriangularFd::reference(4).unwrap(), TriangularFd::reference(3).unwrap())
    }

    #[test]
    fn three_cases() {
        let (up, down) = fds();
        let cs = r(81, 49);
        let s1 = open_road_statics(r(70, 49), r(85, 49), &up, &down, cs).unwrap();
        assert_eq!(s1.case, StaticsCase::FreeFlow);
        assert_eq!(s1.q, r(70, 49));
        assert_eq!(s1.k_upstream, r(7, 147));

        let s2 = open_road_statics(r(100, 49), r(60, 49), &up, &down, cs).unwrap();
        assert_eq!(s2.case, StaticsCase::Congested);
        assert_eq!(s2.q, r(60, 49));
        assert!(s2.k_upstream > up.critical_density() && s2.k_downstream > down.critical_density());

        let s3 = open_road_statics(r(100, 49), r(86, 49), &up, &down, cs).unwrap();
        assert_eq!(s3.case, StaticsCase::CapacityDrop);
        assert_eq!(s3.q, cs);
        assert!(s3.k_upstream > up.critical_density());
        assert!(s3.k_downstream < down.critical_density());

        let zero = Rational64::from_integer(0);
        let s0 = open_road_statics(zero, r(60, 49), &up, &down, cs).unwrap();
        assert_eq!((s0.q, s0.k_upstream, s0.k_downstream), (zero, zero, zero));
    }

    #[test]
    fn rejects_out_of_range_boundaries() {
        let (up, down) = fds();
        let cs = r(81, 49);
        assert!(open_road_statics(r(121, 49), r(60, 49), &up, &down, cs).is_err());
        assert!(open_road_statics(r(100, 49), r(91, 49), &up, &down, cs).is_err());
        assert!(open_road_statics(r(100, 49), r(60, 49), &up, &down, r(90, 49)).is_err());
    }

    #[test]
    fn agrees_with_riemann_flux() {
        let (up, down) = fds();
        let cs = r(81, 49);
        for i in 0..=24 {
            for j in 0..=18 {
                let d0 = r(5 * i, 49);
                let s0 = r(5 * j, 49);
                let sol = open_road_statics(d0, s0, &up, &down, cs).unwrap();
                let riemann = solve_riemann(
                    DemandSupply { demand: d0, supply: up.capacity() },
                    DemandSupply { demand: down.capacity(), supply: s0 },
                    &up,
                    &down,
                    cs,
                )
                .unwrap();
                assert_eq!(sol.q, riemann.flux, "d0 = {d0}, s0 = {s0}");
            }
        }
    }

    #[test]
    fn observable_diagram_has_a_gap() {
        let (up, down) = fds();
        let cs = r(81, 49);
        let grid: Vec<_> = (0..=30).map(|i| r(3 * i, 49)).collect();
        let d0s: Vec<_> = grid.iter().copied().filter(|&d| d <= up.capacity()).collect();
        let s0s: Vec<_> = grid.iter().copied().filter(|&s| s <= down.capacity()).collect();
        let obs = observable_fd(&up, &down, cs, &d0s, &s0s).unwrap();
        assert_eq!(obs.upstream.len(), d0s.len() * s0s.len());
        for &(k, q) in &obs.downstream {
            if k > down.critical_density() {
                assert!(q <= cs);
            }
        }
        for &(k, q) in &obs.upstream {
            if k > up.critical_density() {
                assert!(q <= cs);
            } else {
                assert_eq!(q, up.flow(k).unwrap());
            }
        }
    }
}
