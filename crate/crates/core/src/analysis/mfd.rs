//! Stationary states of a two-link ring with a lane drop, and the
//! macroscopic fundamental diagram they trace.
//!
//! Link 1 occupies `[0, L1)` and is the narrower link; link 2 occupies
//! `[L1, L)` and feeds link 1 through the capacity-drop junction at `x = L`
//! (equivalently `x = 0`). Five stationary families exist:
//!
//! | label | link 1 | link 2 | flow |
//! |---|---|---|---|
//! | a | UC | UC | `q <= C1` |
//! | b | UC | UC up to `L2`, OC after | `C*` |
//! | c | UC | OC | `C*` |
//! | d | UC up to `L0`, OC after | OC | `C*` |
//! | e | OC | OC | `q <= C*` |

use std::fmt;

use serde::Serialize;

use super::{oc_density, uc_density};
use crate::fundamental::FundamentalDiagram;
use crate::scalar::Scalar;
use crate::sim::Corridor;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioLabel {
    A,
    B,
    C,
    D,
    E,
}

impl ScenarioLabel {
    pub const ALL: [ScenarioLabel; 5] = [Self::A, Self::B, Self::C, Self::D, Self::E];
}

impl fmt::Display for ScenarioLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::A => "a",
            Self::B => "b",
            Self::C => "c",
            Self::D => "d",
            Self::E => "e",
        };
        f.write_str(s)
    }
}

/// One stationary state: flow `q`, network density `k = N / L` and the
/// interface position for the families that have one (`L2` for b, `L0` for d).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RingScenario<T> {
    pub label: ScenarioLabel,
    pub q: T,
    pub k: T,
    pub free_parameter: Option<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ring<T, F> {
    fd1: F,
    fd2: F,
    l1: T,
    length: T,
    c_star: T,
}

impl<T: Scalar, F: FundamentalDiagram<T>> Ring<T, F> {
    /// Requires `0 < L1 < L`, `C1 <= C2` and `0 < C* < C1`.
    pub fn new(fd1: F, fd2: F, l1: T, length: T, c_star: T) -> Result<Self> {
        if !(l1 > T::zero() && l1 < length) {
            return Err(Error::param(format!("L1 = {l1} must lie in (0, {length})")));
        }
        if fd1.capacity() > fd2.capacity() {
            return Err(Error::param(format!(
                "link 1 capacity {} exceeds link 2 capacity {}; the drop must narrow the road",
                fd1.capacity(),
                fd2.capacity()
            )));
        }
        if !(c_star > T::zero() && c_star < fd1.capacity()) {
            return Err(Error::param(format!(
                "dropped capacity {c_star} must lie in (0, {})",
                fd1.capacity()
            )));
        }
        Ok(Ring { fd1, fd2, l1, length, c_star })
    }

    pub fn fd1(&self) -> &F {
        &self.fd1
    }

    pub fn fd2(&self) -> &F {
        &self.fd2
    }

    pub fn l1(&self) -> T {
        self.l1
    }

    pub fn length(&self) -> T {
        self.length
    }

    pub fn c_star(&self) -> T {
        self.c_star
    }

    /// `L1 / L`.
    pub fn ratio(&self) -> T {
        self.l1 / self.length
    }

    fn mix(&self, k1: T, k2: T) -> T {
        let r = self.ratio();
        k1 * r + k2 * (T::one() - r)
    }

    /// Both links undercritical, `0 <= q <= C1`.
    pub fn scenario_a(&self, q: T) -> Result<RingScenario<T>> {
        let c1 = self.fd1.capacity();
        if q < T::zero() || q > c1 {
            return Err(domain("flow (a)", q, T::zero(), c1));
        }
        let k = self.mix(uc_density(&self.fd1, q)?, uc_density(&self.fd2, q)?);
        Ok(RingScenario { label: ScenarioLabel::A, q, k, free_parameter: None })
    }

    fn k_b(&self, l2: T) -> Result<T> {
        let q = self.c_star;
        let k1 = uc_density(&self.fd1, q)?;
        let k2u = uc_density(&self.fd2, q)?;
        let k2o = oc_density(&self.fd2, q)?;
        Ok((k1 * self.l1 + k2u * (l2 - self.l1) + k2o * (self.length - l2)) / self.length)
    }

    /// Queue on link 2 over `[L2, L)`, `L1 < L2 < L`.
    pub fn scenario_b(&self, l2: T) -> Result<RingScenario<T>> {
        if !(l2 > self.l1 && l2 < self.length) {
            return Err(domain("L2", l2, self.l1, self.length));
        }
        Ok(RingScenario {
            label: ScenarioLabel::B,
            q: self.c_star,
            k: self.k_b(l2)?,
            free_parameter: Some(l2),
        })
    }

    /// Link 2 fully queued, link 1 free.
    pub fn scenario_c(&self) -> Result<RingScenario<T>> {
        let q = self.c_star;
        let k = self.mix(uc_density(&self.fd1, q)?, oc_density(&self.fd2, q)?);
        Ok(RingScenario { label: ScenarioLabel::C, q, k, free_parameter: None })
    }

    fn k_d(&self, l0: T) -> Result<T> {
        let q = self.c_star;
        let k1u = uc_density(&self.fd1, q)?;
        let k1o = oc_density(&self.fd1, q)?;
        let k2o = oc_density(&self.fd2, q)?;
        Ok((k1u * l0 + k1o * (self.l1 - l0) + k2o * (self.length - self.l1)) / self.length)
    }

    /// Link 2 queued, link 1 queued over `[L0, L1)`, `0 < L0 < L1`.
    pub fn scenario_d(&self, l0: T) -> Result<RingScenario<T>> {
        if !(l0 > T::zero() && l0 < self.l1) {
            return Err(domain("L0", l0, T::zero(), self.l1));
        }
        Ok(RingScenario {
            label: ScenarioLabel::D,
            q: self.c_star,
            k: self.k_d(l0)?,
            free_parameter: Some(l0),
        })
    }

    /// Both links overcritical, `0 <= q <= C*`.
    pub fn scenario_e(&self, q: T) -> Result<RingScenario<T>> {
        if q < T::zero() || q > self.c_star {
            return Err(domain("flow (e)", q, T::zero(), self.c_star));
        }
        let k = self.mix(oc_density(&self.fd1, q)?, oc_density(&self.fd2, q)?);
        Ok(RingScenario { label: ScenarioLabel::E, q, k, free_parameter: None })
    }

    /// Open density interval of the `q = C*` plateau, spanning b, c and d.
    pub fn plateau(&self) -> Result<(T, T)> {
        Ok((self.k_b(self.length)?, self.k_d(T::zero())?))
    }
}

impl<F: FundamentalDiagram<f64>> Ring<f64, F> {
    /// Every stationary flow compatible with network density `k`, one entry
    /// per family. Branch ends are matched with a relative tolerance of 1e-12.
    pub fn flows_at(&self, k: f64) -> Result<Vec<(ScenarioLabel, f64)>> {
        let tol = 1e-12 * k.abs().max(1e-3);
        let mut out = Vec::new();
        let c1 = self.fd1.capacity();
        let a_end = self.scenario_a(c1)?.k;
        if k >= -tol && k <= a_end + tol {
            out.push((ScenarioLabel::A, invert(|q| Ok(self.scenario_a(q)?.k), 0.0, c1, k)?));
        }
        let (lo, hi) = self.plateau()?;
        let kc = self.scenario_c()?.k;
        if k > lo && k < hi {
            let label = if (k - kc).abs() <= tol {
                ScenarioLabel::C
            } else if k < kc {
                ScenarioLabel::B
            } else {
                ScenarioLabel::D
            };
            out.push((label, self.c_star));
        }
        let e_start = self.scenario_e(self.c_star)?.k;
        let e_end = self.scenario_e(0.0)?.k;
        if k >= e_start - tol && k <= e_end + tol {
            out.push((ScenarioLabel::E, invert(|q| Ok(self.scenario_e(q)?.k), 0.0, self.c_star, k)?));
        }
        Ok(out)
    }
}

/// Solves `k(q) = target` on `[lo, hi]` for a monotone `k(q)` by bisection.
fn invert(f: impl Fn(f64) -> Result<f64>, lo: f64, hi: f64, target: f64) -> Result<f64> {
    let (mut a, mut b) = (lo, hi);
    let increasing = f(hi)? >= f(lo)?;
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if (f(m)? < target) == increasing {
            a = m;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}

fn domain<T: Scalar>(what: &'static str, value: T, lo: T, hi: T) -> Error {
    Error::Domain {
        what,
        value: value.to_f64_lossy(),
        lo: lo.to_f64_lossy(),
        hi: hi.to_f64_lossy(),
    }
}

/// One family of the diagram. `breakpoints` are the exact `(k, q)` ends (a
/// single point for c); `open` marks ends that are limits rather than
/// attained states. `points` is a polyline ordered by increasing `k`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MfdBranch<T> {
    pub label: ScenarioLabel,
    pub breakpoints: Vec<(T, T)>,
    pub open: bool,
    pub points: Vec<(T, T)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Mfd<T> {
    pub branches: Vec<MfdBranch<T>>,
}

impl<T: Scalar> Mfd<T> {
    pub fn branch(&self, label: ScenarioLabel) -> Option<&MfdBranch<T>> {
        self.branches.iter().find(|b| b.label == label)
    }

    /// `(branch, k, q)` rows of every polyline.
    pub fn rows(&self) -> impl Iterator<Item = (ScenarioLabel, T, T)> + '_ {
        self.branches
            .iter()
            .flat_map(|b| b.points.iter().map(move |&(k, q)| (b.label, k, q)))
    }
}

/// Builds all five branches with `samples` polyline points each (c is a
/// single point regardless).
pub fn ring_mfd<T: Scalar, F: FundamentalDiagram<T>>(ring: &Ring<T, F>, samples: usize) -> Result<Mfd<T>> {
    if samples < 2 {
        return Err(Error::param(format!("need at least 2 samples per branch, got {samples}")));
    }
    let n = T::from_count(u32::try_from(samples - 1).map_err(|_| Error::param("too many samples"))?);
    let frac = |i: usize| T::from_count(i as u32) / n;
    let c1 = ring.fd1.capacity();
    let cs = ring.c_star;

    let a = (0..samples)
        .map(|i| {
            let q = c1 * frac(i);
            Ok((ring.scenario_a(q)?.k, q))
        })
        .collect::<Result<Vec<_>>>()?;
    let b = (0..samples)
        .map(|i| {
            let l2 = ring.length - (ring.length - ring.l1) * frac(i);
            Ok((ring.k_b(l2)?, cs))
        })
        .collect::<Result<Vec<_>>>()?;
    let c = ring.scenario_c()?;
    let d = (0..samples)
        .map(|i| {
            let l0 = ring.l1 - ring.l1 * frac(i);
            Ok((ring.k_d(l0)?, cs))
        })
        .collect::<Result<Vec<_>>>()?;
    let e = (0..samples)
        .map(|i| {
            let q = cs - cs * frac(i);
            Ok((ring.scenario_e(q)?.k, q))
        })
        .collect::<Result<Vec<_>>>()?;

    let ends = |pts: &[(T, T)]| vec![pts[0], pts[pts.len() - 1]];
    Ok(Mfd {
        branches: vec![
            MfdBranch { label: ScenarioLabel::A, breakpoints: ends(&a), open: false, points: a },
            MfdBranch { label: ScenarioLabel::B, breakpoints: ends(&b), open: true, points: b },
            MfdBranch {
                label: ScenarioLabel::C,
                breakpoints: vec![(c.k, c.q)],
                open: false,
                points: vec![(c.k, c.q)],
            },
            MfdBranch { label: ScenarioLabel::D, breakpoints: ends(&d), open: true, points: d },
            MfdBranch { label: ScenarioLabel::E, breakpoints: ends(&e), open: false, points: e },
        ],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Under,
    Critical,
    Over,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum LinkPattern {
    Under,
    Over,
    UnderThenOver,
}

/// Classifies one link's cells. A split may contain up to two transition
/// cells, which is how a standing shock looks after discretization.
fn link_pattern(phases: &[Phase]) -> Option<LinkPattern> {
    if phases.iter().all(|p| *p != Phase::Over) {
        return Some(LinkPattern::Under);
    }
    if phases.iter().all(|p| *p != Phase::Under) {
        return Some(LinkPattern::Over);
    }
    let first_over = phases.iter().position(|p| *p == Phase::Over)?;
    let last_over = phases.iter().rposition(|p| *p == Phase::Over)?;
    let first_under = phases.iter().position(|p| *p == Phase::Under)?;
    let last_under = phases.iter().rposition(|p| *p == Phase::Under)?;
    if first_under < first_over && last_under < last_over && last_under < first_over + 2 {
        Some(LinkPattern::UnderThenOver)
    } else {
        None
    }
}

/// Labels a stationary density field on a two-link ring corridor (link 1 the
/// narrow one, as built by [`crate::sim::RingSetup`]). Returns `None` for
/// fields that fit none of the five families.
pub fn classify_ring_stationary<F: FundamentalDiagram<f64>>(
    corridor: &Corridor<F>,
    densities: &[f64],
) -> Option<ScenarioLabel> {
    if !corridor.is_ring() || corridor.links().len() != 2 || densities.len() != corridor.cell_count() {
        return None;
    }
    let pattern = |j: usize| {
        let kc = corridor.links()[j].fd.critical_density();
        let phases: Vec<Phase> = densities[corridor.link_cells(j)]
            .iter()
            .map(|&k| {
                if k < kc * (1.0 - 1e-6) {
                    Phase::Under
                } else if k > kc * (1.0 + 1e-6) {
                    Phase::Over
                } else {
                    Phase::Critical
                }
            })
            .collect();
        link_pattern(&phases)
    };
    use LinkPattern::*;
    match (pattern(0)?, pattern(1)?) {
        (Under, Under) => Some(ScenarioLabel::A),
        (Under, UnderThenOver) => Some(ScenarioLabel::B),
        (Under, Over) => Some(ScenarioLabel::C),
        (UnderThenOver, Over) => Some(ScenarioLabel::D),
        (Over, Over) => Some(ScenarioLabel::E),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fundamental::TriangularFd;
    use num_rational::Rational64;

    fn r(n: i64, d: i64) -> Rational64 {
        Rational64::new(n, d)
    }

    fn exact_ring() -> Ring<Rational64, TriangularFd<Rational64>> {
        Ring::new(
            TriangularFd::reference(3).unwrap(),
            TriangularFd::reference(4).unwrap(),
            r(980, 1),
            r(1960, 1),
            r(81, 49),
        )
        .unwrap()
    }

    #[test]
    fn scenario_densities_match_hand_values() {
        let ring = exact_ring();
        assert_eq!(ring.scenario_a(r(60, 49)).unwrap().k, r(2, 49));
        // (c): half at 2.7/49, half at 11.8/49
        assert_eq!(ring.scenario_c().unwrap().k, r(725, 4900));
        // (b) at L2 = 1470: link 2 half free, half queued
        assert_eq!(ring.scenario_b(r(1470, 1)).unwrap().k, r(27 * 2 + 27 + 118, 4 * 490));
        // (d) at L0 = 490
        assert_eq!(ring.scenario_d(r(490, 1)).unwrap().k, r(27 + 48 + 118 * 2, 4 * 490));
        assert_eq!(ring.scenario_e(Rational64::from_integer(0)).unwrap().k, r(1, 2));
    }

    #[test]
    fn scenario_domains() {
        let ring = exact_ring();
        assert!(ring.scenario_a(r(91, 49)).is_err());
        assert!(ring.scenario_b(r(980, 1)).is_err());
        assert!(ring.scenario_d(r(980, 1)).is_err());
        assert!(ring.scenario_e(r(82, 49)).is_err());
        let fd3 = TriangularFd::<f64>::reference(3).unwrap();
        let fd4 = TriangularFd::<f64>::reference(4).unwrap();
        assert!(Ring::new(fd4, fd3, 980.0, 1960.0, 81.0 / 49.0).is_err());
        assert!(Ring::new(fd3, fd4, 980.0, 1960.0, 91.0 / 49.0).is_err());
        assert!(Ring::new(fd3, fd4, 0.0, 1960.0, 81.0 / 49.0).is_err());
    }

    #[test]
    fn polyline_shape() {
        let mfd = ring_mfd(&exact_ring(), 200).unwrap();
        assert_eq!(mfd.branches.len(), 5);
        for b in &mfd.branches {
            let expected = if b.label == ScenarioLabel::C { 1 } else { 200 };
            assert_eq!(b.points.len(), expected);
            assert!(b.points.windows(2).all(|w| w[0].0 <= w[1].0));
        }
        assert_eq!(mfd.rows().count(), 801);
        assert!(ring_mfd(&exact_ring(), 1).is_err());
    }

    #[test]
    fn flows_at_reports_coexisting_branches() {
        let fd3 = TriangularFd::<f64>::reference(3).unwrap();
        let fd4 = TriangularFd::<f64>::reference(4).unwrap();
        let ring = Ring::new(fd3, fd4, 980.0, 1960.0, 81.0 / 49.0).unwrap();
        let two = ring.flows_at(2.8 / 49.0).unwrap();
        assert_eq!(two.len(), 2);
        assert!((two[0].1 - 84.0 / 49.0).abs() < 1e-12);
        assert_eq!(two[1], (ScenarioLabel::B, 81.0 / 49.0));
        let jam = ring.flows_at(0.3).unwrap();
        assert_eq!(jam.len(), 1);
        assert!((jam[0].1 - (20.0 / 7.0 - 5.0 / 14.0 - 1.5)).abs() < 1e-12);
        assert_eq!(ring.flows_at(8.0 / 49.0).unwrap()[0].0, ScenarioLabel::D);
    }

    #[test]
    fn link_patterns() {
        use Phase::*;
        assert_eq!(link_pattern(&[Under, Critical, Under]), Some(LinkPattern::Under));
        assert_eq!(link_pattern(&[Over, Over]), Some(LinkPattern::Over));
        assert_eq!(link_pattern(&[Under, Under, Over, Over]), Some(LinkPattern::UnderThenOver));
        assert_eq!(link_pattern(&[Under, Over, Under, Over]), Some(LinkPattern::UnderThenOver));
        assert_eq!(link_pattern(&[Over, Under]), None);
        assert_eq!(link_pattern(&[Under, Over, Over, Under, Over]), None);
    }
}
