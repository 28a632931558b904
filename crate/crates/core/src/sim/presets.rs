//! Ready-made corridors: the bistable lane-drop ring and an open lane drop.

use serde::{Deserialize, Serialize};

use super::{Corridor, Junction, Link};
use crate::flux::Schedule;
use crate::fundamental::{FundamentalDiagram, TriangularFd};
use crate::{Error, Result};

/// Triangular diagram parameters shared by every link of a preset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FdParams {
    /// v*, m/s.
    pub free_flow_speed: f64,
    /// τ, s.
    pub time_gap: f64,
    /// k*, veh/m per lane.
    pub jam_density_per_lane: f64,
}

impl Default for FdParams {
    fn default() -> Self {
        FdParams {
            free_flow_speed: 30.0,
            time_gap: 1.4,
            jam_density_per_lane: 1.0 / 7.0,
        }
    }
}

impl FdParams {
    pub fn diagram(&self, lanes: u32) -> Result<TriangularFd<f64>> {
        TriangularFd::new(lanes, self.free_flow_speed, self.time_gap, self.jam_density_per_lane)
    }
}

/// Ring of length `length`: link 1 on `[0, l1)` with `lanes_1` lanes, link 2
/// on `[l1, length)` with `lanes_2` lanes. The wrap junction (link 2 into
/// link 1) carries the capacity-drop rule; the other is a plain min rule
/// unless `c_star_12` is set.
///
/// The initial field is `base_density` plus `+ε` on the last
/// `perturbation_width` metres of the ring and `-ε` on the stretch just
/// before it, so the vehicle count does not depend on ε.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RingSetup {
    pub length: f64,
    pub l1: f64,
    pub lanes_1: u32,
    pub lanes_2: u32,
    pub fd: FdParams,
    /// Dropped capacity at the 2 → 1 junction (the wrap), veh/s.
    pub c_star: f64,
    /// Dropped capacity at the 1 → 2 junction; `None` means a plain min rule.
    pub c_star_12: Option<f64>,
    pub base_density: f64,
    pub perturbation_width: f64,
    pub dx: f64,
    pub dt: f64,
}

impl Default for RingSetup {
    fn default() -> Self {
        RingSetup {
            length: 1960.0,
            l1: 980.0,
            lanes_1: 3,
            lanes_2: 4,
            fd: FdParams::default(),
            c_star: 81.0 / 49.0,
            c_star_12: None,
            base_density: 2.8 / 49.0,
            perturbation_width: 70.0,
            dx: 7.0,
            dt: 7.0 / 30.0,
        }
    }
}

impl RingSetup {
    pub fn corridor(&self) -> Result<Corridor> {
        if !(self.l1 > 0.0 && self.l1 < self.length) {
            return Err(Error::param(format!(
                "l1 = {} must lie strictly inside (0, {})",
                self.l1, self.length
            )));
        }
        let links = vec![
            Link { length: self.l1, fd: self.fd.diagram(self.lanes_1)? },
            Link { length: self.length - self.l1, fd: self.fd.diagram(self.lanes_2)? },
        ];
        let j12 = match self.c_star_12 {
            Some(c) => Junction::capacity_drop(c),
            None => Junction::standard(),
        };
        Corridor::ring(links, vec![j12, Junction::capacity_drop(self.c_star)], self.dx, self.dt)
    }

    /// Interface carrying the wrap junction.
    pub fn drop_interface(&self) -> usize {
        0
    }

    /// Initial field for perturbation amplitude `epsilon`, veh/m.
    pub fn initial(&self, corridor: &Corridor, epsilon: f64) -> Result<Vec<f64>> {
        let w = self.perturbation_width;
        if !(w > 0.0) || self.length - 2.0 * w < self.l1 {
            return Err(Error::param(format!(
                "perturbation width {w} m must be positive and fit inside link 2"
            )));
        }
        let jam = corridor.links()[1].fd.jam_density();
        if epsilon < 0.0 || self.base_density - epsilon < 0.0 || self.base_density + epsilon > jam {
            return Err(Error::param(format!(
                "base density {} ± ε = {epsilon} leaves [0, {jam}]",
                self.base_density
            )));
        }
        let k = self.base_density;
        Ok(corridor.cell_average(
            k,
            &[
                (self.length - 2.0 * w, self.length - w, k - epsilon),
                (self.length - w, self.length, k + epsilon),
            ],
        ))
    }

    pub fn build(&self, epsilon: f64) -> Result<(Corridor, Vec<f64>)> {
        let corridor = self.corridor()?;
        let initial = self.initial(&corridor, epsilon)?;
        Ok((corridor, initial))
    }
}

/// The ring with default geometry and perturbation amplitude `epsilon`.
pub fn preset_ring_bistability(epsilon: f64) -> Result<(Corridor, Vec<f64>)> {
    RingSetup::default().build(epsilon)
}

/// Open corridor: an upstream link of `lanes_up` lanes dropping into a
/// downstream link of `lanes_down` lanes through a capacity-drop junction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LaneDropSetup {
    pub lanes_up: u32,
    pub lanes_down: u32,
    pub fd: FdParams,
    pub c_star: f64,
    pub upstream_length: f64,
    pub downstream_length: f64,
    pub dx: f64,
    pub dt: f64,
}

impl Default for LaneDropSetup {
    fn default() -> Self {
        LaneDropSetup {
            lanes_up: 4,
            lanes_down: 3,
            fd: FdParams::default(),
            c_star: 81.0 / 49.0,
            upstream_length: 1400.0,
            downstream_length: 700.0,
            dx: 7.0,
            dt: 7.0 / 30.0,
        }
    }
}

impl LaneDropSetup {
    pub fn upstream_fd(&self) -> Result<TriangularFd<f64>> {
        self.fd.diagram(self.lanes_up)
    }

    pub fn downstream_fd(&self) -> Result<TriangularFd<f64>> {
        self.fd.diagram(self.lanes_down)
    }

    pub fn corridor(&self, entry_demand: Schedule<f64>, exit_supply: Schedule<f64>) -> Result<Corridor> {
        let links = vec![
            Link { length: self.upstream_length, fd: self.upstream_fd()? },
            Link { length: self.downstream_length, fd: self.downstream_fd()? },
        ];
        Corridor::open(
            links,
            vec![Junction::capacity_drop(self.c_star)],
            entry_demand,
            exit_supply,
            self.dx,
            self.dt,
        )
    }

    /// Interface carrying the lane-drop junction.
    pub fn drop_interface(&self) -> usize {
        (self.upstream_length / self.dx).round() as usize
    }

    /// Riemann data `k1 | k2` at the drop with the last
    /// `perturbation_length` metres upstream of it raised (or lowered) to
    /// `k0`. The boundaries hold the far-field states: the entry offers the
    /// demand of `k1`, the exit the supply of `k2`.
    pub fn perturbed_riemann(&self, k1: f64, k0: f64, k2: f64, perturbation_length: f64) -> Result<(Corridor, Vec<f64>)> {
        if !(0.0..=self.upstream_length).contains(&perturbation_length) {
            return Err(Error::param(format!(
                "perturbation length {perturbation_length} m must lie in [0, {}]",
                self.upstream_length
            )));
        }
        let up = self.upstream_fd()?;
        let down = self.downstream_fd()?;
        let d1 = up.demand(k1)?;
        up.check_density(k0)?;
        let s2 = down.supply(k2)?;
        let corridor = self.corridor(Schedule::constant(d1), Schedule::constant(s2))?;
        let x_drop = self.upstream_length;
        let total = x_drop + self.downstream_length;
        let initial = corridor.cell_average(
            k1,
            &[(x_drop - perturbation_length, x_drop, k0), (x_drop, total, k2)],
        );
        Ok((corridor, initial))
    }

    /// Empty corridor driven by constant boundary demand `d0` and supply `s0`.
    pub fn open_statics(&self, d0: f64, s0: f64) -> Result<(Corridor, Vec<f64>)> {
        let up = self.upstream_fd()?;
        let down = self.downstream_fd()?;
        if !(0.0..=up.capacity()).contains(&d0) || !(0.0..=down.capacity()).contains(&s0) {
            return Err(Error::param(format!(
                "d0 = {d0} must lie in [0, {}] and s0 = {s0} in [0, {}]",
                up.capacity(),
                down.capacity()
            )));
        }
        let corridor = self.corridor(Schedule::constant(d0), Schedule::constant(s0))?;
        let initial = vec![0.0; corridor.cell_count()];
        Ok((corridor, initial))
    }
}

/// Open lane drop with default geometry.
pub fn preset_perturbed_riemann(k1: f64, k0: f64, k2: f64, perturbation_length: f64) -> Result<(Corridor, Vec<f64>)> {
    LaneDropSetup::default().perturbed_riemann(k1, k0, k2, perturbation_length)
}
