//! Godunov / cell-transmission stepper on a ring or an open corridor.
//!
//! A corridor is an ordered list of homogeneous links cut into cells of
//! length `dx`. Interfaces are numbered by the cell they feed: interface `i`
//! is the upstream edge of cell `i`. On a ring interface `0` is the wrap from
//! the last cell into the first; on an open corridor interface `0` is the
//! entry and interface `M` (the cell count) is the exit.
//!
//! Each step computes every interface flux from the time-`j` densities and
//! only then updates the cells.

pub mod detector;
pub mod presets;

use std::collections::BTreeMap;

use serde::Serialize;

use crate::flux::{standard_flux, NodeModel, Schedule};
use crate::fundamental::{FundamentalDiagram, TriangularFd};
use crate::scalar::Scalar;
use crate::{Error, Result};

pub use presets::{preset_perturbed_riemann, preset_ring_bistability, LaneDropSetup, RingSetup};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Link<F> {
    pub length: f64,
    pub fd: F,
}

/// Point-queue on-ramp feeding a merge junction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OnRamp {
    pub arrivals: Schedule<f64>,
    /// Maximum ramp discharge, veh/s.
    pub capacity: f64,
}

/// Node between two consecutive links.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Junction {
    pub model: NodeModel<f64>,
    pub ramp: Option<OnRamp>,
}

impl Junction {
    pub fn standard() -> Self {
        Junction {
            model: NodeModel::Standard,
            ramp: None,
        }
    }

    pub fn capacity_drop(c_star: f64) -> Self {
        Junction {
            model: NodeModel::CapacityDrop { c_star },
            ramp: None,
        }
    }

    pub fn merge(alpha: f64, delta: f64, c3: f64, ramp: OnRamp) -> Self {
        Junction {
            model: NodeModel::MergeCapacityDrop { alpha, delta, c3 },
            ramp: Some(ramp),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Boundary {
    Ring,
    /// `entry` must be [`NodeModel::ExternalDemand`] and `exit`
    /// [`NodeModel::ExternalSupply`].
    Open {
        entry: NodeModel<f64>,
        exit: NodeModel<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum InterfaceKind {
    Interior,
    Junction(usize),
    Entry,
    Exit,
}

#[derive(Debug, Clone)]
pub struct Corridor<F = TriangularFd<f64>> {
    links: Vec<Link<F>>,
    junctions: Vec<Junction>,
    boundary: Boundary,
    dx: f64,
    dt: f64,
    cell_link: Vec<usize>,
    link_start: Vec<usize>,
    interfaces: Vec<InterfaceKind>,
}

impl<F: FundamentalDiagram<f64>> Corridor<F> {
    /// Closed ring; `junctions[j]` joins link `j` to link `j + 1`, and the
    /// last junction is the wrap from the last link into the first.
    pub fn ring(links: Vec<Link<F>>, junctions: Vec<Junction>, dx: f64, dt: f64) -> Result<Self> {
        if junctions.len() != links.len() {
            return Err(Error::param(format!(
                "a ring of {} links needs {} junctions, got {}",
                links.len(),
                links.len(),
                junctions.len()
            )));
        }
        Self::build(links, junctions, Boundary::Ring, dx, dt)
    }

    /// Open corridor fed by `entry_demand` and drained into `exit_supply`.
    pub fn open(
        links: Vec<Link<F>>,
        junctions: Vec<Junction>,
        entry_demand: Schedule<f64>,
        exit_supply: Schedule<f64>,
        dx: f64,
        dt: f64,
    ) -> Result<Self> {
        if junctions.len() + 1 != links.len() {
            return Err(Error::param(format!(
                "an open corridor of {} links needs {} junctions, got {}",
                links.len(),
                links.len().saturating_sub(1),
                junctions.len()
            )));
        }
        let boundary = Boundary::Open {
            entry: NodeModel::ExternalDemand(entry_demand),
            exit: NodeModel::ExternalSupply(exit_supply),
        };
        Self::build(links, junctions, boundary, dx, dt)
    }

    fn build(links: Vec<Link<F>>, junctions: Vec<Junction>, boundary: Boundary, dx: f64, dt: f64) -> Result<Self> {
        if links.is_empty() {
            return Err(Error::param("corridor needs at least one link"));
        }
        if !(dx > 0.0 && dt > 0.0) {
            return Err(Error::param(format!("dx = {dx} and dt = {dt} must be positive")));
        }
        let speed = links
            .iter()
            .map(|l| l.fd.max_wave_speed())
            .fold(0.0, f64::max);
        let travel = speed * dt;
        if travel > dx * (1.0 + 1e-12) {
            return Err(Error::Cfl { speed, dt, dx, travel });
        }

        let mut cell_link = Vec::new();
        let mut link_start = Vec::with_capacity(links.len() + 1);
        for (j, link) in links.iter().enumerate() {
            let cells = link.length / dx;
            let n = cells.round();
            if link.length <= 0.0 || (cells - n).abs() > 1e-9 * cells.max(1.0) {
                return Err(Error::param(format!(
                    "link {j} length {} m is not a positive multiple of dx = {dx} m",
                    link.length
                )));
            }
            link_start.push(cell_link.len());
            cell_link.extend(std::iter::repeat_n(j, n as usize));
        }
        link_start.push(cell_link.len());
        let cells = cell_link.len();

        let n_links = links.len();
        for (j, junction) in junctions.iter().enumerate() {
            let down = (j + 1) % n_links;
            junction
                .model
                .validate(links[down].fd.capacity())
                .map_err(|e| Error::param(format!("junction {j}: {e}")))?;
            match (&junction.model, &junction.ramp) {
                (NodeModel::MergeCapacityDrop { .. }, None) => {
                    return Err(Error::param(format!("junction {j}: merge needs an on-ramp")))
                }
                (NodeModel::MergeCapacityDrop { .. }, Some(ramp)) if ramp.capacity < 0.0 => {
                    return Err(Error::param(format!("junction {j}: negative ramp capacity")))
                }
                (NodeModel::MergeCapacityDrop { .. }, Some(_)) => {}
                (NodeModel::ExternalDemand(_) | NodeModel::ExternalSupply(_), _) => {
                    return Err(Error::param(format!("junction {j}: boundary model used inside the corridor")))
                }
                (_, Some(_)) => {
                    return Err(Error::param(format!("junction {j}: on-ramp attached to a non-merge node")))
                }
                (_, None) => {}
            }
        }
        if let Boundary::Open { entry, exit } = &boundary {
            if !matches!(entry, NodeModel::ExternalDemand(_)) || !matches!(exit, NodeModel::ExternalSupply(_)) {
                return Err(Error::param("open corridor needs an external demand entry and supply exit"));
            }
        }

        let mut interfaces = match boundary {
            Boundary::Ring => vec![InterfaceKind::Interior; cells],
            Boundary::Open { .. } => {
                let mut v = vec![InterfaceKind::Interior; cells + 1];
                v[0] = InterfaceKind::Entry;
                v[cells] = InterfaceKind::Exit;
                v
            }
        };
        for j in 0..junctions.len() {
            interfaces[link_start[j + 1] % cells] = InterfaceKind::Junction(j);
        }

        Ok(Corridor {
            links,
            junctions,
            boundary,
            dx,
            dt,
            cell_link,
            link_start,
            interfaces,
        })
    }

    pub fn links(&self) -> &[Link<F>] {
        &self.links
    }

    pub fn junctions(&self) -> &[Junction] {
        &self.junctions
    }

    pub fn boundary(&self) -> &Boundary {
        &self.boundary
    }

    pub fn is_ring(&self) -> bool {
        matches!(self.boundary, Boundary::Ring)
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn cell_count(&self) -> usize {
        self.cell_link.len()
    }

    pub fn interface_count(&self) -> usize {
        self.interfaces.len()
    }

    /// Link owning cell `i`.
    pub fn link_of_cell(&self, i: usize) -> usize {
        self.cell_link[i]
    }

    /// Cell range of link `j`.
    pub fn link_cells(&self, j: usize) -> std::ops::Range<usize> {
        self.link_start[j]..self.link_start[j + 1]
    }

    /// Interface index of junction `j`.
    pub fn junction_interface(&self, j: usize) -> usize {
        self.link_start[j + 1] % self.cell_count()
    }

    pub fn fd_of_cell(&self, i: usize) -> &F {
        &self.links[self.cell_link[i]].fd
    }

    fn upstream_cell(&self, interface: usize) -> Option<usize> {
        let m = self.cell_count();
        if self.is_ring() {
            Some((interface + m - 1) % m)
        } else if interface == 0 {
            None
        } else {
            Some(interface - 1)
        }
    }

    fn downstream_cell(&self, interface: usize) -> Option<usize> {
        (interface < self.cell_count()).then_some(interface)
    }

    /// Total vehicles on the road, `Σ k_i dx`.
    pub fn vehicles(&self, densities: &[f64]) -> f64 {
        densities.iter().sum::<f64>() * self.dx
    }

    /// Cell averages of a piecewise-constant profile given as
    /// `(x_start, x_end, density)` pieces over `[0, L)`; uncovered space
    /// takes `base`.
    pub fn cell_average(&self, base: f64, pieces: &[(f64, f64, f64)]) -> Vec<f64> {
        (0..self.cell_count())
            .map(|i| {
                let a = i as f64 * self.dx;
                let b = a + self.dx;
                let mut covered = 0.0;
                let mut mass = 0.0;
                for &(x0, x1, k) in pieces {
                    let overlap = (b.min(x1) - a.max(x0)).max(0.0);
                    covered += overlap;
                    mass += overlap * k;
                }
                (mass + (self.dx - covered).max(0.0) * base) / self.dx
            })
            .collect()
    }

    /// Computes all interface fluxes from `state` and advances it one step.
    pub fn step(&self, state: &mut SimulationState) -> Result<StepFluxes> {
        let m = self.cell_count();
        if state.densities.len() != m {
            return Err(Error::param(format!(
                "state has {} cells, corridor has {m}",
                state.densities.len()
            )));
        }
        let t = state.time;
        let mut demand = Vec::with_capacity(m);
        let mut supply = Vec::with_capacity(m);
        for (i, &k) in state.densities.iter().enumerate() {
            let fd = self.fd_of_cell(i);
            demand.push(fd.demand(k)?);
            supply.push(fd.supply(k)?);
        }

        let n = self.interface_count();
        let mut flux = vec![0.0; n];
        let mut ramp = vec![0.0; n];
        for (i, kind) in self.interfaces.iter().enumerate() {
            let up = self.upstream_cell(i);
            let down = self.downstream_cell(i);
            flux[i] = match (*kind, up, down) {
                (InterfaceKind::Interior, Some(u), Some(d)) => standard_flux(demand[u], supply[d])?,
                (InterfaceKind::Junction(j), Some(u), Some(d)) => {
                    let junction = &self.junctions[j];
                    match &junction.ramp {
                        Some(r) => {
                            let arrivals = r.arrivals.value_at(t);
                            let ramp_demand = r.capacity.min(arrivals + state.ramp_queues[j] / self.dt);
                            let mf = junction.model.merge_flux(demand[u], ramp_demand, supply[d])?;
                            ramp[i] = mf.second;
                            mf.total
                        }
                        None => junction.model.flux(demand[u], supply[d], t)?,
                    }
                }
                (InterfaceKind::Entry, None, Some(d)) => match &self.boundary {
                    Boundary::Open { entry, .. } => entry.flux(0.0, supply[d], t)?,
                    Boundary::Ring => unreachable!(),
                },
                (InterfaceKind::Exit, Some(u), None) => match &self.boundary {
                    Boundary::Open { exit, .. } => exit.flux(demand[u], 0.0, t)?,
                    Boundary::Ring => unreachable!(),
                },
                _ => unreachable!("interface layout is fixed at construction"),
            };
        }

        let ratio = self.dt / self.dx;
        let mut max_change = 0.0f64;
        for i in 0..m {
            let next = if self.is_ring() { (i + 1) % m } else { i + 1 };
            let outflow = flux[next] - ramp[next];
            let k = state.densities[i] + ratio * (flux[i] - outflow);
            let jam = self.fd_of_cell(i).jam_density();
            let tol = f64::tolerance();
            if !(k >= -tol && k <= jam + tol) {
                return Err(Error::DensityOutOfBounds {
                    cell: i,
                    density: k,
                    jam,
                    time: t + self.dt,
                });
            }
            let k = k.clamp(0.0, jam);
            max_change = max_change.max((k - state.densities[i]).abs());
            state.densities[i] = k;
        }

        for (j, junction) in self.junctions.iter().enumerate() {
            if let Some(r) = &junction.ramp {
                let served = ramp[self.junction_interface(j)];
                state.ramp_queues[j] = (state.ramp_queues[j] + (r.arrivals.value_at(t) - served) * self.dt).max(0.0);
            }
        }

        let (inflow, outflow) = match self.boundary {
            Boundary::Ring => (ramp.iter().sum(), 0.0),
            Boundary::Open { .. } => (flux[0] + ramp.iter().sum::<f64>(), flux[m]),
        };
        state.time = t + self.dt;
        state.steps += 1;
        Ok(StepFluxes {
            flux,
            ramp,
            inflow,
            outflow,
            max_change,
        })
    }
}

/// Densities and on-ramp queues at a given time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationState {
    pub densities: Vec<f64>,
    /// Vehicles waiting on each junction's on-ramp (zero for plain junctions).
    pub ramp_queues: Vec<f64>,
    pub time: f64,
    pub steps: u64,
}

impl SimulationState {
    pub fn new<F: FundamentalDiagram<f64>>(corridor: &Corridor<F>, densities: Vec<f64>) -> Result<Self> {
        if densities.len() != corridor.cell_count() {
            return Err(Error::param(format!(
                "initial condition has {} cells, corridor has {}",
                densities.len(),
                corridor.cell_count()
            )));
        }
        let densities = densities
            .iter()
            .enumerate()
            .map(|(i, &k)| corridor.fd_of_cell(i).check_density(k))
            .collect::<Result<Vec<_>>>()?;
        Ok(SimulationState {
            densities,
            ramp_queues: vec![0.0; corridor.junctions().len()],
            time: 0.0,
            steps: 0,
        })
    }
}

/// Interface fluxes of one step. `flux[i]` enters cell `i`; the upstream cell
/// loses `flux[i] - ramp[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepFluxes {
    pub flux: Vec<f64>,
    pub ramp: Vec<f64>,
    /// Boundary plus on-ramp inflow, veh/s.
    pub inflow: f64,
    /// Exit outflow, veh/s.
    pub outflow: f64,
    /// Largest absolute density change in the step.
    pub max_change: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordSpec {
    /// Density field snapshot cadence in steps; `None` keeps only the
    /// initial and final fields.
    pub snapshot_every: Option<usize>,
    /// Interfaces whose flux and adjacent densities are recorded every step.
    pub tagged: Vec<usize>,
    /// Trailing fraction of the run used for average flows.
    pub averaging_fraction: f64,
    /// Stationarity threshold on `max |k(t) - k(t - dt)|`.
    pub convergence_tol: f64,
    /// Consecutive quiet steps required to declare convergence.
    pub convergence_steps: usize,
}

impl Default for RecordSpec {
    fn default() -> Self {
        RecordSpec {
            snapshot_every: None,
            tagged: Vec::new(),
            averaging_fraction: 0.2,
            convergence_tol: 1e-8,
            convergence_steps: 100,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TaggedSeries {
    pub flux: Vec<f64>,
    /// NaN at the entry interface.
    pub upstream_density: Vec<f64>,
    /// NaN at the exit interface.
    pub downstream_density: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationRecord {
    pub dt: f64,
    pub dx: f64,
    pub snapshot_times: Vec<f64>,
    pub snapshots: Vec<Vec<f64>>,
    /// Start time of each step.
    pub step_times: Vec<f64>,
    /// Mean interface flux of each step.
    pub mean_flux: Vec<f64>,
    /// Vehicles on the road, one entry per step plus the initial count.
    pub vehicles: Vec<f64>,
    pub inflow: Vec<f64>,
    pub outflow: Vec<f64>,
    pub tagged: BTreeMap<usize, TaggedSeries>,
    /// Time at which the current run of quiet steps reached the threshold,
    /// if the field is stationary at the end of the run.
    pub converged_at: Option<f64>,
    pub averaging_fraction: f64,
    pub final_state: SimulationState,
}

impl SimulationRecord {
    pub fn steps(&self) -> usize {
        self.mean_flux.len()
    }

    fn tail(&self, len: usize) -> std::ops::Range<usize> {
        let n = (len as f64 * self.averaging_fraction).ceil() as usize;
        len - n.min(len)..len
    }

    /// Time-mean of the mean interface flux over the trailing window.
    pub fn average_flow(&self) -> f64 {
        mean(&self.mean_flux[self.tail(self.mean_flux.len())])
    }

    /// Time-mean flux through one tagged interface over the trailing window.
    pub fn tagged_average(&self, interface: usize) -> Option<f64> {
        let s = self.tagged.get(&interface)?;
        Some(mean(&s.flux[self.tail(s.flux.len())]))
    }

    pub fn converged(&self) -> bool {
        self.converged_at.is_some()
    }

    /// Largest relative deviation of the vehicle count from its initial value.
    pub fn vehicle_drift(&self) -> f64 {
        let n0 = self.vehicles[0];
        let scale = n0.abs().max(f64::MIN_POSITIVE);
        self.vehicles.iter().map(|n| (n - n0).abs() / scale).fold(0.0, f64::max)
    }

    /// Largest per-step violation of `N(t+dt) - N(t) = dt (in - out)`,
    /// relative to the largest vehicle count seen.
    pub fn balance_residual(&self) -> f64 {
        let scale = self.vehicles.iter().fold(f64::MIN_POSITIVE, |a, &b| a.max(b.abs()));
        (0..self.steps())
            .map(|j| {
                let change = self.vehicles[j + 1] - self.vehicles[j];
                (change - self.dt * (self.inflow[j] - self.outflow[j])).abs() / scale
            })
            .fold(0.0, f64::max)
    }

    /// Relative residual of the whole-run balance.
    pub fn cumulative_balance_residual(&self) -> f64 {
        let n = self.steps();
        let net: f64 = (0..n).map(|j| self.dt * (self.inflow[j] - self.outflow[j])).sum();
        let scale = self.vehicles.iter().fold(f64::MIN_POSITIVE, |a, &b| a.max(b.abs()));
        (self.vehicles[n] - self.vehicles[0] - net).abs() / scale
    }
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        f64::NAN
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Number of steps needed to reach `duration`.
pub fn step_count(duration: f64, dt: f64) -> usize {
    if duration <= 0.0 {
        0
    } else {
        (duration / dt - 1e-9).ceil() as usize
    }
}

/// Runs from `initial` for `duration` seconds.
pub fn run<F: FundamentalDiagram<f64>>(
    corridor: &Corridor<F>,
    initial: Vec<f64>,
    duration: f64,
    spec: &RecordSpec,
) -> Result<SimulationRecord> {
    let state = SimulationState::new(corridor, initial)?;
    run_from(corridor, state, duration, spec)
}

/// Like [`run`], continuing from an existing state.
pub fn run_from<F: FundamentalDiagram<f64>>(
    corridor: &Corridor<F>,
    mut state: SimulationState,
    duration: f64,
    spec: &RecordSpec,
) -> Result<SimulationRecord> {
    if !(0.0..=1.0).contains(&spec.averaging_fraction) {
        return Err(Error::param("averaging fraction must lie in [0, 1]"));
    }
    for &i in &spec.tagged {
        if i >= corridor.interface_count() {
            return Err(Error::param(format!(
                "tagged interface {i} out of range (corridor has {})",
                corridor.interface_count()
            )));
        }
    }
    if state.densities.len() != corridor.cell_count() {
        return Err(Error::param("state does not match corridor"));
    }
    let steps = step_count(duration, corridor.dt());
    let mut rec = SimulationRecord {
        dt: corridor.dt(),
        dx: corridor.dx(),
        snapshot_times: vec![state.time],
        snapshots: vec![state.densities.clone()],
        step_times: Vec::with_capacity(steps),
        mean_flux: Vec::with_capacity(steps),
        vehicles: vec![corridor.vehicles(&state.densities)],
        inflow: Vec::with_capacity(steps),
        outflow: Vec::with_capacity(steps),
        tagged: spec.tagged.iter().map(|&i| (i, TaggedSeries::default())).collect(),
        converged_at: None,
        averaging_fraction: spec.averaging_fraction,
        final_state: state.clone(),
    };
    let mut quiet = 0usize;
    for j in 1..=steps {
        for (&i, series) in rec.tagged.iter_mut() {
            let density = |c: Option<usize>| c.map_or(f64::NAN, |c| state.densities[c]);
            series.upstream_density.push(density(corridor.upstream_cell(i)));
            series.downstream_density.push(density(corridor.downstream_cell(i)));
        }
        rec.step_times.push(state.time);
        let fluxes = corridor.step(&mut state)?;
        for (&i, series) in rec.tagged.iter_mut() {
            series.flux.push(fluxes.flux[i]);
        }
        rec.mean_flux.push(mean(&fluxes.flux));
        rec.inflow.push(fluxes.inflow);
        rec.outflow.push(fluxes.outflow);
        rec.vehicles.push(corridor.vehicles(&state.densities));

        if fluxes.max_change < spec.convergence_tol {
            quiet += 1;
            if quiet == spec.convergence_steps {
                rec.converged_at = Some(state.time);
            }
        } else {
            quiet = 0;
            rec.converged_at = None;
        }

        let snap = match spec.snapshot_every {
            Some(every) if every > 0 => j % every == 0 || j == steps,
            _ => j == steps,
        };
        if snap {
            rec.snapshot_times.push(state.time);
            rec.snapshots.push(state.densities.clone());
        }
    }
    rec.final_state = state;
    Ok(rec)
}
