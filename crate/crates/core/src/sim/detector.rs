//! Virtual loop detectors at cell interfaces.

use serde::{Deserialize, Serialize};

use super::{Corridor, SimulationRecord};
use crate::analysis::detector::{DetectorRecord, StationRole, FEET_TO_METRES};
use crate::fundamental::TriangularFd;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VirtualDetector {
    pub station_id: String,
    pub role: StationRole,
    /// Interface to observe; must be tagged in the run's record spec.
    pub interface: usize,
    /// Aggregation interval, s.
    pub interval_s: f64,
    /// g-factor used to turn density into occupancy, feet.
    pub g_ft: f64,
}

/// Aggregates the tagged flux and upstream-cell density of `det.interface`
/// into fixed intervals. Flow is reported in veh/h over all lanes; occupancy
/// is the per-lane density times the g-factor, capped at one. Only complete
/// intervals are emitted.
pub fn virtual_detector(
    corridor: &Corridor<TriangularFd<f64>>,
    record: &SimulationRecord,
    det: &VirtualDetector,
) -> Result<Vec<DetectorRecord>> {
    if !(det.interval_s > 0.0 && det.g_ft > 0.0) {
        return Err(Error::param("detector interval and g-factor must be positive"));
    }
    let series = record
        .tagged
        .get(&det.interface)
        .ok_or_else(|| Error::param(format!("interface {} was not tagged in this run", det.interface)))?;
    let cell = if det.interface == 0 {
        if corridor.is_ring() {
            corridor.cell_count() - 1
        } else {
            return Err(Error::param("the entry interface has no upstream cell to observe"));
        }
    } else {
        det.interface - 1
    };
    let lanes = corridor.fd_of_cell(cell).lanes() as f64;
    let g_m = det.g_ft * FEET_TO_METRES;

    let t0 = record.step_times.first().copied().unwrap_or(0.0);
    let per_bin = det.interval_s / record.dt;
    let mut out = Vec::new();
    let mut bin = 0usize;
    let (mut flow, mut density, mut n) = (0.0, 0.0, 0usize);
    for (j, &t) in record.step_times.iter().enumerate() {
        let b = ((t - t0) / det.interval_s + 1e-9).floor() as usize;
        if b != bin {
            if n as f64 >= per_bin - 1.0 {
                out.push(aggregate(det, t0 + bin as f64 * det.interval_s, flow, density, n, lanes, g_m)?);
            }
            bin = b;
            (flow, density, n) = (0.0, 0.0, 0);
        }
        flow += series.flux[j];
        density += series.upstream_density[j];
        n += 1;
    }
    // the last bin counts only if the run reached its end
    let end = t0 + (bin + 1) as f64 * det.interval_s;
    if n > 0 && record.final_state.time >= end - 1e-9 * end.abs().max(1.0) {
        out.push(aggregate(det, t0 + bin as f64 * det.interval_s, flow, density, n, lanes, g_m)?);
    }
    Ok(out)
}

fn aggregate(
    det: &VirtualDetector,
    timestamp: f64,
    flow: f64,
    density: f64,
    n: usize,
    lanes: f64,
    g_m: f64,
) -> Result<DetectorRecord> {
    let n = n as f64;
    let occupancy = (density / n / lanes * g_m).min(1.0);
    DetectorRecord::new(timestamp, det.station_id.clone(), det.role, flow / n * 3600.0, occupancy)
}

#[cfg(test)]
mod tests {
    use super::super::{run, RecordSpec};
    use super::*;
    use crate::sim::presets::RingSetup;

    #[test]
    fn uniform_ring_gives_constant_readings() {
        let setup = RingSetup { base_density: 2.0 / 49.0, ..RingSetup::default() };
        let (ring, k) = setup.build(0.0).unwrap();
        let spec = RecordSpec { tagged: vec![270], ..RecordSpec::default() };
        let rec = run(&ring, k, 300.0, &spec).unwrap();
        let det = VirtualDetector {
            station_id: "v1".into(),
            role: StationRole::UpstreamMainline,
            interface: 270,
            interval_s: 30.0,
            g_ft: 22.0,
        };
        let out = virtual_detector(&ring, &rec, &det).unwrap();
        assert_eq!(out.len(), 10);
        for r in &out {
            assert!((r.flow_vph - 60.0 / 49.0 * 3600.0).abs() < 1e-9);
            assert!((r.occupancy - 0.5 / 49.0 * 22.0 * 0.3048).abs() < 1e-12);
        }
        assert_eq!(out[3].timestamp, 90.0);
        let untagged = VirtualDetector { interface: 5, ..det };
        assert!(virtual_detector(&ring, &rec, &untagged).is_err());
    }
}
