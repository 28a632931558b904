//! Closed-form stationary states, the ring-road macroscopic fundamental
//! diagram, open-road statics and capacity-drop estimation from detectors.

pub mod detector;
pub mod mfd;
pub mod statics;

pub use detector::{estimate_capacity_drop, DetectorRecord, DropEstimate, EstimatorConfig, StationRole};
pub use mfd::{classify_ring_stationary, ring_mfd, Mfd, MfdBranch, Ring, RingScenario, ScenarioLabel};
pub use statics::{observable_fd, open_road_statics, ObservableFd, StaticsCase, StaticsSolution};

use crate::fundamental::{Congestion, FundamentalDiagram};
use crate::scalar::Scalar;
use crate::Result;

/// Density of the undercritical state carrying flow `q`.
pub(crate) fn uc_density<T: Scalar, F: FundamentalDiagram<T>>(fd: &F, q: T) -> Result<T> {
    fd.density_from_congestion(Congestion::Level(q / fd.capacity()))
}

/// Density of the overcritical state carrying flow `q`.
pub(crate) fn oc_density<T: Scalar, F: FundamentalDiagram<T>>(fd: &F, q: T) -> Result<T> {
    if q.is_zero() {
        Ok(fd.jam_density())
    } else {
        fd.density_from_congestion(Congestion::Level(fd.capacity() / q))
    }
}
