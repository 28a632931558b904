//! Capacity-drop estimation from loop-detector flow and occupancy series.
//!
//! Occupancy is turned into density with the g-factor: a vehicle of
//! effective length `g` covering the loop for a fraction `o` of the time
//! means `o / g` vehicles per unit length per lane.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const FEET_TO_METRES: f64 = 0.3048;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StationRole {
    UpstreamMainline,
    Onramp,
    DownstreamMainline,
}

/// One aggregated detector sample. Flow counts all lanes; occupancy is the
/// lane-averaged time fraction in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorRecord {
    /// Seconds.
    pub timestamp: f64,
    pub station_id: String,
    pub role: StationRole,
    pub flow_vph: f64,
    pub occupancy: f64,
}

impl DetectorRecord {
    pub fn new(timestamp: f64, station_id: impl Into<String>, role: StationRole, flow_vph: f64, occupancy: f64) -> Result<Self> {
        let r = DetectorRecord {
            timestamp,
            station_id: station_id.into(),
            role,
            flow_vph,
            occupancy,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.timestamp.is_finite() {
            return Err(Error::param(format!("non-finite timestamp {}", self.timestamp)));
        }
        if !(self.flow_vph >= 0.0 && self.flow_vph.is_finite()) {
            return Err(Error::Domain { what: "flow", value: self.flow_vph, lo: 0.0, hi: f64::INFINITY });
        }
        if !(0.0..=1.0).contains(&self.occupancy) {
            return Err(Error::Domain { what: "occupancy", value: self.occupancy, lo: 0.0, hi: 1.0 });
        }
        Ok(())
    }

    /// Per-lane density in veh/m for a g-factor in feet.
    pub fn density_per_lane(&self, g_ft: f64) -> f64 {
        self.occupancy / (g_ft * FEET_TO_METRES)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    /// Effective vehicle length seen by the loop, feet.
    pub g_ft: f64,
    /// Lanes covered by the station; only scales the reported speeds.
    pub lanes: u32,
    /// Sliding window length, s.
    pub window_s: f64,
    /// A window is near-stationary when the coefficient of variation of both
    /// flow and occupancy is below this.
    pub cv_threshold: f64,
    /// Windows slower than this fraction of the free-flow speed are queued.
    pub queued_speed_ratio: f64,
    /// Percentile of window speeds taken as the free-flow speed.
    pub free_speed_percentile: f64,
    /// Restrict to one station; `None` uses every record.
    pub station_id: Option<String>,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            g_ft: 22.0,
            lanes: 1,
            window_s: 300.0,
            cv_threshold: 0.1,
            queued_speed_ratio: 0.8,
            free_speed_percentile: 0.95,
            station_id: None,
        }
    }
}

impl EstimatorConfig {
    fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::param(msg.to_string()));
        if !(self.g_ft > 0.0) {
            return bad("g-factor must be positive");
        }
        if self.lanes == 0 {
            return bad("lane count must be positive");
        }
        if !(self.window_s > 0.0) {
            return bad("window length must be positive");
        }
        if !(self.cv_threshold > 0.0) {
            return bad("variation threshold must be positive");
        }
        if !(self.queued_speed_ratio > 0.0 && self.queued_speed_ratio < 1.0) {
            return bad("queued speed ratio must lie in (0, 1)");
        }
        if !(self.free_speed_percentile > 0.0 && self.free_speed_percentile <= 1.0) {
            return bad("free-speed percentile must lie in (0, 1]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DropEstimate {
    pub q_free_max_vph: f64,
    pub q_queue_vph: f64,
    /// `1 - q_queue / q_free_max`.
    pub delta: f64,
    /// Estimated free-flow speed, m/s.
    pub v_free: f64,
    pub windows: usize,
    pub stationary_windows: usize,
    pub free_windows: usize,
    pub queued_windows: usize,
}

#[derive(Debug, Clone, Copy)]
struct Window {
    flow_vph: f64,
    speed: f64,
}

fn mean_cv(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count() as f64;
    let mean = xs.clone().sum::<f64>() / n;
    let var = xs.map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let cv = if mean > 0.0 { var.sqrt() / mean } else { f64::INFINITY };
    (mean, cv)
}

/// Nearest-rank percentile of an unsorted sample.
fn percentile(xs: &[f64], p: f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((p * v.len() as f64).ceil() as usize).clamp(1, v.len());
    v[rank - 1]
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Estimates the pre-breakdown maximum flow, the queue discharge flow and
/// the drop ratio between them.
///
/// Records must be sorted by time. Every full window starting at a record is
/// a candidate; near-stationary windows become samples with their mean flow
/// and occupancy. The free-flow speed is a high percentile of sample speeds,
/// and samples slower than `queued_speed_ratio` of it form the queued regime.
pub fn estimate_capacity_drop(records: &[DetectorRecord], config: &EstimatorConfig) -> Result<DropEstimate> {
    config.validate()?;
    let recs: Vec<&DetectorRecord> = records
        .iter()
        .filter(|r| config.station_id.as_ref().is_none_or(|id| r.station_id == *id))
        .collect();
    for r in &recs {
        r.validate()?;
    }
    if recs.windows(2).any(|w| w[1].timestamp < w[0].timestamp) {
        return Err(Error::param("detector records must be sorted by timestamp"));
    }
    let no_data = || Error::Estimation { windows: 0, free: 0, queued: 0 };
    if recs.len() < 2 {
        return Err(no_data());
    }
    let gaps: Vec<f64> = recs
        .windows(2)
        .map(|w| w[1].timestamp - w[0].timestamp)
        .filter(|g| *g > 0.0)
        .collect();
    if gaps.is_empty() {
        return Err(no_data());
    }
    let spacing = median(&gaps);
    let last = recs[recs.len() - 1].timestamp;
    let g_m = config.g_ft * FEET_TO_METRES;

    let mut windows = 0;
    let mut samples = Vec::new();
    for (i, start) in recs.iter().enumerate() {
        let end = start.timestamp + config.window_s;
        // a window is full once the data reach its last sampling slot
        if last < end - spacing * (1.0 + 1e-9) {
            break;
        }
        let slice: Vec<&DetectorRecord> = recs[i..].iter().take_while(|r| r.timestamp < end).copied().collect();
        if slice.len() < 2 {
            continue;
        }
        windows += 1;
        let (flow, flow_cv) = mean_cv(slice.iter().map(|r| r.flow_vph));
        let (occ, occ_cv) = mean_cv(slice.iter().map(|r| r.occupancy));
        if flow_cv < config.cv_threshold && occ_cv < config.cv_threshold {
            let density = occ / g_m * config.lanes as f64;
            samples.push(Window {
                flow_vph: flow,
                speed: flow / 3600.0 / density,
            });
        }
    }

    let stationary = samples.len();
    if stationary == 0 {
        return Err(Error::Estimation { windows: 0, free: 0, queued: 0 });
    }
    let speeds: Vec<f64> = samples.iter().map(|w| w.speed).collect();
    let v_free = percentile(&speeds, config.free_speed_percentile);
    let cutoff = config.queued_speed_ratio * v_free;
    let (queued, free): (Vec<Window>, Vec<Window>) = samples.into_iter().partition(|w| w.speed < cutoff);
    if free.is_empty() || queued.is_empty() {
        return Err(Error::Estimation { windows: stationary, free: free.len(), queued: queued.len() });
    }
    let q_free_max = free.iter().map(|w| w.flow_vph).fold(0.0, f64::max);
    let q_queue = median(&queued.iter().map(|w| w.flow_vph).collect::<Vec<_>>());
    Ok(DropEstimate {
        q_free_max_vph: q_free_max,
        q_queue_vph: q_queue,
        delta: 1.0 - q_queue / q_free_max,
        v_free,
        windows,
        stationary_windows: stationary,
        free_windows: free.len(),
        queued_windows: queued.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(plateaus: &[(f64, f64, usize)]) -> Vec<DetectorRecord> {
        let mut t = 0.0;
        let mut out = Vec::new();
        for &(flow, occ, n) in plateaus {
            for _ in 0..n {
                out.push(DetectorRecord::new(t, "s1", StationRole::UpstreamMainline, flow, occ).unwrap());
                t += 30.0;
            }
        }
        out
    }

    #[test]
    fn synthetic_plateaus() {
        let recs = series(&[(9500.0, 0.09, 120), (8000.0, 0.25, 120)]);
        let est = estimate_capacity_drop(&recs, &EstimatorConfig::default()).unwrap();
        assert_eq!(est.q_free_max_vph, 9500.0);
        assert_eq!(est.q_queue_vph, 8000.0);
        assert_eq!(est.delta, 1.0 - 8000.0 / 9500.0);
    }

    #[test]
    fn free_flow_only_is_an_error() {
        let recs = series(&[(6000.0, 0.06, 100)]);
        let err = estimate_capacity_drop(&recs, &EstimatorConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Estimation { queued: 0, .. }));
    }

    #[test]
    fn noisy_windows_are_skipped() {
        let mut recs = series(&[(9000.0, 0.09, 60), (8000.0, 0.25, 60)]);
        for (i, r) in recs.iter_mut().enumerate() {
            if i % 2 == 0 {
                r.flow_vph *= 0.5;
            }
        }
        let err = estimate_capacity_drop(&recs, &EstimatorConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Estimation { windows: 0, .. }));
    }

    #[test]
    fn validation() {
        assert!(DetectorRecord::new(0.0, "s", StationRole::Onramp, -1.0, 0.1).is_err());
        assert!(DetectorRecord::new(0.0, "s", StationRole::Onramp, 1.0, 1.1).is_err());
        let mut recs = series(&[(9500.0, 0.09, 20), (8000.0, 0.25, 20)]);
        recs.swap(0, 5);
        assert!(estimate_capacity_drop(&recs, &EstimatorConfig::default()).is_err());
        let bad = EstimatorConfig { g_ft: 0.0, ..EstimatorConfig::default() };
        assert!(estimate_capacity_drop(&series(&[(1.0, 0.1, 20)]), &bad).is_err());
    }

    #[test]
    fn station_filter() {
        let mut recs = series(&[(9500.0, 0.09, 60), (8000.0, 0.25, 60)]);
        for r in recs.iter_mut().step_by(3) {
            r.station_id = "other".into();
        }
        let cfg = EstimatorConfig { station_id: Some("nobody".into()), ..EstimatorConfig::default() };
        assert!(estimate_capacity_drop(&recs, &cfg).is_err());
    }
}
