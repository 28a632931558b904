//! Runs one experiment and writes its artifacts.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use capdrop::analysis::{
    classify_ring_stationary, estimate_capacity_drop, observable_fd, open_road_statics, ring_mfd, DetectorRecord, Ring,
};
use capdrop::riemann::solve_riemann_standard;
use capdrop::sim::detector::virtual_detector;
use capdrop::sim::{run, step_count, RecordSpec, SimulationRecord};
use capdrop::{FundamentalDiagram, Riemann64};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{ExperimentConfig, ExperimentKind};

/// One-number result of a run, used for sweep indexes.
#[derive(Debug, Clone, Serialize)]
pub struct Headline {
    pub name: &'static str,
    pub value: f64,
    pub converged: Option<bool>,
}

pub fn run_experiment(config: &ExperimentConfig, out: &Path) -> Result<Headline> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_json(&out.join("config.json"), config)?;
    match config.kind {
        ExperimentKind::Riemann => riemann(config, out),
        ExperimentKind::Mfd => mfd(config, out),
        ExperimentKind::EstimateDrop => estimate(config, out),
        ExperimentKind::Statics => {
            let q = statics(config, out)?;
            if config.duration() > 0.0 {
                simulate(config, out, Some(q))
            } else {
                Ok(Headline { name: "q", value: q, converged: None })
            }
        }
        _ => simulate(config, out, None),
    }
}

fn riemann(config: &ExperimentConfig, out: &Path) -> Result<Headline> {
    let r = &config.riemann;
    let up = r.fd.diagram(r.lanes_up)?;
    let down = r.fd.diagram(r.lanes_down)?;
    let sol: Riemann64 = capdrop::riemann::solve_riemann_densities(r.k_up, r.k_down, &up, &down, r.c_star)?;
    let standard = solve_riemann_standard(up.state_from_density(r.k_up)?, down.state_from_density(r.k_down)?, &up, &down)?;
    let doc = json!({
        "solution": sol,
        "standard": standard,
        "k_up_stationary": up.density_from_state(sol.up_stationary)?,
        "k_down_stationary": down.density_from_state(sol.down_stationary)?,
        "drop_active": sol.flux < standard.flux,
        "config": config,
    });
    write_json(&out.join("riemann.json"), &doc)?;
    println!("flux {} veh/s (min rule {})", sol.flux, standard.flux);
    Ok(Headline { name: "flux", value: sol.flux, converged: None })
}

fn mfd(config: &ExperimentConfig, out: &Path) -> Result<Headline> {
    let g = &config.ring;
    let ring = Ring::new(g.fd.diagram(g.lanes_1)?, g.fd.diagram(g.lanes_2)?, g.l1, g.length, g.c_star)?;
    let mfd = ring_mfd(&ring, config.mfd.samples)?;
    let mut w = csv::Writer::from_path(out.join("mfd.csv"))?;
    w.write_record(["branch", "k_veh_per_m", "q_veh_per_s"])?;
    for (label, k, q) in mfd.rows() {
        w.write_record([label.to_string(), k.to_string(), q.to_string()])?;
    }
    w.flush()?;
    let (k_lo, k_hi) = ring.plateau()?;
    let doc = json!({
        "branches": mfd.branches.iter().map(|b| json!({
            "branch": b.label,
            "breakpoints": b.breakpoints,
            "open": b.open,
        })).collect::<Vec<_>>(),
        "plateau": { "k_from": k_lo, "k_to": k_hi, "q": ring.c_star() },
        "config": config,
    });
    write_json(&out.join("mfd.json"), &doc)?;
    println!("plateau q = {} veh/s on k in [{k_lo}, {k_hi}] veh/m", ring.c_star());
    Ok(Headline { name: "plateau_flow", value: ring.c_star(), converged: None })
}

/// Writes the analytic statics and returns the stationary flow.
fn statics(config: &ExperimentConfig, out: &Path) -> Result<f64> {
    let ld = &config.lane_drop;
    let (up, down) = (ld.upstream_fd()?, ld.downstream_fd()?);
    let s = &config.statics;
    let sol = open_road_statics(s.d0, s.s0, &up, &down, ld.c_star)?;
    write_json(&out.join("statics.json"), &json!({ "solution": sol, "config": config }))?;
    if s.grid >= 2 {
        let axis = |hi: f64| (0..s.grid).map(|i| hi * i as f64 / (s.grid - 1) as f64).collect::<Vec<_>>();
        let obs = observable_fd(&up, &down, ld.c_star, &axis(up.capacity()), &axis(down.capacity()))?;
        let mut w = csv::Writer::from_path(out.join("observable_fd.csv"))?;
        w.write_record(["side", "k_veh_per_m", "q_veh_per_s"])?;
        for (side, pts) in [("upstream", &obs.upstream), ("downstream", &obs.downstream)] {
            for (k, q) in pts {
                w.write_record([side.to_string(), k.to_string(), q.to_string()])?;
            }
        }
        w.flush()?;
    }
    println!("statics: {:?}, q = {} veh/s", sol.case, sol.q);
    Ok(sol.q)
}

fn estimate(config: &ExperimentConfig, out: &Path) -> Result<Headline> {
    let input = config.input.as_ref().context("estimate-drop needs an input CSV")?;
    let records = read_detector_csv(input)?;
    let est = estimate_capacity_drop(&records, &config.estimator)?;
    write_json(&out.join("estimate.json"), &json!({ "estimate": est, "records": records.len(), "config": config }))?;
    println!(
        "q_free_max {:.1} vph, q_queue {:.1} vph, drop {:.4}",
        est.q_free_max_vph, est.q_queue_vph, est.delta
    );
    Ok(Headline { name: "delta", value: est.delta, converged: None })
}

pub fn read_detector_csv(path: &Path) -> Result<Vec<DetectorRecord>> {
    let mut rdr = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize().enumerate() {
        let r: DetectorRecord = row.with_context(|| format!("{} row {}", path.display(), i + 2))?;
        r.validate().with_context(|| format!("{} row {}", path.display(), i + 2))?;
        out.push(r);
    }
    Ok(out)
}

fn simulate(config: &ExperimentConfig, out: &Path, expected: Option<f64>) -> Result<Headline> {
    let scenario = config.scenario()?;
    let corridor = &scenario.corridor;
    let duration = config.duration();
    let steps = step_count(duration, corridor.dt());
    let spec = RecordSpec {
        snapshot_every: Some(config.run.snapshot_every.unwrap_or((steps / 200).max(1))),
        tagged: scenario.tagged.clone(),
        averaging_fraction: config.run.averaging_fraction,
        convergence_tol: config.run.convergence_tol,
        convergence_steps: config.run.convergence_steps,
    };
    let rec = run(corridor, scenario.initial, duration, &spec)?;

    write_density(&out.join("density.csv"), corridor.dx(), &rec)?;
    write_flux(&out.join("flux.csv"), &rec)?;
    let mut detectors = Vec::new();
    for det in &config.run.detectors {
        detectors.extend(virtual_detector(corridor, &rec, det)?);
    }
    if !config.run.detectors.is_empty() {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_path(out.join("detectors.csv"))?;
        w.write_record(["timestamp", "station_id", "role", "flow_vph", "occupancy"])?;
        for r in &detectors {
            w.serialize(r)?;
        }
        w.flush()?;
    }

    let average_flow = rec.average_flow();
    let tagged: serde_json::Map<String, Value> = rec
        .tagged
        .keys()
        .map(|&i| (i.to_string(), json!(rec.tagged_average(i))))
        .collect();
    let classification = (corridor.is_ring() && rec.converged())
        .then(|| classify_ring_stationary(corridor, &rec.final_state.densities))
        .flatten();
    let n = rec.vehicles.len() - 1;
    let summary = json!({
        "kind": config.kind,
        "duration_s": rec.final_state.time,
        "steps": rec.steps(),
        "average_flow_veh_per_s": average_flow,
        "averaging_fraction": rec.averaging_fraction,
        "tagged_average_flux": tagged,
        "converged": rec.converged(),
        "converged_at_s": rec.converged_at,
        "ring_family": classification,
        "expected_flow_veh_per_s": expected,
        "vehicles": {
            "initial": rec.vehicles[0],
            "final": rec.vehicles[n],
            "max_relative_drift": if corridor.is_ring() { Some(rec.vehicle_drift()) } else { None },
            "balance_residual": rec.balance_residual(),
            "cumulative_balance_residual": rec.cumulative_balance_residual(),
        },
        "detector_records": detectors.len(),
        "config": config,
    });
    write_json(&out.join("summary.json"), &summary)?;
    println!(
        "average flow {average_flow} veh/s over the last {}% of {} s; converged: {}",
        rec.averaging_fraction * 100.0,
        rec.final_state.time,
        rec.converged()
    );
    Ok(Headline { name: "average_flow", value: average_flow, converged: Some(rec.converged()) })
}

fn write_density(path: &Path, dx: f64, rec: &SimulationRecord) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "t_s,cell,x_m,k_veh_per_m")?;
    for (t, field) in rec.snapshot_times.iter().zip(&rec.snapshots) {
        for (i, k) in field.iter().enumerate() {
            writeln!(w, "{t},{i},{},{k}", (i as f64 + 0.5) * dx)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn write_flux(path: &Path, rec: &SimulationRecord) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "t_s,mean_flux_veh_per_s,inflow_veh_per_s,outflow_veh_per_s,vehicles")?;
    for i in rec.tagged.keys() {
        write!(w, ",q_{i}")?;
    }
    writeln!(w)?;
    for j in 0..rec.steps() {
        write!(
            w,
            "{},{},{},{},{}",
            rec.step_times[j], rec.mean_flux[j], rec.inflow[j], rec.outflow[j], rec.vehicles[j + 1]
        )?;
        for s in rec.tagged.values() {
            write!(w, ",{}", s.flux[j])?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// Runs every member in its own subdirectory and writes `index.csv`.
pub fn run_sweep(configs: Vec<(f64, ExperimentConfig)>, parameter: &str, out: &Path) -> Result<()> {
    use rayon::prelude::*;
    fs::create_dir_all(out)?;
    let width = configs.len().saturating_sub(1).to_string().len();
    let results: Vec<(f64, String, Result<Headline>)> = configs
        .par_iter()
        .enumerate()
        .map(|(i, (value, config))| {
            let dir = format!("run_{i:0width$}");
            let res = run_experiment(config, &out.join(&dir));
            (*value, dir, res)
        })
        .collect();
    let mut w = csv::Writer::from_path(out.join("index.csv"))?;
    w.write_record(["run", parameter, "dir", "result_name", "result", "converged", "error"])?;
    let mut failed = 0;
    for (i, (value, dir, res)) in results.into_iter().enumerate() {
        let row = match res {
            Ok(h) => [
                i.to_string(),
                value.to_string(),
                dir,
                h.name.to_string(),
                h.value.to_string(),
                h.converged.map_or(String::new(), |c| c.to_string()),
                String::new(),
            ],
            Err(e) => {
                failed += 1;
                [i.to_string(), value.to_string(), dir, String::new(), String::new(), String::new(), format!("{e:#}")]
            }
        };
        w.write_record(&row)?;
    }
    w.flush()?;
    if failed > 0 {
        bail!("{failed} sweep member(s) failed; see index.csv");
    }
    Ok(())
}
