use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::Value;

use capdrop_cli::config::{from_value, parse_number, parse_override, parse_value, preset, set_path, ConfigError, ExperimentConfig, ExperimentKind, PRESETS};

/// Kinematic-wave traffic experiments with a capacity-drop junction.
///
/// Every subcommand reads an experiment config (JSON), either from
/// `--config`, a built-in preset, or defaults, then applies flag and
/// `--set path=value` overrides. Numbers may be fractions such as 81/49.
#[derive(Parser)]
#[command(name = "capdrop", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config file (JSON).
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override a config field, e.g. `--set ring.c_star=81/49`. Repeatable.
    #[arg(long = "set", value_name = "PATH=VALUE")]
    set: Vec<String>,
    /// Output directory.
    #[arg(long, short, env = "CAPDROP_OUT_DIR")]
    out: Option<PathBuf>,
    /// Validate and print the effective config without running.
    #[arg(long)]
    dry_run: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the Riemann problem at a capacity-drop interface.
    #[command(allow_negative_numbers = true)]
    Riemann {
        #[command(flatten)]
        common: Common,
        /// Upstream density, veh/m.
        #[arg(long, alias = "k1")]
        k_up: Option<String>,
        /// Downstream density, veh/m.
        #[arg(long, alias = "k2")]
        k_down: Option<String>,
        /// Dropped capacity, veh/s.
        #[arg(long)]
        c_star: Option<String>,
        #[arg(long)]
        lanes_up: Option<u32>,
        #[arg(long)]
        lanes_down: Option<u32>,
    },
    /// Run a corridor simulation (ring-bistability, perturbed-riemann,
    /// statics, merge-corridor or a custom config).
    #[command(allow_negative_numbers = true)]
    Simulate {
        /// Built-in preset name.
        preset: Option<String>,
        #[command(flatten)]
        common: Common,
        /// Ring perturbation amplitude, veh/m.
        #[arg(long)]
        epsilon: Option<String>,
        /// Simulated time, s.
        #[arg(long)]
        duration: Option<String>,
        /// Cell length, m.
        #[arg(long)]
        dx: Option<String>,
        /// Time step, s.
        #[arg(long)]
        dt: Option<String>,
    },
    /// Tabulate the ring-road macroscopic fundamental diagram.
    #[command(allow_negative_numbers = true)]
    Mfd {
        #[command(flatten)]
        common: Common,
        /// Points per branch.
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        c_star: Option<String>,
    },
    /// Stationary states of the open lane drop, checked by simulation.
    #[command(allow_negative_numbers = true)]
    Statics {
        #[command(flatten)]
        common: Common,
        /// Boundary demand, veh/s.
        #[arg(long)]
        d0: Option<String>,
        /// Boundary supply, veh/s.
        #[arg(long)]
        s0: Option<String>,
        #[arg(long)]
        c_star: Option<String>,
        /// Simulated time, s; 0 skips the simulation check.
        #[arg(long)]
        duration: Option<String>,
        /// Grid size per axis for the observable diagram.
        #[arg(long)]
        grid: Option<usize>,
    },
    /// Estimate the capacity drop from a detector CSV
    /// (timestamp,station_id,role,flow_vph,occupancy).
    #[command(allow_negative_numbers = true)]
    EstimateDrop {
        #[command(flatten)]
        common: Common,
        #[arg(long, short)]
        input: Option<PathBuf>,
        /// Restrict to one station.
        #[arg(long)]
        station: Option<String>,
        /// g-factor, feet.
        #[arg(long)]
        g_ft: Option<String>,
        /// Lanes at the station.
        #[arg(long)]
        lanes: Option<u32>,
        /// Window length, s.
        #[arg(long)]
        window_s: Option<String>,
    },
    /// Run one experiment per value of a parameter, in parallel.
    #[command(allow_negative_numbers = true)]
    Sweep {
        /// Built-in preset name.
        preset: Option<String>,
        #[command(flatten)]
        common: Common,
        /// Dotted config path to vary, e.g. `epsilon`.
        #[arg(long)]
        param: Option<String>,
        #[arg(long)]
        from: Option<String>,
        #[arg(long)]
        to: Option<String>,
        #[arg(long)]
        count: Option<usize>,
    },
    /// List the built-in presets.
    Presets,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ConfigError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

type Flags = Vec<(String, Value)>;

fn num(flags: &mut Flags, path: impl Into<String>, raw: &Option<String>) -> Result<()> {
    let path = path.into();
    if let Some(raw) = raw {
        let x = parse_number(raw).ok_or_else(|| anyhow!("`{raw}` is not a number (for {path})"))?;
        flags.push((path, Value::from(x)));
    }
    Ok(())
}

fn int(flags: &mut Flags, path: &str, raw: Option<impl Into<Value>>) {
    if let Some(v) = raw {
        flags.push((path.to_string(), v.into()));
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Presets => {
            for name in PRESETS {
                println!("{name}");
            }
            Ok(())
        }
        Command::Riemann { common, k_up, k_down, c_star, lanes_up, lanes_down } => {
            let mut f = Flags::new();
            num(&mut f, "riemann.k_up", &k_up)?;
            num(&mut f, "riemann.k_down", &k_down)?;
            num(&mut f, "riemann.c_star", &c_star)?;
            int(&mut f, "riemann.lanes_up", lanes_up);
            int(&mut f, "riemann.lanes_down", lanes_down);
            single(&common, Some("riemann"), |_| Ok(f), &[ExperimentKind::Riemann])
        }
        Command::Simulate { preset, common, epsilon, duration, dx, dt } => {
            let flags = |kind: &str| -> Result<Flags> {
                let section = match kind {
                    "ring-bistability" => "ring",
                    "custom-corridor" => "corridor",
                    _ => "lane_drop",
                };
                let mut f = Flags::new();
                num(&mut f, "epsilon", &epsilon)?;
                num(&mut f, "run.duration", &duration)?;
                num(&mut f, format!("{section}.dx"), &dx)?;
                num(&mut f, format!("{section}.dt"), &dt)?;
                Ok(f)
            };
            let allowed = [
                ExperimentKind::RingBistability,
                ExperimentKind::PerturbedRiemann,
                ExperimentKind::Statics,
                ExperimentKind::CustomCorridor,
            ];
            if preset.is_none() && common.config.is_none() {
                bail!("simulate needs a preset ({}) or --config", PRESETS.join(", "));
            }
            single(&common, preset.as_deref(), flags, &allowed)
        }
        Command::Mfd { common, samples, c_star } => {
            let mut f = Flags::new();
            int(&mut f, "mfd.samples", samples);
            num(&mut f, "ring.c_star", &c_star)?;
            single(&common, Some("mfd"), |_| Ok(f), &[ExperimentKind::Mfd])
        }
        Command::Statics { common, d0, s0, c_star, duration, grid } => {
            let mut f = Flags::new();
            num(&mut f, "statics.d0", &d0)?;
            num(&mut f, "statics.s0", &s0)?;
            num(&mut f, "lane_drop.c_star", &c_star)?;
            num(&mut f, "run.duration", &duration)?;
            int(&mut f, "statics.grid", grid);
            single(&common, Some("statics"), |_| Ok(f), &[ExperimentKind::Statics])
        }
        Command::EstimateDrop { common, input, station, g_ft, lanes, window_s } => {
            let mut f = Flags::new();
            if let Some(p) = input {
                f.push(("input".into(), Value::from(p.display().to_string())));
            }
            if let Some(s) = station {
                f.push(("estimator.station_id".into(), Value::from(s)));
            }
            num(&mut f, "estimator.g_ft", &g_ft)?;
            int(&mut f, "estimator.lanes", lanes);
            num(&mut f, "estimator.window_s", &window_s)?;
            single(&common, None, |_| Ok(f), &[ExperimentKind::EstimateDrop])
        }
        Command::Sweep { preset, common, param, from, to, count } => {
            let mut f = Flags::new();
            if let Some(p) = param {
                f.push(("sweep.parameter".into(), Value::from(p)));
            }
            num(&mut f, "sweep.from", &from)?;
            num(&mut f, "sweep.to", &to)?;
            int(&mut f, "sweep.count", count);
            sweep(&common, preset.as_deref(), f)
        }
    }
}

/// Loads the base config tree and applies flags, then `--set` overrides.
fn load(common: &Common, preset_name: Option<&str>, flags: impl FnOnce(&str) -> Result<Flags>) -> Result<Value> {
    let mut value = match (&common.config, preset_name) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            parse_value(&text)?
        }
        (None, Some(name)) => {
            let text = preset(name).ok_or_else(|| anyhow!("unknown preset `{name}`; try one of {}", PRESETS.join(", ")))?;
            parse_value(text)?
        }
        (None, None) => serde_json::json!({ "kind": "estimate-drop" }),
    };
    let kind = value.get("kind").and_then(Value::as_str).unwrap_or_default().to_string();
    for (path, v) in flags(&kind)? {
        set_path(&mut value, &path, v)?;
    }
    for text in &common.set {
        let (path, v) = parse_override(text)?;
        set_path(&mut value, &path, v)?;
    }
    Ok(value)
}

fn output_dir(common: &Common, config: &ExperimentConfig) -> PathBuf {
    common
        .out
        .clone()
        .or_else(|| config.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from("out").join(config.kind.name()))
}

fn check_kind(config: &ExperimentConfig, allowed: &[ExperimentKind]) -> Result<()> {
    if !allowed.contains(&config.kind) {
        let names: Vec<&str> = allowed.iter().map(|k| k.name()).collect();
        bail!("config kind `{}` cannot run here (expected {})", config.kind.name(), names.join(" or "));
    }
    Ok(())
}

fn single(
    common: &Common,
    preset_name: Option<&str>,
    flags: impl FnOnce(&str) -> Result<Flags>,
    allowed: &[ExperimentKind],
) -> Result<()> {
    let value = load(common, preset_name, flags)?;
    let config = from_value(value)?;
    check_kind(&config, allowed)?;
    if common.dry_run {
        println!("{}", serde_json::to_string_pretty(&config)?);
        return Ok(());
    }
    let out = output_dir(common, &config);
    capdrop_cli::run::run_experiment(&config, &out)?;
    println!("wrote {}", out.display());
    Ok(())
}

fn sweep(common: &Common, preset_name: Option<&str>, flags: Flags) -> Result<()> {
    if preset_name.is_none() && common.config.is_none() {
        bail!("sweep needs a preset ({}) or --config", PRESETS.join(", "));
    }
    let value = load(common, preset_name, |_| Ok(flags))?;
    let config = from_value(value.clone())?;
    let spec = config
        .sweep
        .clone()
        .context("no sweep given; set --param, --from, --to and --count or a sweep block")?;
    let mut members = Vec::new();
    for x in spec.values() {
        let mut v = value.clone();
        if let Some(map) = v.as_object_mut() {
            map.remove("sweep");
        }
        set_path(&mut v, &spec.parameter, Value::from(x))?;
        let member = from_value(v).with_context(|| format!("sweep member {} = {x}", spec.parameter))?;
        members.push((x, member));
    }
    if common.dry_run {
        println!("{}", serde_json::to_string_pretty(&config)?);
        return Ok(());
    }
    let out = output_dir(common, &config);
    std::fs::create_dir_all(&out)?;
    capdrop_cli::run::write_json(&out.join("sweep.json"), &config)?;
    capdrop_cli::run::run_sweep(members, &spec.parameter, &out)?;
    println!("wrote {} runs to {}", spec.count, out.display());
    Ok(())
}
