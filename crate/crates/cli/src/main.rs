//! `curbside`: validate scenarios, simulate agents, render frames.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use curbside::compositing::{self, CompositingError, RenderParams};
use curbside::crowd::CrowdError;
use curbside::geometry::{reconstruct_plane, GeometryError};
use curbside::raster::SvrRaster;
use curbside::scene::{self, SceneDescription, SceneError};
use curbside::sim::{self, SimConfig, SimError, Simulation, World};
use curbside::trace::{Trace, TraceError};

const EXIT_VALIDATION: u8 = 1;
const EXIT_IO: u8 = 2;
const EXIT_INTERNAL: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "curbside", version, about = "Animate a still street scene with simulated pedestrians and cars")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load a scenario and report every invariant check.
    Validate { scenario: PathBuf },
    /// Run the crowd and traffic simulation and write `traces.csv`.
    Simulate {
        scenario: PathBuf,
        #[command(flatten)]
        sim: SimArgs,
        /// Write per-pedestrian potential, cost, discomfort and speed grids.
        #[arg(long)]
        dump_fields: bool,
        /// Ticks between field dumps.
        #[arg(long, default_value_t = 10, requires = "dump_fields")]
        dump_every: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Composite a trace over the scenario background into PPM frames.
    Render {
        scenario: PathBuf,
        traces: PathBuf,
        #[command(flatten)]
        render: RenderArgs,
        /// Render at least this many seconds, even past the last trace row.
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long, default_value_t = 0.1)]
        dt: f64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Simulate, then render.
    Run {
        scenario: PathBuf,
        #[command(flatten)]
        sim: SimArgs,
        #[command(flatten)]
        render: RenderArgs,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
struct SimArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Simulated seconds.
    #[arg(long, default_value_t = 30.0)]
    duration: f64,
    #[arg(long, default_value_t = 0.1)]
    dt: f64,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    /// BEV cell size in meters.
    #[arg(long)]
    cell_size: Option<f64>,
    /// Pedestrian arrivals per second.
    #[arg(long)]
    spawn_rate: Option<f64>,
    #[arg(long)]
    max_pedestrians: Option<usize>,
    /// Car arrivals per lane per second.
    #[arg(long)]
    car_spawn_rate: Option<f64>,
    /// Car speed limit in m/s.
    #[arg(long)]
    car_v_max: Option<f64>,
}

impl SimArgs {
    fn config(&self) -> SimConfig {
        let mut cfg = SimConfig { duration_s: self.duration, seed: self.seed, ..Default::default() };
        cfg.crowd.dt = self.dt;
        if let Some(v) = self.alpha {
            cfg.crowd.alpha = v;
        }
        if let Some(v) = self.beta {
            cfg.crowd.beta = v;
        }
        if let Some(v) = self.gamma {
            cfg.crowd.gamma = v;
        }
        if let Some(v) = self.cell_size {
            cfg.bev.cell_size = v;
            cfg.crowd.arrival_eps = cfg.crowd.arrival_eps.max(v);
        }
        if let Some(v) = self.spawn_rate {
            cfg.crowd.spawn_rate = v;
        }
        if let Some(v) = self.max_pedestrians {
            cfg.crowd.max_pedestrians = v;
        }
        if let Some(v) = self.car_spawn_rate {
            cfg.traffic.spawn_rate = v;
        }
        if let Some(v) = self.car_v_max {
            cfg.traffic.v_max = v;
        }
        cfg
    }
}

#[derive(Debug, Args)]
struct RenderArgs {
    /// Render every n-th tick.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    ticks_per_frame: u64,
    /// Shadow matte blur in pixels; defaults depend on the lighting mode.
    #[arg(long)]
    blur_sigma: Option<f64>,
}

impl RenderArgs {
    fn params(&self) -> RenderParams {
        RenderParams { ticks_per_frame: self.ticks_per_frame, blur_sigma: self.blur_sigma, ..Default::default() }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Ok(n) = std::env::var("CURBSIDE_THREADS") {
        match n.parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    eprintln!("error: cannot size thread pool: {e}");
                    return ExitCode::from(EXIT_INTERNAL);
                }
            }
            _ => {
                eprintln!("error: CURBSIDE_THREADS must be a positive integer, got {n:?}");
                return ExitCode::from(EXIT_VALIDATION);
            }
        }
    }
    // clap would exit with 2, which is reserved for I/O failures
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_VALIDATION } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(command: Command) -> Result<u8> {
    match command {
        Command::Validate { scenario } => Ok(cmd_validate(&scenario)),
        Command::Simulate { scenario, sim, dump_fields, dump_every, out } => {
            let scene = load(&scenario)?;
            let dump = dump_fields.then_some(dump_every.max(1));
            let (trace, _) = cmd_simulate(&scene, &sim.config(), dump, &out)?;
            println!("wrote {} rows to {}", trace.rows.len(), out.join("traces.csv").display());
            Ok(0)
        }
        Command::Render { scenario, traces, render, duration, dt, out } => {
            let scene = load(&scenario)?;
            let trace = Trace::read_file(&traces).with_context(|| format!("reading {}", traces.display()))?;
            let min_ticks = duration.map(|d| (d / dt).round().max(0.0) as u64).unwrap_or(0);
            let ticks = trace.tick_count().max(min_ticks);
            let n = cmd_render(&scene, &trace, ticks, &render.params(), &out)?;
            println!("wrote {n} frames to {}", out.join("frames").display());
            Ok(0)
        }
        Command::Run { scenario, sim, render, out } => {
            let scene = load(&scenario)?;
            let cfg = sim.config();
            let (trace, ticks) = cmd_simulate(&scene, &cfg, None, &out)?;
            let n = cmd_render(&scene, &trace, ticks, &render.params(), &out)?;
            println!("wrote {} rows and {n} frames to {}", trace.rows.len(), out.display());
            Ok(0)
        }
    }
}

fn load(path: &Path) -> Result<SceneDescription> {
    scene::load_scene(path).with_context(|| format!("loading scenario {}", path.display()))
}

/// Prints one line per check. Unreadable files count as a failed check.
fn cmd_validate(path: &Path) -> u8 {
    let scene = match scene::load_scene_unvalidated(path) {
        Ok(s) => s,
        Err(e) => {
            println!("FAIL load: {e}");
            return EXIT_VALIDATION;
        }
    };
    println!("PASS load");
    let mut ok = true;
    let mut report = |name: &str, outcome: Result<(), String>| match outcome {
        Ok(()) => println!("PASS {name}"),
        Err(m) => {
            ok = false;
            println!("FAIL {name}: {m}");
        }
    };
    let checks = scene.checks();
    let structural = checks.iter().all(|c| c.outcome.is_ok());
    for c in checks {
        report(&c.name, c.outcome);
    }
    if structural {
        let plane = reconstruct_plane(&scene, scene::DEFAULT_MAX_GROUND_TILT);
        report("ground plane", plane.map(|_| ()).map_err(|e| e.to_string()));
    }
    if ok {
        0
    } else {
        EXIT_VALIDATION
    }
}

fn cmd_simulate(
    scene: &SceneDescription,
    cfg: &SimConfig,
    dump_every: Option<u64>,
    out: &Path,
) -> Result<(Trace, u64)> {
    cfg.validate()?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let world = World::from_scene(scene, cfg)?;
    info!("world: {:?} scene, {} walkable cells", world.class, world.bev.walkable.count());
    let fields_dir = out.join("fields");
    if dump_every.is_some() {
        std::fs::create_dir_all(&fields_dir).with_context(|| format!("creating {}", fields_dir.display()))?;
    }
    let trace = sim::simulate_world_with(world, cfg, |s: &Simulation| -> Result<()> {
        match dump_every {
            Some(n) if s.tick.is_multiple_of(n) => dump_fields(s, &fields_dir),
            _ => Ok(()),
        }
    })?;
    let csv = out.join("traces.csv");
    trace.write_file(&csv).with_context(|| format!("writing {}", csv.display()))?;
    Ok((trace, cfg.ticks()))
}

fn dump_fields(s: &Simulation, dir: &Path) -> Result<()> {
    for (id, f) in s.pedestrian_fields()? {
        let named = [("phi", &f.phi), ("cost", &f.cost), ("discomfort", &f.discomfort), ("speed", &f.speed)];
        for (name, field) in named {
            let path = dir.join(format!("tick_{:06}_ped_{id}_{name}.svr", s.tick));
            let r = field.values.map(|&v| v as f32);
            SvrRaster::from_f32(&r).write(&path).with_context(|| format!("writing {}", path.display()))?;
        }
    }
    Ok(())
}

fn cmd_render(scene: &SceneDescription, trace: &Trace, ticks: u64, params: &RenderParams, out: &Path) -> Result<usize> {
    let dir = out.join("frames");
    Ok(compositing::write_frames(scene, trace, ticks, params, &dir)?)
}

/// Maps the first recognized error in the chain to an exit code.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<std::io::Error>() {
            return EXIT_IO;
        }
        if let Some(e) = cause.downcast_ref::<SceneError>() {
            return if e.is_io() { EXIT_IO } else { EXIT_VALIDATION };
        }
        if let Some(e) = cause.downcast_ref::<TraceError>() {
            return match e {
                TraceError::Io(_) => EXIT_IO,
                _ => EXIT_VALIDATION,
            };
        }
        if let Some(e) = cause.downcast_ref::<CompositingError>() {
            return match e {
                CompositingError::Io(_) => EXIT_IO,
                CompositingError::Raster(_) => EXIT_IO,
                CompositingError::TraceGap { .. } | CompositingError::UnknownLane(..) => EXIT_VALIDATION,
                CompositingError::Geometry(_) | CompositingError::ProxyTooTall { .. } => EXIT_VALIDATION,
            };
        }
        if let Some(e) = cause.downcast_ref::<SimError>() {
            return match e {
                SimError::Config(_) | SimError::Geometry(_) | SimError::Crowd(CrowdError::InvalidParams(_)) => {
                    EXIT_VALIDATION
                }
                _ => EXIT_INTERNAL,
            };
        }
        if cause.is::<GeometryError>() {
            return EXIT_VALIDATION;
        }
    }
    EXIT_INTERNAL
}
