//! Command-line front end for the fastnav planner: forest, mapping and
//! topology benchmarks, the time-allocation ablation and a plotting demo.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fastnav::sim::WorldSpec;

pub use config::CliConfig;
pub use error::{CliError, Result};
use output::OutputDir;

#[derive(Debug, Parser)]
#[command(name = "fastnav", version, about = "Benchmarks and demos for the fastnav planner")]
pub struct Cli {
    /// TOML config; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Root of the `<command>/<timestamp>/` output tree.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum WorldKind {
    Forest,
    Empty,
}

#[derive(Debug, Default, Args)]
pub struct WorldArg {
    /// Replace the configured world with an empty one.
    #[arg(long, value_enum)]
    pub world: Option<WorldKind>,
}

impl WorldArg {
    fn apply(&self, spec: &mut WorldSpec) {
        if self.world == Some(WorldKind::Empty) {
            spec.n_columns = 0;
            spec.n_rings = 0;
            spec.n_movers = 0;
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Seeded forest flights at several speed limits.
    BenchForest {
        #[arg(long)]
        seeds: Option<usize>,
        #[arg(long)]
        seed_base: Option<u64>,
        #[arg(long, value_delimiter = ',')]
        speeds: Option<Vec<f64>>,
        #[command(flatten)]
        world: WorldArg,
    },
    /// Map update and distance-query latency over a scan sequence.
    BenchMap {
        /// Directory of `*.xyz` scans plus `poses.txt`.
        #[arg(long)]
        scans: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        resolutions: Option<Vec<f64>>,
        #[arg(long)]
        queries: Option<usize>,
        /// Frames of the synthetic corridor when no scans are given.
        #[arg(long)]
        frames: Option<usize>,
    },
    /// Path count and search latency toward random goals.
    BenchTopo {
        #[arg(long)]
        goals: Option<usize>,
        #[arg(long, value_delimiter = ',')]
        distances: Option<Vec<f64>>,
        /// Angle samples per visual plane.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        world: WorldArg,
    },
    /// Adaptive, constant and trapezoidal time allocation on matched seeds.
    AblateTimeAlloc {
        #[arg(long)]
        seeds: Option<usize>,
        #[arg(long)]
        seed_base: Option<u64>,
        #[arg(long)]
        speed: Option<f64>,
        #[command(flatten)]
        world: WorldArg,
    },
    /// One seeded episode with world, log, trajectory and path files.
    Demo {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        speed: Option<f64>,
        /// Trajectory export step (s).
        #[arg(long)]
        dt: Option<f64>,
        #[command(flatten)]
        world: WorldArg,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::BenchForest { .. } => "bench-forest",
            Command::BenchMap { .. } => "bench-map",
            Command::BenchTopo { .. } => "bench-topo",
            Command::AblateTimeAlloc { .. } => "ablate-time-alloc",
            Command::Demo { .. } => "demo",
        }
    }

    /// Writes the flags that were given into `cfg`.
    pub fn apply(&self, cfg: &mut CliConfig) {
        fn set<T: Clone>(slot: &mut T, v: &Option<T>) {
            if let Some(v) = v {
                *slot = v.clone();
            }
        }
        match self {
            Command::BenchForest { seeds, seed_base, speeds, world } => {
                set(&mut cfg.forest.seeds, seeds);
                set(&mut cfg.forest.seed_base, seed_base);
                set(&mut cfg.forest.speeds, speeds);
                world.apply(&mut cfg.world);
            }
            Command::BenchMap { scans, resolutions, queries, frames } => {
                if scans.is_some() {
                    cfg.mapping.scans = scans.clone();
                }
                set(&mut cfg.mapping.resolutions, resolutions);
                set(&mut cfg.mapping.queries, queries);
                set(&mut cfg.mapping.frames, frames);
            }
            Command::BenchTopo { goals, distances, k, seed, world } => {
                set(&mut cfg.topo_bench.goals, goals);
                set(&mut cfg.topo_bench.distances, distances);
                set(&mut cfg.topo.angle_samples, k);
                set(&mut cfg.topo_bench.seed, seed);
                world.apply(&mut cfg.topo_bench.world);
            }
            Command::AblateTimeAlloc { seeds, seed_base, speed, world } => {
                set(&mut cfg.ablation.seeds, seeds);
                set(&mut cfg.ablation.seed_base, seed_base);
                set(&mut cfg.ablation.speed, speed);
                world.apply(&mut cfg.world);
            }
            Command::Demo { seed, speed, dt, world } => {
                set(&mut cfg.demo.seed, seed);
                set(&mut cfg.demo.speed, speed);
                set(&mut cfg.demo.dt, dt);
                world.apply(&mut cfg.world);
            }
        }
    }
}

/// Outcome of a completed invocation.
#[derive(Clone, Debug)]
pub struct Report {
    pub passed: bool,
    pub dir: PathBuf,
    pub files: Vec<String>,
}

impl Report {
    pub fn exit_code(&self) -> i32 {
        if self.passed {
            0
        } else {
            1
        }
    }
}

/// Resolves the config, validates it and runs the command. Nothing is
/// written unless validation and input loading succeed.
pub fn execute(cli: &Cli) -> Result<Report> {
    let mut cfg = CliConfig::load(cli.config.as_deref())?;
    cli.command.apply(&mut cfg);
    cfg.validate()?;
    let name = cli.command.name();
    let frames = match cli.command {
        Command::BenchMap { .. } => Some(commands::prepare_map(&cfg)?),
        _ => None,
    };
    let mut out = OutputDir::create(&cli.out, name, &cfg)?;
    let outcome = match &cli.command {
        Command::BenchForest { .. } => commands::bench_forest(&cfg, &mut out)?,
        Command::BenchMap { .. } => commands::bench_map(&cfg, frames.as_deref().unwrap_or_default(), &mut out)?,
        Command::BenchTopo { .. } => commands::bench_topo(&cfg, &mut out)?,
        Command::AblateTimeAlloc { .. } => commands::ablate_time_alloc(&cfg, &mut out)?,
        Command::Demo { .. } => commands::demo(&cfg, &mut out)?,
    };
    Ok(Report {
        passed: outcome.passed,
        dir: out.path().to_path_buf(),
        files: out.files().to_vec(),
    })
}

/// Runs and maps the result to a process exit status.
pub fn run(cli: &Cli) -> i32 {
    match execute(cli) {
        Ok(r) => {
            println!("wrote {}", r.dir.display());
            r.exit_code()
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
