//! Layered run configuration: built-in defaults, then a TOML file, then
//! command-line flags.

use std::path::{Path, PathBuf};

use fastnav::geometry::{Aabb, Vec3};
use fastnav::map::MapConfig;
use fastnav::sim::{EpisodeConfig, LidarModel, WorldSpec};
use fastnav::topo::TopoConfig;
use fastnav::traj::TrajConfig;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{CliError, Result};

/// Replanning-loop settings outside the module configs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpisodeParams {
    pub vehicle_radius: f64,
    pub goal_tolerance: f64,
    pub horizon: f64,
    pub piece_length: f64,
    pub min_pieces: usize,
    pub max_pieces: usize,
    pub penalty_spacing: f64,
    pub replan_latency: f64,
    pub substeps: usize,
    pub safety_margin: f64,
    pub duration_factor: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForestSettings {
    pub seeds: usize,
    pub seed_base: u64,
    pub speeds: Vec<f64>,
    pub start: Vec3,
    pub goal: Vec3,
    /// Speeds at or below this use `min_success_slow`.
    pub slow_speed: f64,
    pub min_success_slow: f64,
    pub min_success_fast: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MappingSettings {
    /// Directory of `*.xyz` scans plus `poses.txt`; a synthetic corridor
    /// flight is generated when unset.
    pub scans: Option<PathBuf>,
    pub resolutions: Vec<f64>,
    pub queries: usize,
    /// Frames in the synthetic corridor sequence.
    pub frames: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopoBench {
    pub goals: usize,
    pub distances: Vec<f64>,
    pub seed: u64,
    pub world: WorldSpec,
    pub min_mean_paths: f64,
    pub max_mean_t_path_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationSettings {
    pub seeds: usize,
    pub seed_base: u64,
    pub speed: f64,
    /// Required success-rate lead of adaptive over constant allocation.
    pub min_success_gap: f64,
    /// Largest allowed trapezoidal-to-adaptive mean `v_max` ratio.
    pub max_vmax_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemoSettings {
    pub seed: u64,
    pub speed: f64,
    /// Sampling step of the exported trajectory (s).
    pub dt: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CliConfig {
    pub map: MapConfig,
    pub topo: TopoConfig,
    pub traj: TrajConfig,
    pub lidar: LidarModel,
    pub episode: EpisodeParams,
    /// World used by the forest, ablation and demo commands; `seed` is
    /// replaced per episode.
    pub world: WorldSpec,
    pub forest: ForestSettings,
    pub mapping: MappingSettings,
    pub topo_bench: TopoBench,
    pub ablation: AblationSettings,
    pub demo: DemoSettings,
}

impl Default for CliConfig {
    fn default() -> Self {
        let e = EpisodeConfig::default();
        let mut topo_world = WorldSpec::forest(150, 100, 0);
        topo_world.extent = Aabb::new(Vec3::new(0.0, 0.0, 4.0), Vec3::new(25.0, 25.0, 4.0)).expect("valid extent");
        topo_world.keepout = vec![Vec3::new(0.0, 0.0, 1.5)];
        Self {
            map: e.map,
            topo: e.topo,
            traj: e.traj,
            lidar: e.lidar,
            episode: EpisodeParams {
                vehicle_radius: e.vehicle_radius,
                goal_tolerance: e.goal_tolerance,
                horizon: e.horizon,
                piece_length: e.piece_length,
                min_pieces: e.min_pieces,
                max_pieces: e.max_pieces,
                penalty_spacing: e.penalty_spacing,
                replan_latency: e.replan_latency,
                substeps: e.substeps,
                safety_margin: e.safety_margin,
                duration_factor: e.duration_factor,
            },
            world: WorldSpec::default(),
            forest: ForestSettings {
                seeds: 20,
                seed_base: 0,
                speeds: vec![5.0, 10.0, 15.0],
                start: Vec3::new(-27.0, 0.0, 1.0),
                goal: Vec3::new(27.0, 0.0, 1.0),
                slow_speed: 5.0,
                min_success_slow: 0.9,
                min_success_fast: 0.7,
            },
            mapping: MappingSettings {
                scans: None,
                resolutions: vec![0.1, 0.2],
                queries: 10_000,
                frames: 40,
                seed: 0,
            },
            topo_bench: TopoBench {
                goals: 20,
                distances: vec![7.5, 15.0],
                seed: 0,
                world: topo_world,
                min_mean_paths: 4.0,
                max_mean_t_path_ms: 50.0,
            },
            ablation: AblationSettings {
                seeds: 20,
                seed_base: 0,
                speed: 15.0,
                min_success_gap: 0.3,
                max_vmax_ratio: 0.75,
            },
            demo: DemoSettings {
                seed: 7,
                speed: 10.0,
                dt: 0.05,
            },
        }
    }
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::Config(format!("{name} must be positive, got {v}")))
    }
}

impl CliConfig {
    /// Parses TOML text over the defaults. Keys the defaults do not know
    /// are rejected.
    pub fn from_toml(text: &str) -> Result<Self> {
        let file: Value = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        let mut tree = serde_json::to_value(Self::default()).map_err(|e| CliError::Config(e.to_string()))?;
        merge(&mut tree, file);
        serde_json::from_value(tree).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                Self::from_toml(&text)
            }
        }
    }

    /// Episode settings flying at `speed`, which becomes both the speed
    /// limit and the cruise speed.
    pub fn episode_config(&self, speed: f64) -> EpisodeConfig {
        let e = &self.episode;
        let mut traj = self.traj;
        traj.v_lim = speed;
        traj.v_d = speed;
        EpisodeConfig {
            map: self.map,
            topo: self.topo,
            traj,
            lidar: self.lidar,
            vehicle_radius: e.vehicle_radius,
            goal_tolerance: e.goal_tolerance,
            horizon: e.horizon,
            piece_length: e.piece_length,
            min_pieces: e.min_pieces,
            max_pieces: e.max_pieces,
            penalty_spacing: e.penalty_spacing,
            replan_latency: e.replan_latency,
            substeps: e.substeps,
            safety_margin: e.safety_margin,
            duration_factor: e.duration_factor,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let f = &self.forest;
        if f.speeds.is_empty() || f.seeds == 0 {
            return Err(CliError::Config("forest needs at least one seed and one speed".into()));
        }
        let mut speeds = f.speeds.clone();
        speeds.extend([self.ablation.speed, self.demo.speed]);
        for &v in &speeds {
            positive("speed", v)?;
            self.episode_config(v).validate()?;
        }
        let m = &self.mapping;
        if m.resolutions.is_empty() {
            return Err(CliError::Config("mapping.resolutions is empty".into()));
        }
        for &r in &m.resolutions {
            positive("resolution", r)?;
            self.map.with_resolution(r).validate()?;
        }
        if m.queries == 0 {
            return Err(CliError::Config("mapping.queries must be at least 1".into()));
        }
        if m.scans.is_none() && m.frames == 0 {
            return Err(CliError::Config("synthetic mapping sequence needs at least one frame".into()));
        }
        let t = &self.topo_bench;
        if t.goals == 0 || t.distances.is_empty() {
            return Err(CliError::Config("topo_bench needs goals and distances".into()));
        }
        for &d in &t.distances {
            positive("topo distance", d)?;
        }
        if self.ablation.seeds == 0 {
            return Err(CliError::Config("ablation.seeds must be at least 1".into()));
        }
        positive("demo.dt", self.demo.dt)?;
        Ok(())
    }
}
