use std::time::Instant;

use fastnav::geometry::{Aabb, RigidTransform, Vec3};
use fastnav::io::{load_xyz, ScanSequence};
use fastnav::map::LocalMap;
use fastnav::sim::{generate_world, simulate_scan, Column, SimWorld, WorldSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use super::Outcome;
use crate::config::CliConfig;
use crate::error::{CliError, Result};
use crate::output::{OutputDir, Timing};

/// One frame: world-frame points plus the sensor pose.
pub type Frame = (Vec<Vec3>, RigidTransform);

#[derive(Clone, Debug, Serialize)]
pub struct MapReport {
    pub resolution: f64,
    pub frames: usize,
    /// Per-scan update latency (ms).
    pub t_update: Timing,
    /// Per-query distance latency (µs).
    pub query_us: Timing,
    pub peak_points: usize,
    pub final_points: usize,
}

/// Two walls of pillars with clutter between them, flown straight down
/// the middle at 1 m per frame.
pub fn synthetic_corridor(frames: usize, seed: u64, cfg: &CliConfig) -> Vec<Frame> {
    let length = frames as f64 + 20.0;
    let mut world: SimWorld = generate_world(&WorldSpec {
        extent: Aabb::new(Vec3::new(length / 2.0 - 5.0, 0.0, 2.0), Vec3::new(length / 2.0, 2.0, 2.0)).expect("valid extent"),
        n_columns: frames / 2,
        n_rings: frames / 4,
        n_movers: 0,
        seed,
        keepout: (0..frames).map(|i| Vec3::new(i as f64, 0.0, 1.0)).collect(),
        keepout_radius: 0.8,
        ..WorldSpec::default()
    });
    let mut x = -10.0;
    while x <= length {
        for y in [-3.0, 3.0] {
            world.columns.push(Column {
                center_xy: [x, y],
                radius: 0.3,
                height: 5.0,
                base_z: -1.0,
            });
        }
        x += 0.6;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..frames)
        .map(|i| {
            let yaw = rng.random_range(-0.1..0.1);
            let pose = RigidTransform::from_euler(yaw, 0.0, 0.0, Vec3::new(i as f64, 0.0, 1.0));
            (simulate_scan(&world, &pose, &cfg.lidar, i as u64), pose)
        })
        .collect()
}

/// Reads a scan directory; points are stored in the sensor frame.
pub fn load_sequence(seq: &ScanSequence) -> Result<Vec<Frame>> {
    seq.frames
        .iter()
        .map(|(path, pose)| {
            let local = load_xyz(path)?;
            Ok((local.iter().map(|p| pose.transform_point(p)).collect(), *pose))
        })
        .collect()
}

pub fn replay(frames: &[Frame], cfg: &CliConfig, resolution: f64) -> Result<MapReport> {
    let first = frames.first().ok_or_else(|| CliError::Input("no scans".into()))?;
    let mut map = LocalMap::new(cfg.map.with_resolution(resolution), *first.1.translation())?;
    let mut updates = Vec::with_capacity(frames.len());
    let mut peak = 0;
    for (points, pose) in frames {
        let t = Instant::now();
        map.ingest_scan(points, pose, *pose.translation());
        updates.push(t.elapsed().as_secs_f64() * 1e3);
        peak = peak.max(map.len());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.mapping.seed);
    let (lo, hi) = (map.bounds().min(), map.bounds().max());
    let mut queries = Vec::with_capacity(cfg.mapping.queries);
    if !map.is_empty() {
        for _ in 0..cfg.mapping.queries {
            let x = Vec3::new(rng.random_range(lo.x..hi.x), rng.random_range(lo.y..hi.y), rng.random_range(lo.z..hi.z));
            let t = Instant::now();
            std::hint::black_box(map.resdf(&x)?);
            queries.push(t.elapsed().as_secs_f64() * 1e6);
        }
    }
    Ok(MapReport {
        resolution,
        frames: frames.len(),
        t_update: Timing::of(&updates),
        query_us: Timing::of(&queries),
        peak_points: peak,
        final_points: map.len(),
    })
}

/// Loads or generates the frames; fails before any output is written.
pub fn prepare(cfg: &CliConfig) -> Result<Vec<Frame>> {
    match &cfg.mapping.scans {
        Some(dir) => {
            let seq = ScanSequence::open(dir).map_err(|e| CliError::Input(format!("{}: {e}", dir.display())))?;
            load_sequence(&seq)
        }
        None => Ok(synthetic_corridor(cfg.mapping.frames, cfg.mapping.seed, cfg)),
    }
}

pub fn bench_map(cfg: &CliConfig, frames: &[Frame], out: &mut OutputDir) -> Result<Outcome> {
    let mut reports = Vec::new();
    println!(
        "{:>6} {:>7} {:>12} {:>12} {:>12} {:>12} {:>10}",
        "res", "frames", "t_update", "t_upd_p95", "query_us", "query_p95", "peak_pts"
    );
    for &r in &cfg.mapping.resolutions {
        let rep = replay(frames, cfg, r)?;
        println!(
            "{:>6.2} {:>7} {:>12.3} {:>12.3} {:>12.3} {:>12.3} {:>10}",
            rep.resolution, rep.frames, rep.t_update.mean, rep.t_update.p95, rep.query_us.mean, rep.query_us.p95, rep.peak_points
        );
        reports.push(rep);
    }
    let source = match &cfg.mapping.scans {
        Some(d) => json!({ "scans": d }),
        None => json!({ "synthetic_corridor_frames": cfg.mapping.frames }),
    };
    out.write_json("map_bench.json", json!({ "command": "bench-map", "source": source, "reports": reports }))?;
    Ok(Outcome { passed: true })
}
