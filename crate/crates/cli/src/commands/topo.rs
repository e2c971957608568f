use std::f64::consts::TAU;
use std::time::Instant;

use fastnav::geometry::Vec3;
use fastnav::map::{voxel_filter, LocalMap, MapConfig};
use fastnav::sim::{generate_world, SimWorld, WorldSpec};
use fastnav::topo::{check_visibility, topo_search, TopoConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use super::Outcome;
use crate::config::CliConfig;
use crate::error::Result;
use crate::output::{mean, OutputDir, Timing};

#[derive(Clone, Debug, Serialize)]
pub struct TopoRow {
    pub distance: f64,
    pub goals: usize,
    pub mean_paths: f64,
    /// Search latency (ms).
    pub t_path: Timing,
    /// Every emitted segment passed a fresh line-of-sight check.
    pub all_visible: bool,
    pub path_counts: Vec<usize>,
}

/// The world's surfaces loaded into one map covering the whole extent.
pub fn prior_map(world: &SimWorld, map: &MapConfig) -> Result<LocalMap> {
    let ext = world.extent;
    let config = MapConfig {
        map_size: ext.size() + Vec3::repeat(2.0),
        ..*map
    };
    let mut m = LocalMap::new(config, ext.center)?;
    let r = config.filter_resolution;
    m.insert_points(&voxel_filter(&world.surface_points(r * 0.5), r));
    Ok(m)
}

/// Goals at `distance` from `start` in random horizontal directions, kept
/// inside the extent and clear of obstacles.
fn goals(world: &SimWorld, start: &Vec3, distance: f64, n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec3> {
    let mut out = Vec::with_capacity(n);
    let mut tries = 0;
    while out.len() < n && tries < 100_000 {
        tries += 1;
        let a = rng.random_range(0.0..TAU);
        let g = start + Vec3::new(distance * a.cos(), distance * a.sin(), 0.0);
        if world.extent.contains(&g) && world.distance(&g, 0.0) > 0.6 {
            out.push(g);
        }
    }
    out
}

pub fn run_rows(world: &SimWorld, map: &LocalMap, topo: &TopoConfig, distances: &[f64], n_goals: usize, seed: u64) -> Result<Vec<TopoRow>> {
    let start = world_start(world);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    for &d in distances {
        let gs = goals(world, &start, d, n_goals, &mut rng);
        let mut times = Vec::new();
        let mut counts = Vec::new();
        let mut all_visible = true;
        for g in &gs {
            let t = Instant::now();
            let paths = topo_search(map, &start, g, topo)?;
            times.push(t.elapsed().as_secs_f64() * 1e3);
            counts.push(paths.len());
            all_visible &= paths.iter().all(|p| {
                p.nodes
                    .windows(2)
                    .all(|w| check_visibility(map, &w[0], &w[1], topo.visibility_step).is_visible())
            });
        }
        rows.push(TopoRow {
            distance: d,
            goals: gs.len(),
            mean_paths: mean(counts.iter().map(|&c| c as f64)),
            t_path: Timing::of(&times),
            all_visible,
            path_counts: counts,
        });
    }
    Ok(rows)
}

pub fn world_start(world: &SimWorld) -> Vec3 {
    Vec3::new(world.extent.center.x, world.extent.center.y, 1.5)
}

pub fn bench_topo(cfg: &CliConfig, out: &mut OutputDir) -> Result<Outcome> {
    let t = &cfg.topo_bench;
    let world = generate_world(&WorldSpec { seed: t.seed, ..t.world.clone() });
    let map = prior_map(&world, &cfg.map)?;
    let rows = run_rows(&world, &map, &cfg.topo, &t.distances, t.goals, t.seed)?;
    let far = t.distances.iter().cloned().fold(f64::MIN, f64::max);
    let thresholds_apply = !world.is_empty();
    let mut passed = true;
    println!("{:>8} {:>6} {:>8} {:>10} {:>10} {:>8}", "dist", "goals", "N_p", "t_path", "t_p95", "visible");
    for r in &rows {
        println!(
            "{:>8.1} {:>6} {:>8.2} {:>10.3} {:>10.3} {:>8}",
            r.distance, r.goals, r.mean_paths, r.t_path.mean, r.t_path.p95, r.all_visible
        );
        passed &= r.all_visible;
        if thresholds_apply && r.distance == far {
            passed &= r.mean_paths >= t.min_mean_paths && r.t_path.mean < t.max_mean_t_path_ms;
        }
    }
    out.write_json(
        "topo_bench.json",
        json!({ "command": "bench-topo", "map_points": map.len(), "rows": rows, "pass": passed }),
    )?;
    Ok(Outcome { passed })
}
