use fastnav::sim::{generate_world, run_episode, SimWorld, WorldSpec};
use serde_json::{json, Value};

use super::Outcome;
use crate::config::CliConfig;
use crate::error::Result;
use crate::output::OutputDir;

fn vec_json(p: &fastnav::geometry::Vec3) -> Value {
    json!([p.x, p.y, p.z])
}

/// One seeded forest episode with every artifact needed to plot it.
pub fn demo(cfg: &CliConfig, out: &mut OutputDir) -> Result<Outcome> {
    let d = &cfg.demo;
    let f = &cfg.forest;
    let world: SimWorld = generate_world(&WorldSpec { seed: d.seed, ..cfg.world.clone() });
    let result = run_episode(&world, f.start, &[f.goal], &cfg.episode_config(d.speed))?;

    let mut world_doc = serde_json::to_value(&world)?;
    if let Value::Object(m) = &mut world_doc {
        m.remove("schema_version");
    }
    out.write_json("world.json", world_doc)?;
    out.write_with("episode.csv", |w| result.write_csv(w))?;
    out.write_with("trajectory.csv", |w| match &result.trajectory {
        Some((traj, _)) => traj.write_csv(w, d.dt),
        None => writeln!(w, "t,x,y,z,vx,vy,vz,ax,ay,az"),
    })?;
    let paths: Vec<Value> = result
        .last_paths
        .iter()
        .map(|p| json!({ "length": p.length, "nodes": p.nodes.iter().map(vec_json).collect::<Vec<_>>() }))
        .collect();
    let executed: Vec<Value> = result.ticks.iter().map(|t| vec_json(&t.position)).collect();
    out.write_json(
        "paths.json",
        json!({
            "start": vec_json(&f.start),
            "goal": vec_json(&f.goal),
            "trajectory_start_time": result.trajectory.as_ref().map(|t| t.1),
            "paths": paths,
            "executed": executed,
        }),
    )?;
    out.write_json("metrics.json", json!({ "command": "demo", "seed": d.seed, "speed": d.speed, "metrics": result.metrics }))?;
    let m = &result.metrics;
    println!(
        "seed {} speed {} success {} collision {} v_max {:.2} l_traj {:.2} T_traj {:.2}",
        d.seed, d.speed, m.success, m.collision, m.v_max, m.l_traj, m.t_traj_duration
    );
    Ok(Outcome { passed: true })
}
