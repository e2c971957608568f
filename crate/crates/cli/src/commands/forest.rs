use std::io::Write;

use fastnav::sim::{generate_world, run_episode, EpisodeResult, RunMetrics, WorldSpec};
use fastnav::traj::TimeInit;
use serde::Serialize;
use serde_json::json;

use super::Outcome;
use crate::config::CliConfig;
use crate::error::Result;
use crate::output::{mean, OutputDir, Timing};

#[derive(Clone, Debug, Serialize)]
pub struct SeedRun {
    pub seed: u64,
    #[serde(flatten)]
    pub metrics: RunMetrics,
    pub ticks: usize,
}

/// Aggregate over the episodes of one speed group.
#[derive(Clone, Debug, Serialize)]
pub struct GroupSummary {
    pub speed: f64,
    pub runs: usize,
    pub success_rate: f64,
    pub collisions: usize,
    pub collisions_among_successes: usize,
    pub v_max_mean: f64,
    /// Over successful runs only.
    pub l_traj_mean: f64,
    #[serde(rename = "T_traj_mean")]
    pub t_traj_duration_mean: f64,
    /// Per-tick stage latencies (ms).
    pub t_map: Timing,
    pub t_path: Timing,
    pub t_traj: Timing,
    pub t_planner: Timing,
    pub t_total: Timing,
}

impl GroupSummary {
    fn new(speed: f64, results: &[EpisodeResult]) -> Self {
        let n = results.len().max(1) as f64;
        let ok: Vec<&RunMetrics> = results.iter().map(|r| &r.metrics).filter(|m| m.success).collect();
        let ticks = || results.iter().flat_map(|r| r.ticks.iter());
        let stage = |f: fn(&fastnav::sim::TickRecord) -> f64| Timing::of(&ticks().map(f).collect::<Vec<_>>());
        Self {
            speed,
            runs: results.len(),
            success_rate: ok.len() as f64 / n,
            collisions: results.iter().filter(|r| r.metrics.collision).count(),
            collisions_among_successes: ok.iter().filter(|m| m.collision).count(),
            v_max_mean: mean(results.iter().map(|r| r.metrics.v_max)),
            l_traj_mean: mean(ok.iter().map(|m| m.l_traj)),
            t_traj_duration_mean: mean(ok.iter().map(|m| m.t_traj_duration)),
            t_map: stage(|t| t.stage_ms_map),
            t_path: stage(|t| t.stage_ms_path),
            t_traj: stage(|t| t.stage_ms_traj),
            t_planner: stage(|t| t.stage_ms_path + t.stage_ms_traj),
            t_total: stage(|t| t.stage_ms_map + t.stage_ms_path + t.stage_ms_traj),
        }
    }
}

/// Runs `seeds` consecutive seeds of `world` at `speed`.
pub fn run_group(cfg: &CliConfig, world: &WorldSpec, speed: f64) -> Result<(Vec<SeedRun>, GroupSummary)> {
    let episode = cfg.episode_config(speed);
    let f = &cfg.forest;
    let mut results = Vec::with_capacity(f.seeds);
    let mut runs = Vec::with_capacity(f.seeds);
    for i in 0..f.seeds as u64 {
        let seed = f.seed_base + i;
        let w = generate_world(&WorldSpec { seed, ..world.clone() });
        let r = run_episode(&w, f.start, &[f.goal], &episode)?;
        runs.push(SeedRun {
            seed,
            metrics: r.metrics,
            ticks: r.ticks.len(),
        });
        results.push(r);
    }
    Ok((runs, GroupSummary::new(speed, &results)))
}

fn write_runs_csv(out: &mut dyn Write, rows: &[(String, &SeedRun)]) -> std::io::Result<()> {
    writeln!(out, "group,seed,success,collision,v_max,l_traj,T_traj,t_map,t_path,t_traj,t_total,ticks")?;
    for (group, r) in rows {
        let m = &r.metrics;
        writeln!(
            out,
            "{group},{},{},{},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{}",
            r.seed, m.success, m.collision, m.v_max, m.l_traj, m.t_traj_duration, m.t_map, m.t_path, m.t_traj, m.t_total, r.ticks
        )?;
    }
    Ok(())
}

fn table_header() -> String {
    format!(
        "{:>10} {:>6} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>6}",
        "group", "eta%", "v_max", "l_traj", "T_traj", "t_map", "t_path", "t_traj", "t_total", "coll"
    )
}

fn table_row(label: &str, s: &GroupSummary) -> String {
    format!(
        "{:>10} {:>6.0} {:>8.2} {:>8.2} {:>8.2} {:>8.2} {:>8.2} {:>8.2} {:>8.2} {:>6}",
        label,
        100.0 * s.success_rate,
        s.v_max_mean,
        s.l_traj_mean,
        s.t_traj_duration_mean,
        s.t_map.mean,
        s.t_path.mean,
        s.t_traj.mean,
        s.t_total.mean,
        s.collisions
    )
}

pub fn bench_forest(cfg: &CliConfig, out: &mut OutputDir) -> Result<Outcome> {
    let f = &cfg.forest;
    let mut groups = Vec::new();
    let mut all = Vec::new();
    for &speed in &f.speeds {
        let (runs, summary) = run_group(cfg, &cfg.world, speed)?;
        let need = if speed <= f.slow_speed { f.min_success_slow } else { f.min_success_fast };
        let pass = summary.success_rate >= need && summary.collisions_among_successes == 0;
        groups.push((summary, runs, need, pass));
    }
    println!("{}", table_header());
    for (s, runs, _, _) in &groups {
        println!("{}", table_row(&format!("{} m/s", s.speed), s));
        all.extend(runs.iter().map(|r| (format!("{}", s.speed), r)));
    }
    let passed = groups.iter().all(|g| g.3);
    out.write_with("runs.csv", |w| write_runs_csv(w, &all))?;
    let body: Vec<_> = groups
        .iter()
        .map(|(s, runs, need, pass)| json!({ "summary": s, "runs": runs, "min_success": need, "pass": pass }))
        .collect();
    out.write_json("metrics.json", json!({ "command": "bench-forest", "groups": body, "pass": passed }))?;
    Ok(Outcome { passed })
}

pub fn ablate_time_alloc(cfg: &CliConfig, out: &mut OutputDir) -> Result<Outcome> {
    let a = &cfg.ablation;
    let mut c = cfg.clone();
    c.forest.seeds = a.seeds;
    c.forest.seed_base = a.seed_base;
    let mut rows = Vec::new();
    for init in [TimeInit::Adaptive, TimeInit::Constant, TimeInit::Trapezoidal] {
        c.traj.time_init = init;
        let (runs, summary) = run_group(&c, &cfg.world, a.speed)?;
        rows.push((init, summary, runs));
    }
    let (ada, con, tra) = (&rows[0].1, &rows[1].1, &rows[2].1);
    let gap = ada.success_rate - con.success_rate;
    let ratio = if ada.v_max_mean > 0.0 { tra.v_max_mean / ada.v_max_mean } else { f64::INFINITY };
    let gap_ok = gap >= a.min_success_gap;
    let ratio_ok = ratio <= a.max_vmax_ratio;

    println!("{}", table_header());
    for (init, s, _) in &rows {
        println!("{}", table_row(&format!("{init:?}").to_lowercase(), s));
    }
    println!(
        "success gap (adaptive - constant) {:.2} [{}], v_max ratio (trapezoidal / adaptive) {:.3} [{}]",
        gap,
        if gap_ok { "pass" } else { "FAIL" },
        ratio,
        if ratio_ok { "pass" } else { "FAIL" }
    );

    let all: Vec<(String, &SeedRun)> = rows
        .iter()
        .flat_map(|(init, _, runs)| runs.iter().map(move |r| (format!("{init:?}").to_lowercase(), r)))
        .collect();
    out.write_with("runs.csv", |w| write_runs_csv(w, &all))?;
    let body: Vec<_> = rows
        .iter()
        .map(|(init, s, runs)| json!({ "initializer": init, "summary": s, "runs": runs }))
        .collect();
    out.write_json(
        "metrics.json",
        json!({
            "command": "ablate-time-alloc",
            "rows": body,
            "success_gap": gap,
            "v_max_ratio": ratio,
            "pass": gap_ok && ratio_ok,
        }),
    )?;
    Ok(Outcome {
        passed: gap_ok && ratio_ok,
    })
}
