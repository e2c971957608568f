use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::lidar::{simulate_scan, LidarModel};
use super::world::SimWorld;
use crate::error::{Error, Result};
use crate::geometry::{RigidTransform, Vec3};
use crate::map::{LocalMap, MapConfig};
use crate::topo::{topo_search, TopoConfig, TopoPath};
use crate::traj::{minco_construct, plan_candidates, BoundaryState, PiecewiseTrajectory, TrajConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpisodeConfig {
    pub map: MapConfig,
    pub topo: TopoConfig,
    pub traj: TrajConfig,
    pub lidar: LidarModel,
    /// Vehicle sphere radius used for collision checks (m).
    pub vehicle_radius: f64,
    pub goal_tolerance: f64,
    /// Reference length handed to the optimizer; 0 picks one from the
    /// speed limit.
    pub horizon: f64,
    /// Target reference length per polynomial piece; 0 picks one from the
    /// speed limit.
    pub piece_length: f64,
    pub min_pieces: usize,
    pub max_pieces: usize,
    /// Target spacing of obstacle-penalty samples along the reference; the
    /// per-piece sample count is raised to meet it.
    pub penalty_spacing: f64,
    /// Delay between the sensing instant and the start of a new trajectory.
    pub replan_latency: f64,
    /// Collision checks per control tick.
    pub substeps: usize,
    /// Extra clearance over the vehicle radius required of a new
    /// trajectory against the map before it is committed.
    pub safety_margin: f64,
    /// Time budget as a multiple of the straight-line time at `v_lim`.
    pub duration_factor: f64,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self::for_speed(5.0)
    }
}

impl EpisodeConfig {
    pub fn for_speed(v_lim: f64) -> Self {
        Self {
            map: MapConfig {
                map_size: Vec3::new(30.0, 30.0, 10.0),
                ..MapConfig::default()
            },
            topo: TopoConfig {
                height_limits: Some([0.5, 7.5]),
                ..TopoConfig::default()
            },
            traj: TrajConfig {
                max_candidates: 4,
                ..TrajConfig::with_speed(v_lim)
            },
            lidar: LidarModel::default(),
            vehicle_radius: 0.2,
            goal_tolerance: 0.5,
            horizon: 0.0,
            piece_length: 0.0,
            min_pieces: 3,
            max_pieces: 12,
            penalty_spacing: 0.15,
            replan_latency: 0.01,
            substeps: 10,
            safety_margin: 0.02,
            duration_factor: 4.0,
        }
    }

    /// Horizon long enough to stop from cruise with room to spare.
    pub fn effective_horizon(&self) -> f64 {
        if self.horizon > 0.0 {
            return self.horizon;
        }
        let v = self.traj.v_d;
        (1.5 * v * v / (2.0 * self.traj.a_d) + 5.0).max(10.0)
    }

    pub fn effective_piece_length(&self) -> f64 {
        if self.piece_length > 0.0 {
            return self.piece_length;
        }
        (0.3 * self.traj.v_d).max(2.0)
    }

    pub fn validate(&self) -> Result<()> {
        self.map.validate()?;
        self.topo.validate()?;
        self.traj.validate()?;
        self.lidar.validate()?;
        if !(self.vehicle_radius > 0.0 && self.goal_tolerance > 0.0 && self.penalty_spacing > 0.0) {
            return Err(Error::InvalidConfig(
                "vehicle_radius, goal_tolerance and penalty_spacing must be positive".into(),
            ));
        }
        if self.substeps == 0 || self.min_pieces == 0 || self.max_pieces < self.min_pieces {
            return Err(Error::InvalidConfig("substeps and piece bounds must be consistent".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub t_map: f64,
    pub t_path: f64,
    pub t_traj: f64,
    pub t_total: f64,
    pub v_max: f64,
    pub l_traj: f64,
    #[serde(rename = "T_traj")]
    pub t_traj_duration: f64,
    pub success: bool,
    pub collision: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TickRecord {
    pub tick: u64,
    pub t: f64,
    pub position: Vec3,
    pub speed: f64,
    pub stage_ms_map: f64,
    pub stage_ms_path: f64,
    pub stage_ms_traj: f64,
    /// Smallest true obstacle clearance over the tick's substeps.
    pub min_clearance: f64,
    /// Number of reference paths found this tick.
    pub paths: usize,
    pub outcome: ReplanOutcome,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplanOutcome {
    Committed,
    KeptPrevious,
    Braking,
}

#[derive(Clone, Debug)]
pub struct EpisodeResult {
    pub metrics: RunMetrics,
    pub ticks: Vec<TickRecord>,
    pub goals_reached: usize,
    /// Last committed trajectory and its start time.
    pub trajectory: Option<(PiecewiseTrajectory, f64)>,
    /// References from the last tick that produced any.
    pub last_paths: Vec<TopoPath>,
}

impl EpisodeResult {
    /// Per-tick CSV log.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "tick,t,x,y,z,speed,stage_ms_map,stage_ms_path,stage_ms_traj")?;
        for r in &self.ticks {
            writeln!(
                out,
                "{},{:.3},{:.6},{:.6},{:.6},{:.6},{:.4},{:.4},{:.4}",
                r.tick, r.t, r.position.x, r.position.y, r.position.z, r.speed, r.stage_ms_map, r.stage_ms_path, r.stage_ms_traj
            )?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
struct Committed {
    traj: PiecewiseTrajectory,
    t0: f64,
}

impl Committed {
    fn state(&self, t: f64) -> BoundaryState {
        self.traj.state_at(t - self.t0)
    }
}

/// Smooth stop from `s`: one quintic piece to rest along the current
/// heading, with duration from the acceleration limit.
fn braking_trajectory(s: &BoundaryState, a_lim: f64) -> PiecewiseTrajectory {
    let speed = s.velocity.norm();
    let t = (1.5 * speed / a_lim).max(0.3);
    let end = BoundaryState::rest(s.position + s.velocity * (0.5 * t));
    minco_construct(&[], &[t], s, &end).expect("positive duration")
}

/// Keeps the remaining length to the goal equal across references: every
/// path is cut where the shortest one has `horizon` meters flown.
fn cut_references(paths: &[TopoPath], horizon: f64) -> Vec<TopoPath> {
    let Some(shortest) = paths.first() else {
        return Vec::new();
    };
    let cut = (shortest.length - horizon).max(0.0);
    paths.iter().map(|p| p.truncated(p.length - cut)).collect()
}

/// Map clearance at `p`, saturating at `cap`.
fn clearance(map: &LocalMap, p: &Vec3, cap: f64) -> f64 {
    map.store().nearest_within(p, cap).map_or(cap, |(_, d)| d)
}

/// Smallest map clearance along `traj` from time `from` on, saturating at
/// `cap`.
fn trajectory_clearance(map: &LocalMap, traj: &PiecewiseTrajectory, from: f64, cap: f64, dt: f64) -> f64 {
    let total = traj.total_duration();
    let mut worst = cap;
    let mut t = from.max(0.0);
    loop {
        let tt = t.min(total);
        worst = worst.min(clearance(map, &traj.position(tt), cap));
        if tt >= total {
            return worst;
        }
        t += dt;
    }
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

/// Flies from `start` through `goals` in order, replanning at the lidar
/// rate with ideal trajectory tracking.
pub fn run_episode(world: &SimWorld, start: Vec3, goals: &[Vec3], config: &EpisodeConfig) -> Result<EpisodeResult> {
    config.validate()?;
    let dt = 1.0 / config.lidar.rate;
    let v_lim = config.traj.v_lim;
    let mut route = 0.0;
    let mut prev = start;
    for g in goals {
        route += (g - prev).norm();
        prev = *g;
    }
    let duration_limit = config.duration_factor * route / v_lim;
    let horizon = config.effective_horizon();
    let piece_length = config.effective_piece_length();
    let safe_radius = config.vehicle_radius + config.safety_margin;
    let check_dt = (0.05 / v_lim).min(0.02);

    let mut map: Option<LocalMap> = None;
    let mut committed: Option<Committed> = None;
    let mut pos = start;
    let mut goal_idx = 0;
    let mut ticks = Vec::new();
    let mut last_paths = Vec::new();
    let (mut t_map, mut t_path, mut t_traj, mut t_total) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let (mut v_max, mut l_traj) = (0.0_f64, 0.0);
    let mut collision = false;
    let mut finish_time = None;

    let mut tick: u64 = 0;
    while goal_idx < goals.len() {
        let t = tick as f64 * dt;
        if t > duration_limit {
            break;
        }
        let pose = RigidTransform::from_translation(pos);
        let scan = simulate_scan(world, &pose, &config.lidar, tick);

        let stage = Instant::now();
        let local = match map.as_mut() {
            Some(m) => m,
            None => map.insert(LocalMap::new(config.map, pos)?),
        };
        local.ingest_scan(&scan, &pose, pos);
        let ms_map = ms(stage);

        let t_rep = t + config.replan_latency;
        let start_state = committed.as_ref().map_or(BoundaryState::rest(pos), |c| c.state(t_rep));
        let goal = goals[goal_idx];

        let stage_path = Instant::now();
        let paths = topo_search(local, &start_state.position, &goal, &config.topo).unwrap_or_default();
        let ms_path = ms(stage_path);

        let stage_traj = Instant::now();
        let mut traj_cfg = config.traj;
        let refs = if paths.is_empty() {
            traj_cfg.lambda_s *= 10.0;
            vec![TopoPath::straight(start_state.position, goal).truncated(horizon)]
        } else {
            cut_references(&paths, horizon)
        };
        let pieces = (refs[0].length / piece_length).round() as usize;
        traj_cfg.pieces = pieces.clamp(config.min_pieces, config.max_pieces);
        let per_piece = refs[0].length / traj_cfg.pieces as f64;
        let kappa = (per_piece / config.penalty_spacing).ceil() as usize;
        traj_cfg.kappa = kappa.clamp(config.traj.kappa, 64);
        let ends: Vec<BoundaryState> = refs.iter().map(|r| BoundaryState::rest(*r.nodes.last().expect("non-empty"))).collect();
        let planned = plan_candidates(local, &refs, &start_state, &ends, &traj_cfg).unwrap_or_default();
        let ms_traj = ms(stage_traj);
        if !paths.is_empty() {
            last_paths = paths;
        }

        // Starting inside the margin must not rule out every plan; the bar
        // is then the clearance we already have.
        let here = clearance(local, &start_state.position, safe_radius);
        let required = safe_radius.min(here - 1e-3);
        let floor = config.vehicle_radius;
        let previous = committed.clone();
        let scored: Vec<(f64, PiecewiseTrajectory)> = planned
            .into_iter()
            .map(|c| (trajectory_clearance(local, &c.trajectory, 0.0, safe_radius, check_dt), c.trajectory))
            .collect();
        let kept = committed
            .as_ref()
            .map_or(f64::NEG_INFINITY, |c| trajectory_clearance(local, &c.traj, t_rep - c.t0, safe_radius, check_dt));
        let moving = previous
            .as_ref()
            .is_some_and(|c| t_rep - c.t0 < c.traj.total_duration());
        let best_plan = scored.iter().max_by(|a, b| a.0.total_cmp(&b.0));
        let outcome = if let Some(i) = scored.iter().position(|(c, _)| *c >= required) {
            committed = Some(Committed {
                traj: scored[i].1.clone(),
                t0: t_rep,
            });
            ReplanOutcome::Committed
        } else if moving && kept >= required {
            ReplanOutcome::KeptPrevious
        } else if let Some((_, traj)) = best_plan.filter(|(c, _)| *c >= floor.min(here)) {
            // Inside the margin but clear of the vehicle radius: keep moving
            // so the map densifies instead of hovering on a sparse view.
            committed = Some(Committed {
                traj: traj.clone(),
                t0: t_rep,
            });
            ReplanOutcome::Committed
        } else if kept >= required {
            ReplanOutcome::KeptPrevious
        } else {
            // Nothing clears the bar: brake, unless a plan or the current
            // trajectory keeps more clearance than a straight stop.
            let brake = (start_state.velocity.norm() > 1e-6).then(|| braking_trajectory(&start_state, config.traj.a_lim));
            let brake_clear = brake
                .as_ref()
                .map_or(here, |b| trajectory_clearance(local, b, 0.0, safe_radius, check_dt));
            match best_plan {
                Some((c, traj)) if *c > brake_clear && *c >= kept => {
                    committed = Some(Committed {
                        traj: traj.clone(),
                        t0: t_rep,
                    });
                }
                _ if kept >= brake_clear => {}
                _ => {
                    if let Some(b) = brake {
                        committed = Some(Committed { traj: b, t0: t_rep });
                    }
                }
            }
            ReplanOutcome::Braking
        };
        let total_ms = ms(stage);
        t_map.push(ms_map);
        t_path.push(ms_path);
        t_traj.push(ms_traj);
        t_total.push(total_ms);

        // Execute one tick. The old trajectory still runs until t_rep; the
        // new one starts from its state there, so motion is continuous.
        let mut min_clear = f64::INFINITY;
        let mut speed = 0.0;
        for k in 1..=config.substeps {
            let tau = t + dt * k as f64 / config.substeps as f64;
            let active = if tau < t_rep { previous.as_ref() } else { committed.as_ref() };
            let state = active.map_or(BoundaryState::rest(pos), |c| c.state(tau));
            l_traj += (state.position - pos).norm();
            pos = state.position;
            speed = state.velocity.norm();
            v_max = v_max.max(speed);
            let clear = world.distance(&pos, tau);
            min_clear = min_clear.min(clear);
        }
        if min_clear < config.vehicle_radius {
            collision = true;
        }
        ticks.push(TickRecord {
            tick,
            t: t + dt,
            position: pos,
            speed,
            stage_ms_map: ms_map,
            stage_ms_path: ms_path,
            stage_ms_traj: ms_traj,
            min_clearance: min_clear,
            paths: last_paths.len(),
            outcome,
        });
        tick += 1;
        if collision {
            break;
        }
        while goal_idx < goals.len() && (pos - goals[goal_idx]).norm() < config.goal_tolerance {
            goal_idx += 1;
        }
        if goal_idx == goals.len() {
            finish_time = Some(t + dt);
        }
    }

    // The vehicle completes its committed stop at the goal; that stretch
    // counts toward the flown length.
    if let (Some(t_end), Some(c)) = (finish_time, committed.as_ref()) {
        let h = dt / config.substeps as f64;
        let stop = c.t0 + c.traj.total_duration();
        let mut tau = t_end;
        while tau < stop && !collision {
            tau = (tau + h).min(stop);
            let p = c.traj.position(tau - c.t0);
            l_traj += (p - pos).norm();
            pos = p;
            let clear = world.distance(&pos, tau);
            if let Some(last) = ticks.last_mut() {
                last.min_clearance = last.min_clearance.min(clear);
            }
            collision = clear < config.vehicle_radius;
        }
    }

    let success = finish_time.is_some() && !collision;
    let metrics = RunMetrics {
        t_map: mean(&t_map),
        t_path: mean(&t_path),
        t_traj: mean(&t_traj),
        t_total: mean(&t_total),
        v_max,
        l_traj,
        t_traj_duration: finish_time.unwrap_or(tick as f64 * dt),
        success,
        collision,
    };
    Ok(EpisodeResult {
        metrics,
        ticks,
        goals_reached: goal_idx,
        trajectory: committed.map(|c| (c.traj, c.t0)),
        last_paths,
    })
}
