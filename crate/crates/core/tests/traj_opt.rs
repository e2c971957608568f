use fastnav::geometry::Vec3;
use fastnav::map::{LocalMap, MapConfig};
use fastnav::topo::TopoPath;
use fastnav::traj::{
    allocate_time, cost_and_gradient, minco_construct, optimize, plan, select_best, BoundaryState, TrajConfig,
};
use fastnav::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn map_with(points: &[Vec3]) -> LocalMap {
    let cfg = MapConfig {
        map_size: Vec3::new(40.0, 40.0, 10.0),
        ..MapConfig::default()
    };
    let mut m = LocalMap::new(cfg, Vec3::new(5.0, 0.0, 0.0)).unwrap();
    m.insert_points(points);
    m
}

fn rand_vec(rng: &mut ChaCha8Rng, s: f64) -> Vec3 {
    Vec3::new(rng.random_range(-s..s), rng.random_range(-s..s), rng.random_range(-s..s))
}

struct Instance {
    q: Vec<Vec3>,
    t: Vec<f64>,
    start: BoundaryState,
    end: BoundaryState,
    map: LocalMap,
    config: TrajConfig,
}

fn random_instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = rng.random_range(2..6);
    let length = 10.0;
    let q: Vec<Vec3> = (1..m)
        .map(|i| Vec3::new(length * i as f64 / m as f64, 0.0, 1.0) + rand_vec(&mut rng, 0.3))
        .collect();
    let t: Vec<f64> = (0..m).map(|_| rng.random_range(0.6..1.6)).collect();
    let start = BoundaryState::new(Vec3::new(0.0, 0.0, 1.0), rand_vec(&mut rng, 2.0), rand_vec(&mut rng, 1.0));
    let end = BoundaryState::rest(Vec3::new(length, 0.0, 1.0));
    // Points scattered around the straight line so some samples fall inside d_s.
    let density = [0usize, 20, 80, 300][(seed % 4) as usize];
    let pts: Vec<Vec3> = (0..density)
        .map(|_| {
            Vec3::new(
                rng.random_range(0.0..length),
                rng.random_range(-0.6..0.6),
                1.0 + rng.random_range(-0.6..0.6),
            )
        })
        .collect();
    let config = TrajConfig {
        pieces: m,
        v_lim: 3.0,
        v_d: 3.0,
        a_lim: 3.0,
        a_d: 2.0,
        ..TrajConfig::default()
    };
    Instance {
        q,
        t,
        start,
        end,
        map: map_with(&pts),
        config,
    }
}

fn cost_of(inst: &Instance, q: &[Vec3], t: &[f64]) -> f64 {
    cost_and_gradient(q, t, &inst.map, &inst.start, &inst.end, &inst.config).unwrap().cost
}

/// Returns (analytic, central-difference) gradients flattened as [q..., T...].
fn gradients(inst: &Instance) -> (Vec<f64>, Vec<f64>) {
    let eval = cost_and_gradient(&inst.q, &inst.t, &inst.map, &inst.start, &inst.end, &inst.config).unwrap();
    let mut analytic: Vec<f64> = eval.grad_q.iter().flat_map(|g| [g.x, g.y, g.z]).collect();
    analytic.extend(&eval.grad_t);
    let h = 1e-6;
    let mut fd = Vec::new();
    for i in 0..inst.q.len() {
        for c in 0..3 {
            let (mut qp, mut qm) = (inst.q.clone(), inst.q.clone());
            qp[i][c] += h;
            qm[i][c] -= h;
            fd.push((cost_of(inst, &qp, &inst.t) - cost_of(inst, &qm, &inst.t)) / (2.0 * h));
        }
    }
    for j in 0..inst.t.len() {
        let (mut tp, mut tm) = (inst.t.clone(), inst.t.clone());
        tp[j] += h;
        tm[j] -= h;
        fd.push((cost_of(inst, &inst.q, &tp) - cost_of(inst, &inst.q, &tm)) / (2.0 * h));
    }
    (analytic, fd)
}

#[test]
fn minco_joint_and_boundary_residuals() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let q: Vec<Vec3> = (0..3).map(|_| rand_vec(&mut rng, 5.0)).collect();
        let t: Vec<f64> = (0..4).map(|_| rng.random_range(0.3..2.0)).collect();
        let start = BoundaryState::new(rand_vec(&mut rng, 5.0), rand_vec(&mut rng, 2.0), rand_vec(&mut rng, 2.0));
        let end = BoundaryState::new(rand_vec(&mut rng, 5.0), rand_vec(&mut rng, 2.0), rand_vec(&mut rng, 2.0));
        let traj = minco_construct(&q, &t, &start, &end).unwrap();
        for j in 0..3 {
            for order in 0..5 {
                let left = traj.piece_derivative(j, t[j], order);
                let right = traj.piece_derivative(j + 1, 0.0, order);
                assert!((left - right).norm() < 1e-8, "piece {j} order {order}");
            }
            assert!((traj.piece_derivative(j, t[j], 0) - q[j]).norm() < 1e-8);
        }
        let s = traj.start_state();
        let e = traj.end_state();
        for (a, b) in [
            (s.position, start.position),
            (s.velocity, start.velocity),
            (s.acceleration, start.acceleration),
            (e.position, end.position),
            (e.velocity, end.velocity),
            (e.acceleration, end.acceleration),
        ] {
            assert!((a - b).norm() < 1e-8);
        }
    }
}

#[test]
fn gradient_matches_finite_differences() {
    let mut active = [0usize; 3];
    for seed in 0..50 {
        let inst = random_instance(seed);
        let eval = cost_and_gradient(&inst.q, &inst.t, &inst.map, &inst.start, &inst.end, &inst.config).unwrap();
        active[0] += (eval.breakdown.obstacle > 0.0) as usize;
        active[1] += (eval.breakdown.velocity > 0.0) as usize;
        active[2] += (eval.breakdown.acceleration > 0.0) as usize;
        let (a, fd) = gradients(&inst);
        let norm = fd.iter().map(|v| v * v).sum::<f64>().sqrt();
        for (i, (x, y)) in a.iter().zip(&fd).enumerate() {
            let tol = 1e-4_f64.max(1e-3 * norm);
            assert!((x - y).abs() <= tol, "seed {seed} component {i}: analytic {x} vs fd {y} (tol {tol})");
        }
    }
    assert!(active.iter().all(|&n| n >= 5), "penalties rarely active: {active:?}");
}

#[test]
fn obstacle_gradient_pushes_away() {
    let obstacle = Vec3::new(5.0, 0.1, 1.0);
    let map = map_with(&[obstacle]);
    let config = TrajConfig {
        pieces: 2,
        lambda_v: 0.0,
        lambda_a: 0.0,
        ..TrajConfig::default()
    };
    let start = BoundaryState::rest(Vec3::new(0.0, 0.0, 1.0));
    let end = BoundaryState::rest(Vec3::new(10.0, 0.0, 1.0));
    let q = [Vec3::new(5.0, 0.0, 1.0)];
    let eval = cost_and_gradient(&q, &[2.0, 2.0], &map, &start, &end, &config).unwrap();
    assert!(eval.breakdown.obstacle > 0.0);
    // Descent direction −∇ moves the waypoint away from the obstacle (−y).
    assert!(eval.grad_q[0].y > 0.0, "grad {:?}", eval.grad_q[0]);
}

#[test]
fn optimal_start_barely_moves() {
    let map = map_with(&[]);
    let config = TrajConfig {
        pieces: 1,
        v_lim: 100.0,
        a_lim: 100.0,
        rho_time: 0.0,
        ..TrajConfig::with_speed(5.0)
    };
    let config = TrajConfig { v_d: 5.0, a_d: 6.0, ..config };
    let start = BoundaryState::rest(Vec3::zeros());
    let end = BoundaryState::rest(Vec3::new(1.0, 0.0, 0.0));
    let t0 = [30.0];
    let before = cost_and_gradient(&[], &t0, &map, &start, &end, &config).unwrap().cost;
    let (_, report) = optimize(&[], &t0, &map, &start, &end, &config).unwrap();
    assert!(report.iterations <= 5, "{} iterations", report.iterations);
    assert!(report.final_cost <= before);
    assert!(before - report.final_cost < 0.01 * before.max(1e-12) || before < 1e-3);
}

#[test]
fn optimization_clears_obstacle() {
    // A post whose edge the straight line cuts through.
    let mut pts = Vec::new();
    for iz in 0..20 {
        for a in 0..12 {
            let ang = a as f64 * std::f64::consts::TAU / 12.0;
            pts.push(Vec3::new(5.0 + 0.15 * ang.cos(), 0.2 + 0.15 * ang.sin(), iz as f64 * 0.1 + 0.05));
        }
    }
    let map = map_with(&pts);
    let config = TrajConfig {
        pieces: 5,
        ..TrajConfig::with_speed(3.0)
    };
    let start = BoundaryState::rest(Vec3::new(0.0, 0.0, 1.0));
    let end = BoundaryState::rest(Vec3::new(10.0, 0.0, 1.0));
    let path = [start.position, end.position];
    let (q, l) = fastnav::traj::sample_waypoints(&path, config.pieces);
    let t0 = allocate_time(0.0, &config, l).durations;
    let (traj, report) = optimize(&q, &t0, &map, &start, &end, &config).unwrap();
    let min_d = traj
        .sample_times(0.005)
        .iter()
        .map(|&t| map.distance(&traj.position(t)).unwrap())
        .fold(f64::INFINITY, f64::min);
    assert!(min_d >= config.d_s - 0.05, "min clearance {min_d}, report {report:?}");
    assert!(traj.durations.iter().all(|t| *t > 0.0));
    assert!((report.final_cost - report.cost_breakdown.total()).abs() < 1e-9);
}

#[test]
fn converged_trajectories_respect_limits() {
    let map = map_with(&[]);
    for v in [2.0, 5.0, 10.0] {
        let config = TrajConfig::with_speed(v);
        let start = BoundaryState::rest(Vec3::zeros());
        let end = BoundaryState::rest(Vec3::new(30.0, 5.0, 0.0));
        let path = [start.position, end.position];
        let (q, l) = fastnav::traj::sample_waypoints(&path, config.pieces);
        let t0 = allocate_time(0.0, &config, l).durations;
        let (traj, report) = optimize(&q, &t0, &map, &start, &end, &config).unwrap();
        if report.converged {
            assert!(traj.max_speed(0.01) <= v * 1.02, "v {v}: {}", traj.max_speed(0.01));
            assert!(traj.max_acceleration(0.01) <= config.a_lim * 1.02);
        }
    }
}

#[test]
fn plan_selection() {
    let map = map_with(&[]);
    let config = TrajConfig::with_speed(3.0);
    let start = BoundaryState::rest(Vec3::zeros());
    let end = BoundaryState::rest(Vec3::new(10.0, 0.0, 0.0));
    assert!(matches!(plan(&map, &[], &start, &end, &config), Err(Error::NoReferencePaths)));

    let straight = TopoPath::straight(start.position, end.position);
    let single = plan(&map, std::slice::from_ref(&straight), &start, &end, &config).unwrap();
    assert_eq!(single.chosen_index, 0);

    let detour = TopoPath::new(vec![start.position, Vec3::new(5.0, 6.0, 0.0), end.position]);
    let two = plan(&map, &[detour, straight.clone()], &start, &end, &config).unwrap();
    assert_eq!(two.chosen_index, 1);
    let costs: Vec<f64> = two.candidates.iter().map(|c| c.final_cost).collect();
    assert!(costs[1] < costs[0]);

    let dup = plan(&map, &[straight.clone(), straight], &start, &end, &config).unwrap();
    assert_eq!(dup.candidates[0].final_cost, dup.candidates[1].final_cost);
    assert_eq!(dup.chosen_index, 0);
}

/// Distance covered by a piece that ramps at `a` between its entry and exit
/// speed and otherwise holds `hold`.
fn piece_distance(v_in: f64, v_out: f64, t: f64, a: f64, hold: f64) -> f64 {
    let ramp = (v_out - v_in).abs() / a;
    (v_in + v_out) / 2.0 * ramp + hold * (t - ramp)
}

proptest! {
    #[test]
    fn allocation_covers_length(v0 in 0.0..12.0f64, v_d in 0.5..15.0f64, a_d in 0.5..8.0f64,
                                length in 1.0..60.0f64, m in 1usize..12, gamma in 0.3..0.95f64) {
        let config = TrajConfig { pieces: m, v_d, a_d, v_lim: v_d, a_lim: a_d, gamma, ..TrajConfig::default() };
        let alloc = allocate_time(v0, &config, length);
        prop_assert_eq!(alloc.durations.len(), m);
        prop_assert!(alloc.durations.iter().all(|t| *t > 0.0 && t.is_finite()));
        let total: f64 = alloc.durations.iter().zip(&alloc.piece_speeds)
            .map(|(t, [vi, vo])| piece_distance(*vi, *vo, *t, alloc.a_used, alloc.v_d_used))
            .sum();
        prop_assert!((total - length).abs() < 1e-9 * length.max(1.0), "{} vs {}", total, length);
        let need = ((alloc.v_d_used - v0).powi(2) + alloc.v_d_used.powi(2)) / (2.0 * alloc.a_used);
        prop_assert!(need <= length * (1.0 + 1e-12));
        prop_assert!(alloc.v_d_used <= v_d);
    }

    #[test]
    fn selection_is_scale_invariant(costs in prop::collection::vec((0.0..1e4f64, any::<bool>()), 1..10),
                                    scale in 1e-3..1e3f64) {
        let scaled: Vec<(f64, bool)> = costs.iter().map(|(c, b)| (c * scale, *b)).collect();
        prop_assert_eq!(select_best(&costs), select_best(&scaled));
    }
}
