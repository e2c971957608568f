use fastnav::geometry::Vec3;
use fastnav::map::{LocalMap, MapConfig};
use fastnav::topo::{
    build_topo_graph, check_visibility, region_growth, topo_search, ObstacleRegistry, TopoConfig, Visibility,
};
use proptest::prelude::*;

fn map_with(points: &[Vec3]) -> LocalMap {
    let cfg = MapConfig {
        map_size: Vec3::new(30.0, 30.0, 12.0),
        max_points_per_min_leaf: 8,
        ..MapConfig::default()
    };
    let mut m = LocalMap::new(cfg, Vec3::zeros()).unwrap();
    m.insert_points(points);
    m
}

/// Wall at x = 3, y in [-4, 4], z in [-3, 3] with a 1.2 m wide slot at y ∈ [1, 2.2].
fn wall_with_gap() -> Vec<Vec3> {
    let mut pts = Vec::new();
    for iy in -40..40 {
        let y = iy as f64 * 0.1 + 0.05;
        if (1.0..2.2).contains(&y) {
            continue;
        }
        for iz in -30..30 {
            pts.push(Vec3::new(3.05, y, iz as f64 * 0.1 + 0.05));
        }
    }
    pts
}

fn union_find_components(points: &[Vec3], radius: f64) -> Vec<usize> {
    let mut parent: Vec<usize> = (0..points.len()).collect();
    fn find(p: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while p[r] != r {
            r = p[r];
        }
        let mut c = i;
        while p[c] != r {
            let n = p[c];
            p[c] = r;
            c = n;
        }
        r
    }
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            if (points[i] - points[j]).norm() <= radius {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                parent[a] = b;
            }
        }
    }
    (0..points.len()).map(|i| find(&mut parent, i)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn region_growth_matches_union_find(
        raw in prop::collection::vec((0i32..40, 0i32..40, 0i32..4), 1..80),
        seed_idx in 0usize..80,
    ) {
        // Points on a 0.1 m lattice so the map keeps them verbatim.
        let pts: Vec<Vec3> = raw.iter()
            .map(|&(x, y, z)| Vec3::new(x as f64 * 0.1 - 1.95, y as f64 * 0.1 - 1.95, z as f64 * 0.1 + 0.05))
            .collect();
        let m = map_with(&pts);
        let stored = m.store().points();
        let radius = 0.15;
        let comps = union_find_components(&stored, radius);
        let seed = seed_idx % stored.len();
        let mut reg = ObstacleRegistry::new();
        let (label, cluster) = region_growth(&m, &stored[seed], radius, &mut reg).unwrap();
        prop_assert_eq!(label, 1);
        let mut expected: Vec<Vec3> = stored.iter().zip(&comps)
            .filter(|(_, c)| **c == comps[seed]).map(|(p, _)| *p).collect();
        let mut got = cluster.clone();
        let key = |a: &Vec3, b: &Vec3| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)).then(a.z.total_cmp(&b.z));
        expected.sort_by(key);
        got.sort_by(key);
        prop_assert_eq!(got, expected);
    }

    #[test]
    fn visibility_skip_matches_dense_sampling(
        obs in prop::collection::vec((-30i32..30, -10i32..10, -3i32..3), 0..40),
        ax in -2.0..2.0f64, ay in -2.0..2.0f64, bx in -2.0..2.0f64, by in -2.0..2.0f64,
    ) {
        let pts: Vec<Vec3> = obs.iter()
            .map(|&(x, y, z)| Vec3::new(x as f64 * 0.1 + 0.05, y as f64 * 0.1 + 0.05, z as f64 * 0.1 + 0.05))
            .collect();
        let m = map_with(&pts);
        let a = Vec3::new(ax * 1.5, ay, 0.0);
        let b = Vec3::new(bx * 1.5, by, 0.1);
        let step = 0.1;
        let len = (b - a).norm();
        let dir = if len > 0.0 { (b - a) / len } else { Vec3::zeros() };
        let mut dense = None;
        let mut s = 1u64;
        while (s as f64) * step < len {
            let x = a + dir * (s as f64 * step);
            if m.is_occupied(&x) {
                dense = Some(x);
                break;
            }
            s += 1;
        }
        match (check_visibility(&m, &a, &b, step), dense) {
            (Visibility::Visible, None) => {}
            (Visibility::Occluded { sample, .. }, Some(x)) => prop_assert_eq!(sample, x),
            (got, want) => prop_assert!(false, "skip {:?} vs dense {:?}", got, want),
        }
    }
}

#[test]
fn wall_with_gap_yields_several_paths() {
    let m = map_with(&wall_with_gap());
    let start = Vec3::new(0.0, 0.0, 0.0);
    let goal = Vec3::new(6.0, 0.0, 0.0);
    let cfg = TopoConfig::default();
    let paths = topo_search(&m, &start, &goal, &cfg).unwrap();
    assert!(paths.len() >= 2, "only {} paths", paths.len());
    for w in paths.windows(2) {
        assert!(w[0].length <= w[1].length);
    }
    for p in &paths {
        assert_eq!(p.nodes.first(), Some(&start));
        assert_eq!(p.nodes.last(), Some(&goal));
        for seg in p.nodes.windows(2) {
            assert!(
                check_visibility(&m, &seg[0], &seg[1], cfg.visibility_step).is_visible(),
                "segment {:?} -> {:?} blocked",
                seg[0],
                seg[1]
            );
        }
    }
    // The slot gives a path shorter than going around the 8 m wall.
    assert!(paths[0].length < 8.0, "shortest {}", paths[0].length);
}

#[test]
fn search_is_deterministic() {
    let m = map_with(&wall_with_gap());
    let start = Vec3::new(0.0, -0.5, 0.2);
    let goal = Vec3::new(6.0, 0.5, -0.3);
    let a = topo_search(&m, &start, &goal, &TopoConfig::default()).unwrap();
    let b = topo_search(&m, &start, &goal, &TopoConfig::default()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn same_obstacle_children_inherit_angle() {
    let m = map_with(&wall_with_gap());
    let g = build_topo_graph(&m, &Vec3::zeros(), &Vec3::new(6.0, 0.0, 0.0), &TopoConfig::default()).unwrap();
    for n in &g.nodes {
        let Some(p) = n.parent else { continue };
        if n.occluder_label.is_some() && n.occluder_label == g.nodes[p].occluder_label {
            for &c in &n.children {
                assert_eq!(g.nodes[c].sampled_angle_index, n.sampled_angle_index);
            }
        }
    }
    assert!(g.nodes.len() <= TopoConfig::default().max_nodes);
}

#[test]
fn node_budget_is_respected() {
    let m = map_with(&wall_with_gap());
    let cfg = TopoConfig {
        max_nodes: 5,
        ..TopoConfig::default()
    };
    let g = build_topo_graph(&m, &Vec3::zeros(), &Vec3::new(6.0, 0.0, 0.0), &cfg).unwrap();
    assert!(g.nodes.len() <= 5);
}

#[test]
fn height_band_keeps_nodes_inside() {
    let m = map_with(&wall_with_gap());
    let cfg = TopoConfig {
        height_limits: Some([-0.5, 0.5]),
        ..TopoConfig::default()
    };
    let g = build_topo_graph(&m, &Vec3::zeros(), &Vec3::new(6.0, 0.0, 0.0), &cfg).unwrap();
    for n in &g.nodes {
        assert!(n.position.z >= -0.5 && n.position.z <= 0.5);
    }
    assert!(!g.paths(10).is_empty());
}
