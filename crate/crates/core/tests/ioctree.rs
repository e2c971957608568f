use fastnav::geometry::{aabb_contains, point_key, Aabb, Vec3};
use fastnav::octree::{InsertOutcome, OctreeConfig, PointStore};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn store(min_extent: f64, n_max: usize) -> PointStore {
    PointStore::new(OctreeConfig::new(min_extent, n_max, Aabb::cube(Vec3::zeros(), 4.0)))
}

fn grid_point() -> impl Strategy<Value = Vec3> {
    // A coarse lattice so that duplicates and distance ties show up.
    (-60i32..60, -60i32..60, -20i32..20).prop_map(|(x, y, z)| Vec3::new(x as f64 * 0.1, y as f64 * 0.1, z as f64 * 0.1))
}

#[derive(Clone, Debug)]
enum Op {
    Insert(Vec3),
    Remove(Vec3),
    RemoveExisting(usize),
    Keep(Vec3, Vec3),
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        6 => grid_point().prop_map(Op::Insert),
        1 => grid_point().prop_map(Op::Remove),
        2 => any::<usize>().prop_map(Op::RemoveExisting),
        1 => (grid_point(), (0.5..6.0f64, 0.5..6.0f64, 0.5..3.0f64))
            .prop_map(|(c, (x, y, z))| Op::Keep(c, Vec3::new(x, y, z))),
    ]
}

fn brute_knn(points: &[Vec3], q: &Vec3, k: usize) -> Vec<f64> {
    let mut d: Vec<f64> = points.iter().map(|p| (p - q).norm()).collect();
    d.sort_by(f64::total_cmp);
    d.truncate(k);
    d
}

fn check_queries(s: &PointStore, oracle: &[Vec3], q: &Vec3, k: usize, r: f64) -> Result<(), TestCaseError> {
    let got = s.knn(q, k);
    let want = brute_knn(oracle, q, k);
    prop_assert_eq!(got.len(), want.len());
    for (i, ((p, d), w)) in got.iter().zip(&want).enumerate() {
        prop_assert!((d - w).abs() < 1e-12, "rank {} distance {} vs {}", i, d, w);
        prop_assert!((d - (p - q).norm()).abs() < 1e-12);
        prop_assert!(oracle.contains(p));
    }
    prop_assert!(got.windows(2).all(|w| w[0].1 <= w[1].1));

    let mut found: Vec<[u64; 3]> = s.radius_search(q, r).iter().map(point_key).collect();
    let mut expect: Vec<[u64; 3]> = oracle.iter().filter(|p| (*p - q).norm() <= r).map(point_key).collect();
    found.sort();
    expect.sort();
    prop_assert_eq!(found, expect);
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn matches_list_oracle(ops in prop::collection::vec(op(), 1..200), queries in prop::collection::vec((grid_point(), 1usize..9, 0.05..1.5f64), 4)) {
        // No saturation: one point per lattice site fits easily.
        let mut s = store(0.05, 64);
        let mut oracle: Vec<Vec3> = Vec::new();
        for op in ops {
            match op {
                Op::Insert(p) => {
                    let fresh = !oracle.contains(&p);
                    let outcome = s.insert(p);
                    prop_assert_eq!(outcome == InsertOutcome::Inserted, fresh);
                    if fresh {
                        oracle.push(p);
                    }
                }
                Op::Remove(p) => {
                    let present = oracle.iter().position(|o| *o == p);
                    prop_assert_eq!(s.remove(&p), present.is_some());
                    if let Some(i) = present {
                        oracle.swap_remove(i);
                    }
                }
                Op::RemoveExisting(i) => {
                    if !oracle.is_empty() {
                        let p = oracle.swap_remove(i % oracle.len());
                        prop_assert!(s.remove(&p));
                    }
                }
                Op::Keep(c, size) => {
                    let keep = Aabb::from_size(c, size).unwrap();
                    let before = oracle.len();
                    oracle.retain(|p| aabb_contains(&keep, p));
                    prop_assert_eq!(s.box_remove(&keep), before - oracle.len());
                }
            }
            prop_assert_eq!(s.len(), oracle.len());
            if let Err(e) = s.check_invariants() {
                return Err(TestCaseError::fail(e));
            }
        }
        for (q, k, r) in &queries {
            check_queries(&s, &oracle, q, *k, *r)?;
        }
    }

    #[test]
    fn insert_then_remove_restores(base in prop::collection::vec(grid_point(), 0..100), fresh in grid_point()) {
        let mut s = store(0.05, 64);
        for p in &base {
            s.insert(*p);
        }
        prop_assume!(!base.contains(&fresh));
        let mut before: Vec<[u64; 3]> = s.points().iter().map(point_key).collect();
        prop_assert_eq!(s.insert(fresh), InsertOutcome::Inserted);
        prop_assert!(s.remove(&fresh));
        let mut after: Vec<[u64; 3]> = s.points().iter().map(point_key).collect();
        before.sort();
        after.sort();
        prop_assert_eq!(before, after);
    }

    #[test]
    fn saturation_bound_holds(points in prop::collection::vec((0.0..0.6f64, 0.0..0.6f64, 0.0..0.6f64), 1..300), n_max in 1usize..4) {
        let mut s = store(0.2, n_max);
        for (x, y, z) in points {
            s.insert(Vec3::new(x, y, z));
        }
        if let Err(e) = s.check_invariants() {
            return Err(TestCaseError::fail(e));
        }
    }
}

#[test]
fn uniform_cloud_queries_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut s = store(0.01, 8);
    let mut pts = Vec::new();
    while pts.len() < 500 {
        let p = Vec3::new(
            rng.random_range(-4.0..4.0),
            rng.random_range(-4.0..4.0),
            rng.random_range(-4.0..4.0),
        );
        if s.insert(p) == InsertOutcome::Inserted {
            pts.push(p);
        }
    }
    for _ in 0..200 {
        let q = Vec3::new(
            rng.random_range(-6.0..6.0),
            rng.random_range(-6.0..6.0),
            rng.random_range(-6.0..6.0),
        );
        check_queries(&s, &pts, &q, 8, 0.7).unwrap();
    }
    assert_eq!(s.knn(&Vec3::zeros(), 10_000).len(), 500);
}

#[test]
fn removing_everything_prunes_to_root() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut s = store(0.05, 4);
    let mut pts = Vec::new();
    for _ in 0..100 {
        let p = Vec3::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
        if s.insert(p) == InsertOutcome::Inserted {
            pts.push(p);
        }
    }
    assert!(s.node_count() > 1);
    for p in &pts {
        assert!(s.remove(p));
    }
    assert!(s.is_empty());
    assert!(s.root_is_leaf());
    assert_eq!(s.node_count(), 1);
}

#[test]
fn box_remove_counts_match_membership() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut s = store(0.05, 4);
    let mut pts = Vec::new();
    for _ in 0..400 {
        let p = Vec3::new(rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0), rng.random_range(-2.0..2.0));
        if s.insert(p) == InsertOutcome::Inserted {
            pts.push(p);
        }
    }
    let keep = Aabb::from_size(Vec3::new(1.0, -0.5, 0.0), Vec3::new(4.0, 3.0, 2.0)).unwrap();
    let inside = pts.iter().filter(|p| aabb_contains(&keep, p)).count();
    assert_eq!(s.box_remove(&keep), pts.len() - inside);
    assert_eq!(s.len(), inside);
    assert_eq!(s.box_remove(&Aabb::cube(Vec3::zeros(), 100.0)), 0);
    assert_eq!(s.box_remove(&Aabb::cube(Vec3::new(50.0, 0.0, 0.0), 1.0)), inside);
    assert!(s.is_empty());
}
