//! Python bindings: point store, local map, topology search, trajectory
//! planning and the simulated forest.
//!
//! Points are `(x, y, z)` tuples. Config arguments take a dict or a JSON
//! string; missing keys keep their defaults and unknown keys are errors.

use fastnav::geometry::{Aabb, RigidTransform, Vec3};
use fastnav::map::{LocalMap, MapConfig};
use fastnav::octree::{InsertOutcome, OctreeConfig, PointStore};
use fastnav::sim::{generate_world, run_episode as run, EpisodeConfig, SimWorld, WorldSpec};
use fastnav::topo::{topo_search as search, TopoConfig, TopoPath};
use fastnav::traj::{allocate_time as allocate, plan as plan_paths, BoundaryState, PiecewiseTrajectory, TrajConfig};
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;

create_exception!(fastnav, FastnavError, PyException);

type P = (f64, f64, f64);

fn v(p: P) -> Vec3 {
    Vec3::new(p.0, p.1, p.2)
}

fn t(p: &Vec3) -> P {
    (p.x, p.y, p.z)
}

fn err(e: impl std::fmt::Display) -> PyErr {
    FastnavError::new_err(e.to_string())
}

fn parse<T: DeserializeOwned>(obj: Option<&Bound<'_, PyAny>>, default: T) -> PyResult<T> {
    let Some(obj) = obj else { return Ok(default) };
    let text: String = match obj.extract::<String>() {
        Ok(s) => s,
        Err(_) => obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?,
    };
    serde_json::from_str(&text).map_err(err)
}

fn to_py<'py>(py: Python<'py>, value: &impl Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(err)?;
    py.import("json")?.call_method1("loads", (text,))
}

/// Dynamic octree over 3-D points.
#[pyclass(name = "PointStore", module = "fastnav")]
struct PyPointStore(PointStore);

#[pymethods]
impl PyPointStore {
    #[new]
    #[pyo3(signature = (min_extent = 0.1, max_points_per_min_leaf = 8, center = (0.0, 0.0, 0.0), half = 8.0))]
    fn new(min_extent: f64, max_points_per_min_leaf: usize, center: P, half: f64) -> PyResult<Self> {
        let config = OctreeConfig::new(min_extent, max_points_per_min_leaf, Aabb::cube(v(center), half));
        config.validate().map_err(err)?;
        Ok(Self(PointStore::new(config)))
    }

    /// True when the point was stored.
    fn insert(&mut self, p: P) -> bool {
        self.0.insert(v(p)) == InsertOutcome::Inserted
    }

    fn remove(&mut self, p: P) -> bool {
        self.0.remove(&v(p))
    }

    /// Drops every point outside the box; returns how many went.
    fn box_remove(&mut self, center: P, half_extent: P) -> PyResult<usize> {
        let keep = Aabb::new(v(center), v(half_extent)).ok_or_else(|| err("box half extents must be positive"))?;
        Ok(self.0.box_remove(&keep))
    }

    /// `k` nearest points with their distances, closest first.
    fn knn(&self, q: P, k: usize) -> Vec<(P, f64)> {
        self.0.knn(&v(q), k).iter().map(|(p, d)| (t(p), *d)).collect()
    }

    fn radius_search(&self, q: P, r: f64) -> Vec<P> {
        self.0.radius_search(&v(q), r).iter().map(t).collect()
    }

    fn points(&self) -> Vec<P> {
        self.0.points().iter().map(t).collect()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }
}

/// Robot-centred point map with distance queries.
#[pyclass(name = "LocalMap", module = "fastnav")]
struct PyLocalMap(LocalMap);

#[pymethods]
impl PyLocalMap {
    #[new]
    #[pyo3(signature = (center = (0.0, 0.0, 0.0), config = None))]
    fn new(center: P, config: Option<&Bound<'_, PyAny>>) -> PyResult<Self> {
        let config: MapConfig = parse(config, MapConfig::default())?;
        LocalMap::new(config, v(center)).map(Self).map_err(err)
    }

    /// Stores points as given, without filtering or raycasting.
    fn insert_points(&mut self, points: Vec<P>) -> usize {
        let pts: Vec<Vec3> = points.into_iter().map(v).collect();
        self.0.insert_points(&pts)
    }

    /// Full update with a world-frame scan taken from `origin` at `yaw`.
    #[pyo3(signature = (points, origin, yaw = 0.0))]
    fn ingest_scan(&mut self, points: Vec<P>, origin: P, yaw: f64) -> usize {
        let pts: Vec<Vec3> = points.into_iter().map(v).collect();
        let pose = RigidTransform::from_euler(yaw, 0.0, 0.0, v(origin));
        self.0.ingest_scan(&pts, &pose, v(origin));
        self.0.len()
    }

    /// Recentres the map; returns the number of points dropped.
    fn slide(&mut self, center: P) -> usize {
        self.0.slide(v(center))
    }

    /// Distance to the nearest point and the direction of steepest descent.
    fn resdf(&self, x: P) -> PyResult<(f64, P)> {
        let q = self.0.resdf(&v(x)).map_err(err)?;
        Ok((q.distance, t(&q.gradient)))
    }

    fn is_occupied(&self, x: P) -> bool {
        self.0.is_occupied(&v(x))
    }

    fn points(&self) -> Vec<P> {
        self.0.points().iter().map(t).collect()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }
}

/// Piecewise quintic trajectory.
#[pyclass(name = "Trajectory", module = "fastnav")]
struct PyTrajectory(PiecewiseTrajectory);

#[pymethods]
impl PyTrajectory {
    #[getter]
    fn duration(&self) -> f64 {
        self.0.total_duration()
    }

    #[getter]
    fn pieces(&self) -> usize {
        self.0.pieces()
    }

    fn position(&self, time: f64) -> P {
        t(&self.0.position(time))
    }

    fn velocity(&self, time: f64) -> P {
        t(&self.0.velocity(time))
    }

    fn acceleration(&self, time: f64) -> P {
        t(&self.0.acceleration(time))
    }

    #[pyo3(signature = (dt = 0.01))]
    fn max_speed(&self, dt: f64) -> f64 {
        self.0.max_speed(dt)
    }

    #[pyo3(signature = (dt = 0.01))]
    fn length(&self, dt: f64) -> f64 {
        self.0.length(dt)
    }

    /// `t,x,y,z,vx,vy,vz,ax,ay,az` rows sampled every `dt`.
    #[pyo3(signature = (dt = 0.05))]
    fn to_csv(&self, dt: f64) -> PyResult<String> {
        let mut buf = Vec::new();
        self.0.write_csv(&mut buf, dt).map_err(err)?;
        String::from_utf8(buf).map_err(err)
    }
}

/// Obstacle world for simulated flights.
#[pyclass(name = "World", module = "fastnav")]
struct PyWorld(SimWorld);

#[pymethods]
impl PyWorld {
    /// Seeded forest; `spec` overrides the default benchmark layout.
    #[staticmethod]
    #[pyo3(signature = (spec = None))]
    fn generate(spec: Option<&Bound<'_, PyAny>>) -> PyResult<Self> {
        let spec: WorldSpec = parse(spec, WorldSpec::default())?;
        Ok(Self(generate_world(&spec)))
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        serde_json::from_str(text).map(Self).map_err(err)
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.0).map_err(err)
    }

    #[getter]
    fn columns(&self) -> usize {
        self.0.columns.len()
    }

    #[getter]
    fn rings(&self) -> usize {
        self.0.rings.len()
    }

    /// Signed distance to the nearest obstacle at time `time`.
    #[pyo3(signature = (p, time = 0.0))]
    fn distance(&self, p: P, time: f64) -> f64 {
        self.0.distance(&v(p), time)
    }

    fn surface_points(&self, spacing: f64) -> PyResult<Vec<P>> {
        if !(spacing > 0.0) {
            return Err(err("spacing must be positive"));
        }
        Ok(self.0.surface_points(spacing).iter().map(t).collect())
    }
}

/// Reference paths from `start` to `goal` as `(nodes, length)`, shortest first.
#[pyfunction]
#[pyo3(signature = (map, start, goal, config = None))]
fn topo_search(map: PyRef<'_, PyLocalMap>, start: P, goal: P, config: Option<&Bound<'_, PyAny>>) -> PyResult<Vec<(Vec<P>, f64)>> {
    let config: TopoConfig = parse(config, TopoConfig::default())?;
    let paths = search(&map.0, &v(start), &v(goal), &config).map_err(err)?;
    Ok(paths.iter().map(|p| (p.nodes.iter().map(t).collect(), p.length)).collect())
}

/// Piece durations for a reference of `length` starting at speed `v0`,
/// plus the cruise speed actually used.
#[pyfunction]
#[pyo3(signature = (v0, length, config = None))]
fn allocate_time(v0: f64, length: f64, config: Option<&Bound<'_, PyAny>>) -> PyResult<(Vec<f64>, f64)> {
    let config: TrajConfig = parse(config, TrajConfig::default())?;
    config.validate().map_err(err)?;
    let a = allocate(v0, &config, length);
    Ok((a.durations, a.v_d_used))
}

/// Optimizes one trajectory per reference path and returns the best,
/// ending at rest at the goal.
#[pyfunction]
#[pyo3(signature = (map, paths, start, goal, start_velocity = (0.0, 0.0, 0.0), config = None))]
fn plan(
    py: Python<'_>,
    map: PyRef<'_, PyLocalMap>,
    paths: Vec<Vec<P>>,
    start: P,
    goal: P,
    start_velocity: P,
    config: Option<&Bound<'_, PyAny>>,
) -> PyResult<PyTrajectory> {
    let config: TrajConfig = parse(config, TrajConfig::default())?;
    let refs: Vec<TopoPath> = paths.into_iter().map(|p| TopoPath::new(p.into_iter().map(v).collect())).collect();
    let s = BoundaryState::new(v(start), v(start_velocity), Vec3::zeros());
    let e = BoundaryState::rest(v(goal));
    let map = &map.0;
    let out = py.detach(|| plan_paths(map, &refs, &s, &e, &config)).map_err(err)?;
    Ok(PyTrajectory(out.trajectory))
}

/// Flies one simulated episode and returns its metrics as a dict.
#[pyfunction]
#[pyo3(signature = (world, start, goal, speed = 5.0, config = None))]
fn run_episode<'py>(
    py: Python<'py>,
    world: PyRef<'_, PyWorld>,
    start: P,
    goal: P,
    speed: f64,
    config: Option<&Bound<'_, PyAny>>,
) -> PyResult<Bound<'py, PyAny>> {
    let config: EpisodeConfig = parse(config, EpisodeConfig::for_speed(speed))?;
    let w = &world.0;
    let r = py.detach(|| run(w, v(start), &[v(goal)], &config)).map_err(err)?;
    let out = to_py(py, &r.metrics)?;
    out.set_item("goals_reached", r.goals_reached)?;
    out.set_item("ticks", r.ticks.len())?;
    Ok(out)
}

#[pymodule]
#[pyo3(name = "fastnav")]
fn fastnav_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("FastnavError", m.py().get_type::<FastnavError>())?;
    m.add_class::<PyPointStore>()?;
    m.add_class::<PyLocalMap>()?;
    m.add_class::<PyTrajectory>()?;
    m.add_class::<PyWorld>()?;
    m.add_function(wrap_pyfunction!(topo_search, m)?)?;
    m.add_function(wrap_pyfunction!(allocate_time, m)?)?;
    m.add_function(wrap_pyfunction!(plan, m)?)?;
    m.add_function(wrap_pyfunction!(run_episode, m)?)?;
    Ok(())
}
