use std::io::Write;

use nalgebra::Matrix6x3;
use serde::{Deserialize, Serialize};

use super::BoundaryState;
use crate::error::{Error, Result};
use crate::geometry::Vec3;

/// Row `k` of `β⁽ⁿ⁾(t)`: the `n`-th derivative of `t^k`.
pub(crate) fn basis(t: f64, order: usize) -> [f64; 6] {
    let mut out = [0.0; 6];
    for (k, slot) in out.iter_mut().enumerate().skip(order) {
        let mut coef = 1.0;
        for m in 0..order {
            coef *= (k - m) as f64;
        }
        *slot = coef * t.powi((k - order) as i32);
    }
    out
}

/// Square band matrix with in-place LU factorization (no pivoting) and
/// solves against three right-hand sides at once.
#[derive(Clone, Debug)]
pub struct BandedSystem {
    n: usize,
    lower: usize,
    upper: usize,
    data: Vec<f64>,
}

impl BandedSystem {
    pub fn new(n: usize, lower: usize, upper: usize) -> Self {
        Self {
            n,
            lower,
            upper,
            data: vec![0.0; n * (lower + upper + 1)],
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i + self.upper >= j && j + self.lower >= i, "({i},{j}) outside band");
        (i + self.upper - j) * self.n + j
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i + self.upper < j || j + self.lower < i {
            return 0.0;
        }
        self.data[self.idx(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.idx(i, j);
        self.data[k] = v;
    }

    /// Overwrites the matrix with its `L\U` factors.
    pub fn factorize_lu(&mut self) {
        let n = self.n;
        for k in 0..n {
            let i_max = (k + self.lower).min(n - 1);
            let pivot = self.get(k, k);
            for i in k + 1..=i_max {
                let v = self.get(i, k);
                if v != 0.0 {
                    self.set(i, k, v / pivot);
                }
            }
            let j_max = (k + self.upper).min(n - 1);
            for j in k + 1..=j_max {
                let ukj = self.get(k, j);
                if ukj == 0.0 {
                    continue;
                }
                for i in k + 1..=i_max {
                    let lik = self.get(i, k);
                    if lik != 0.0 {
                        let v = self.get(i, j) - lik * ukj;
                        self.set(i, j, v);
                    }
                }
            }
        }
    }

    /// Solves `A x = b` in place; requires a prior factorization.
    pub fn solve(&self, b: &mut [Vec3]) {
        let n = self.n;
        for j in 0..n {
            let i_max = (j + self.lower).min(n - 1);
            for i in j + 1..=i_max {
                let l = self.get(i, j);
                if l != 0.0 {
                    let bj = b[j];
                    b[i] -= bj * l;
                }
            }
        }
        for j in (0..n).rev() {
            b[j] /= self.get(j, j);
            let bj = b[j];
            for i in j.saturating_sub(self.upper)..j {
                let u = self.get(i, j);
                if u != 0.0 {
                    b[i] -= bj * u;
                }
            }
        }
    }

    /// Solves `Aᵀ x = b` in place; requires a prior factorization.
    pub fn solve_adjoint(&self, b: &mut [Vec3]) {
        let n = self.n;
        for j in 0..n {
            b[j] /= self.get(j, j);
            let bj = b[j];
            let i_max = (j + self.upper).min(n - 1);
            for i in j + 1..=i_max {
                let u = self.get(j, i);
                if u != 0.0 {
                    b[i] -= bj * u;
                }
            }
        }
        for j in (0..n).rev() {
            let bj = b[j];
            for i in j.saturating_sub(self.lower)..j {
                let l = self.get(j, i);
                if l != 0.0 {
                    b[i] -= bj * l;
                }
            }
        }
    }
}

/// Derivative order constrained by each row of a joint block, in row order.
const JOINT_ROW_ORDER: [usize; 6] = [3, 4, 0, 0, 1, 2];

/// Factored minimum-jerk system for fixed durations; maps waypoints to
/// coefficients and pulls coefficient gradients back to waypoints and
/// durations.
#[derive(Clone, Debug)]
pub struct Minco {
    durations: Vec<f64>,
    system: BandedSystem,
    coeffs: Vec<Vec3>,
}

impl Minco {
    pub fn new(q: &[Vec3], durations: &[f64], start: &BoundaryState, end: &BoundaryState) -> Result<Self> {
        let m = durations.len();
        if m == 0 || q.len() + 1 != m {
            return Err(Error::WaypointCount {
                waypoints: q.len(),
                pieces: m,
            });
        }
        if let Some(&t) = durations.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
            return Err(Error::DegeneratePiece(t));
        }
        let n = 6 * m;
        let mut a = BandedSystem::new(n, 6, 6);
        let mut b = vec![Vec3::zeros(); n];
        a.set(0, 0, 1.0);
        a.set(1, 1, 1.0);
        a.set(2, 2, 2.0);
        b[0] = start.position;
        b[1] = start.velocity;
        b[2] = start.acceleration;
        for i in 0..m - 1 {
            let t = durations[i];
            let base = 6 * i;
            let r = base + 3;
            for (row, &order) in JOINT_ROW_ORDER.iter().enumerate() {
                let beta = basis(t, order);
                for (k, v) in beta.iter().enumerate().skip(order) {
                    a.set(r + row, base + k, *v);
                }
            }
            // Next piece's side of the continuity rows: -k!·c_{i+1,k}.
            a.set(r, base + 9, -6.0);
            a.set(r + 1, base + 10, -24.0);
            a.set(r + 3, base + 6, -1.0);
            a.set(r + 4, base + 7, -1.0);
            a.set(r + 5, base + 8, -2.0);
            b[r + 2] = q[i];
        }
        let t = durations[m - 1];
        let base = 6 * (m - 1);
        for order in 0..3 {
            let beta = basis(t, order);
            for (k, v) in beta.iter().enumerate().skip(order) {
                a.set(n - 3 + order, base + k, *v);
            }
        }
        b[n - 3] = end.position;
        b[n - 2] = end.velocity;
        b[n - 1] = end.acceleration;
        a.factorize_lu();
        a.solve(&mut b);
        Ok(Self {
            durations: durations.to_vec(),
            system: a,
            coeffs: b,
        })
    }

    pub fn pieces(&self) -> usize {
        self.durations.len()
    }

    pub fn durations(&self) -> &[f64] {
        &self.durations
    }

    /// Coefficients of piece `j`, row `k` multiplying `t^k`.
    pub fn piece(&self, j: usize) -> &[Vec3] {
        &self.coeffs[6 * j..6 * j + 6]
    }

    fn piece_derivative(&self, j: usize, t: f64, order: usize) -> Vec3 {
        let beta = basis(t, order);
        self.piece(j).iter().zip(beta).map(|(c, b)| c * b).sum()
    }

    pub fn trajectory(&self, waypoints: &[Vec3]) -> PiecewiseTrajectory {
        let coefficients = (0..self.pieces())
            .map(|j| {
                let c = self.piece(j);
                Matrix6x3::from_fn(|r, col| c[r][col])
            })
            .collect();
        PiecewiseTrajectory {
            coefficients,
            durations: self.durations.clone(),
            waypoints: waypoints.to_vec(),
        }
    }

    /// Chain rule through the linear map: given `∂J/∂c` (6M rows) and the
    /// explicit `∂J/∂T`, returns `(dJ/dq, dJ/dT)`.
    pub fn propagate_gradient(&self, grad_c: &[Vec3], grad_t: &[f64]) -> (Vec<Vec3>, Vec<f64>) {
        let m = self.pieces();
        let mut adj = grad_c.to_vec();
        self.system.solve_adjoint(&mut adj);
        let grad_q = (0..m - 1).map(|i| adj[6 * i + 5]).collect();
        let mut gt = grad_t.to_vec();
        for (i, g) in gt.iter_mut().enumerate() {
            let t = self.durations[i];
            if i + 1 < m {
                for (row, &order) in JOINT_ROW_ORDER.iter().enumerate() {
                    *g -= adj[6 * i + 3 + row].dot(&self.piece_derivative(i, t, order + 1));
                }
            } else {
                for order in 0..3 {
                    *g -= adj[6 * m - 3 + order].dot(&self.piece_derivative(i, t, order + 1));
                }
            }
        }
        (grad_q, gt)
    }
}

/// Minimum-jerk quintic spline through `q` with durations `durations` and
/// full boundary states.
pub fn minco_construct(q: &[Vec3], durations: &[f64], start: &BoundaryState, end: &BoundaryState) -> Result<PiecewiseTrajectory> {
    Ok(Minco::new(q, durations, start, end)?.trajectory(q))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseTrajectory {
    /// Row `k` of piece `j` holds the `t^k` coefficients of x, y, z.
    pub coefficients: Vec<Matrix6x3<f64>>,
    pub durations: Vec<f64>,
    pub waypoints: Vec<Vec3>,
}

impl PiecewiseTrajectory {
    pub fn pieces(&self) -> usize {
        self.durations.len()
    }

    pub fn total_duration(&self) -> f64 {
        self.durations.iter().sum()
    }

    /// Piece index and local time for global time `t`, clamped to the
    /// trajectory's span.
    pub fn locate(&self, t: f64) -> (usize, f64) {
        let mut rest = t.max(0.0);
        for (j, &d) in self.durations.iter().enumerate() {
            if rest <= d || j + 1 == self.durations.len() {
                return (j, rest.min(d));
            }
            rest -= d;
        }
        (0, 0.0)
    }

    pub fn piece_derivative(&self, j: usize, t: f64, order: usize) -> Vec3 {
        let beta = basis(t, order);
        let c = &self.coefficients[j];
        Vec3::new(
            (0..6).map(|k| c[(k, 0)] * beta[k]).sum(),
            (0..6).map(|k| c[(k, 1)] * beta[k]).sum(),
            (0..6).map(|k| c[(k, 2)] * beta[k]).sum(),
        )
    }

    pub fn derivative(&self, t: f64, order: usize) -> Vec3 {
        let (j, tau) = self.locate(t);
        self.piece_derivative(j, tau, order)
    }

    pub fn position(&self, t: f64) -> Vec3 {
        self.derivative(t, 0)
    }

    pub fn velocity(&self, t: f64) -> Vec3 {
        self.derivative(t, 1)
    }

    pub fn acceleration(&self, t: f64) -> Vec3 {
        self.derivative(t, 2)
    }

    pub fn jerk(&self, t: f64) -> Vec3 {
        self.derivative(t, 3)
    }

    pub fn state_at(&self, t: f64) -> BoundaryState {
        let (j, tau) = self.locate(t);
        BoundaryState::new(
            self.piece_derivative(j, tau, 0),
            self.piece_derivative(j, tau, 1),
            self.piece_derivative(j, tau, 2),
        )
    }

    pub fn start_state(&self) -> BoundaryState {
        self.state_at(0.0)
    }

    pub fn end_state(&self) -> BoundaryState {
        self.state_at(self.total_duration())
    }

    /// Sample times `0, dt, 2dt, …` plus the final instant.
    pub fn sample_times(&self, dt: f64) -> Vec<f64> {
        let total = self.total_duration();
        let n = (total / dt).floor() as usize;
        let mut ts: Vec<f64> = (0..=n).map(|i| i as f64 * dt).collect();
        if ts.last().is_none_or(|&t| total - t > 1e-9) {
            ts.push(total);
        }
        ts
    }

    pub fn max_speed(&self, dt: f64) -> f64 {
        self.sample_times(dt).iter().map(|&t| self.velocity(t).norm()).fold(0.0, f64::max)
    }

    pub fn max_acceleration(&self, dt: f64) -> f64 {
        self.sample_times(dt).iter().map(|&t| self.acceleration(t).norm()).fold(0.0, f64::max)
    }

    /// Polyline length of the position sampled every `dt`.
    pub fn length(&self, dt: f64) -> f64 {
        let pts: Vec<Vec3> = self.sample_times(dt).iter().map(|&t| self.position(t)).collect();
        pts.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
    }

    /// Writes `t,x,y,z,vx,vy,vz,ax,ay,az` rows sampled every `dt`.
    pub fn write_csv<W: Write>(&self, mut out: W, dt: f64) -> std::io::Result<()> {
        writeln!(out, "t,x,y,z,vx,vy,vz,ax,ay,az")?;
        for t in self.sample_times(dt) {
            let s = self.state_at(t);
            let (p, v, a) = (s.position, s.velocity, s.acceleration);
            writeln!(
                out,
                "{t:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
                p.x, p.y, p.z, v.x, v.y, v.z, a.x, a.y, a.z
            )?;
        }
        Ok(())
    }
}
