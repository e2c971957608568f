use serde::Serialize;

use super::TrajConfig;
use crate::geometry::Vec3;

/// Initial durations from an accelerate–cruise–decelerate profile.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TimeAllocation {
    pub durations: Vec<f64>,
    /// Cruise speed after the feasibility loop.
    pub v_d_used: f64,
    /// Acceleration used by the profile; differs from `a_d` only when no
    /// cruise speed fits the length (see [`allocate_time`]).
    pub a_used: f64,
    /// Pieces in the speed-change phase at the start.
    pub m_up: usize,
    /// Index after which the final deceleration pieces begin.
    pub m_down: usize,
    /// Entry and exit speed of every piece.
    pub piece_speeds: Vec<[f64; 2]>,
}

/// Moves `d` meters starting at speed `v`, changing speed at rate `a`
/// toward `target` and holding it once reached. Returns (time, exit speed).
fn ramp(v: f64, target: f64, a: f64, d: f64) -> (f64, f64) {
    if v < target {
        let d1 = (target * target - v * v) / (2.0 * a);
        if d1 >= d {
            let v1 = (v * v + 2.0 * a * d).sqrt();
            ((v1 - v) / a, v1)
        } else {
            ((target - v) / a + (d - d1) / target, target)
        }
    } else if v > target {
        let d1 = (v * v - target * target) / (2.0 * a);
        if d1 >= d {
            let v1 = (v * v - 2.0 * a * d).max(0.0).sqrt();
            ((v - v1) / a, v1)
        } else {
            ((v - target) / a + (d - d1) / target, target)
        }
    } else {
        (d / v, v)
    }
}

/// Adaptive time allocation over `config.pieces` equal-length pieces of a
/// reference of length `length`, starting at speed `v0` and ending at rest.
///
/// The cruise speed is shrunk by `gamma` until the speed change plus the
/// final stop fit in `length`. When `v0` exceeds what can be shed in time,
/// shrinking stops at `v0 / 2` (where the required distance is smallest)
/// and the acceleration is raised just enough to fit instead.
pub fn allocate_time(v0: f64, config: &TrajConfig, length: f64) -> TimeAllocation {
    let m = config.pieces.max(1);
    let v0 = v0.max(0.0);
    let mut a = config.a_d;
    let need = |vd: f64, a: f64| ((vd - v0).powi(2) + vd * vd) / (2.0 * a);
    let mut vd = config.v_d;
    while need(vd, a) > length {
        let next = vd * config.gamma;
        if v0 > 0.0 && next < 0.5 * v0 {
            break;
        }
        vd = next;
    }
    if need(vd, a) > length {
        a = ((vd - v0).powi(2) + vd * vd) / (2.0 * length);
    }
    let mf = m as f64;
    let m_up = ((mf * (vd - v0).powi(2) / (2.0 * length * a)).ceil() as usize).min(m);
    let m_down = ((mf - mf * vd * vd / (2.0 * length * a)).ceil().max(0.0) as usize).clamp(m_up, m);

    let d = length / mf;
    let mut durations = vec![0.0; m];
    let mut piece_speeds = vec![[vd, vd]; m];
    let mut v = v0;
    for i in 0..m_up {
        let (t, v1) = ramp(v, vd, a, d);
        durations[i] = t;
        piece_speeds[i] = [v, v1];
        v = v1;
    }
    let mut v = 0.0;
    for i in (m_down..m).rev() {
        let (t, v1) = ramp(v, vd, a, d);
        durations[i] = t;
        piece_speeds[i] = [v1, v];
        v = v1;
    }
    for t in &mut durations[m_up..m_down] {
        *t = d / vd;
    }
    TimeAllocation {
        durations,
        v_d_used: vd,
        a_used: a,
        m_up,
        m_down,
        piece_speeds,
    }
}

/// Every piece flown at `config.v_d`.
pub fn allocate_constant(config: &TrajConfig, length: f64) -> Vec<f64> {
    let m = config.pieces.max(1);
    vec![length / m as f64 / config.v_d; m]
}

/// Every piece accelerates from rest toward `config.v_d` at `config.a_d`
/// and brakes back to rest.
pub fn allocate_trapezoidal(config: &TrajConfig, length: f64) -> Vec<f64> {
    let m = config.pieces.max(1);
    let d = length / m as f64;
    let (vd, a) = (config.v_d, config.a_d);
    let t = if d >= vd * vd / a {
        2.0 * vd / a + (d - vd * vd / a) / vd
    } else {
        2.0 * (d / a).sqrt()
    };
    vec![t; m]
}

/// Places `pieces − 1` waypoints at equal arc-length spacing along the
/// polyline; returns them with the polyline length.
pub fn sample_waypoints(path: &[Vec3], pieces: usize) -> (Vec<Vec3>, f64) {
    let seg_len: Vec<f64> = path.windows(2).map(|w| (w[1] - w[0]).norm()).collect();
    let total: f64 = seg_len.iter().sum();
    let mut out = Vec::with_capacity(pieces.saturating_sub(1));
    let mut seg = 0;
    let mut walked = 0.0;
    for j in 1..pieces {
        let target = total * j as f64 / pieces as f64;
        while seg + 1 < seg_len.len() && walked + seg_len[seg] < target {
            walked += seg_len[seg];
            seg += 1;
        }
        let s = if seg_len[seg] > 0.0 {
            ((target - walked) / seg_len[seg]).clamp(0.0, 1.0)
        } else {
            0.0
        };
        out.push(path[seg] + (path[seg + 1] - path[seg]) * s);
    }
    (out, total)
}
