use serde::{Deserialize, Serialize};

use super::minco::{basis, Minco};
use super::{BoundaryState, TrajConfig};
use crate::error::Result;
use crate::geometry::Vec3;
use crate::map::LocalMap;

/// Weighted contributions to the total cost.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub smoothness: f64,
    pub time: f64,
    pub obstacle: f64,
    pub velocity: f64,
    pub acceleration: f64,
}

impl CostBreakdown {
    pub fn total(&self) -> f64 {
        self.smoothness + self.time + self.obstacle + self.velocity + self.acceleration
    }
}

#[derive(Clone, Debug)]
pub struct CostEval {
    pub cost: f64,
    pub breakdown: CostBreakdown,
    pub grad_q: Vec<Vec3>,
    pub grad_t: Vec<f64>,
}

/// Jerk energy of one piece and its partials with respect to the
/// coefficients and the duration.
fn jerk_energy(c: &[Vec3], t: f64, grad_c: &mut [Vec3]) -> (f64, f64) {
    let (c3, c4, c5) = (c[3], c[4], c[5]);
    let (t2, t3) = (t * t, t * t * t);
    let (t4, t5) = (t2 * t2, t2 * t3);
    let energy = 36.0 * c3.norm_squared() * t
        + 144.0 * c3.dot(&c4) * t2
        + (192.0 * c4.norm_squared() + 240.0 * c3.dot(&c5)) * t3
        + 720.0 * c4.dot(&c5) * t4
        + 720.0 * c5.norm_squared() * t5;
    grad_c[3] += c3 * (72.0 * t) + c4 * (144.0 * t2) + c5 * (240.0 * t3);
    grad_c[4] += c3 * (144.0 * t2) + c4 * (384.0 * t3) + c5 * (720.0 * t4);
    grad_c[5] += c3 * (240.0 * t3) + c4 * (720.0 * t4) + c5 * (1440.0 * t5);
    let jerk_end = c3 * 6.0 + c4 * (24.0 * t) + c5 * (60.0 * t2);
    (energy, jerk_end.norm_squared())
}

fn eval_basis(c: &[Vec3], beta: &[f64; 6]) -> Vec3 {
    c.iter().zip(beta).map(|(ck, b)| ck * *b).sum()
}

/// Total cost of the spline through `q` with durations `durations`, and its
/// gradient with respect to both.
pub fn cost_and_gradient(
    q: &[Vec3],
    durations: &[f64],
    map: &LocalMap,
    start: &BoundaryState,
    end: &BoundaryState,
    config: &TrajConfig,
) -> Result<CostEval> {
    let minco = Minco::new(q, durations, start, end)?;
    let m = durations.len();
    let mut grad_c = vec![Vec3::zeros(); 6 * m];
    let mut grad_t = vec![0.0; m];
    let mut bd = CostBreakdown::default();
    let kappa = config.kappa;
    let use_map = config.lambda_s > 0.0 && !map.is_empty();
    let (v2, a2) = (config.v_lim * config.v_lim, config.a_lim * config.a_lim);

    for j in 0..m {
        let t_j = durations[j];
        let c = minco.piece(j);
        let gc = &mut grad_c[6 * j..6 * j + 6];
        let (energy, jerk_sq_end) = jerk_energy(c, t_j, gc);
        bd.smoothness += energy;
        grad_t[j] += jerk_sq_end + config.rho_time;
        bd.time += config.rho_time * t_j;

        let w = t_j / kappa as f64;
        for tau in 0..=kappa {
            let s = tau as f64 / kappa as f64;
            let t = s * t_j;
            let b0 = basis(t, 0);
            let b1 = basis(t, 1);
            let b2 = basis(t, 2);
            let pos = eval_basis(c, &b0);
            let vel = eval_basis(c, &b1);
            let acc = eval_basis(c, &b2);

            if use_map {
                if let Some(dq) = map.resdf_within(&pos, config.d_s) {
                    let g = config.d_s - dq.distance;
                    if g > 0.0 {
                        let pen = config.lambda_s * g * g * g;
                        let slope = config.lambda_s * 3.0 * g * g;
                        // ∂G/∂p is the negative distance gradient the map returns.
                        let f = dq.gradient;
                        bd.obstacle += w * pen;
                        for k in 0..6 {
                            gc[k] += f * (w * slope * b0[k]);
                        }
                        grad_t[j] += pen / kappa as f64 + w * slope * f.dot(&vel) * s;
                    }
                }
            }

            if config.lambda_v > 0.0 {
                let g = vel.norm_squared() - v2;
                if g > 0.0 {
                    let pen = config.lambda_v * g * g * g;
                    let slope = config.lambda_v * 3.0 * g * g;
                    bd.velocity += w * pen;
                    for k in 0..6 {
                        gc[k] += vel * (2.0 * w * slope * b1[k]);
                    }
                    grad_t[j] += pen / kappa as f64 + w * slope * 2.0 * vel.dot(&acc) * s;
                }
            }

            if config.lambda_a > 0.0 {
                let g = acc.norm_squared() - a2;
                if g > 0.0 {
                    let jerk = eval_basis(c, &basis(t, 3));
                    let pen = config.lambda_a * g * g * g;
                    let slope = config.lambda_a * 3.0 * g * g;
                    bd.acceleration += w * pen;
                    for k in 0..6 {
                        gc[k] += acc * (2.0 * w * slope * b2[k]);
                    }
                    grad_t[j] += pen / kappa as f64 + w * slope * 2.0 * acc.dot(&jerk) * s;
                }
            }
        }
    }
    let (grad_q, grad_t) = minco.propagate_gradient(&grad_c, &grad_t);
    Ok(CostEval {
        cost: bd.total(),
        breakdown: bd,
        grad_q,
        grad_t,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::MapConfig;
    use approx::assert_relative_eq;

    fn empty_map() -> LocalMap {
        LocalMap::new(MapConfig::default(), Vec3::zeros()).unwrap()
    }

    #[test]
    fn inactive_penalties_leave_jerk_and_time() {
        let config = TrajConfig {
            v_lim: 1e3,
            a_lim: 1e3,
            v_d: 5.0,
            ..TrajConfig::default()
        };
        let start = BoundaryState::rest(Vec3::zeros());
        let end = BoundaryState::rest(Vec3::new(1.0, 0.0, 0.0));
        let eval = cost_and_gradient(&[], &[1.0], &empty_map(), &start, &end, &config).unwrap();
        // x = 10t³ − 15t⁴ + 6t⁵ has jerk energy 720.
        assert_relative_eq!(eval.breakdown.smoothness, 720.0, epsilon = 1e-9);
        assert_relative_eq!(eval.breakdown.time, 100.0);
        assert_eq!(eval.breakdown.obstacle + eval.breakdown.velocity + eval.breakdown.acceleration, 0.0);
        assert_relative_eq!(eval.cost, 820.0, epsilon = 1e-9);
    }
}
