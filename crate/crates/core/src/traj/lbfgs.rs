//! Limited-memory BFGS with Armijo backtracking.

use std::collections::VecDeque;

use nalgebra::DVector;
use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LbfgsParams {
    /// Number of correction pairs kept.
    pub memory: usize,
    pub max_iters: usize,
    /// Stop once the gradient norm falls below this.
    pub grad_tolerance: f64,
    /// Stop once `(f[k−past] − f[k]) / max(1, |f[k]|)` falls below this.
    pub rel_tolerance: f64,
    pub past: usize,
    /// Sufficient-decrease constant.
    pub armijo: f64,
    pub max_backtracks: usize,
}

impl Default for LbfgsParams {
    fn default() -> Self {
        Self {
            memory: 8,
            max_iters: 200,
            grad_tolerance: 1e-5,
            rel_tolerance: 1e-6,
            past: 3,
            armijo: 1e-4,
            max_backtracks: 40,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LbfgsStatus {
    GradientTolerance,
    CostStalled,
    MaxIterations,
    LineSearchFailed,
}

impl LbfgsStatus {
    pub fn converged(&self) -> bool {
        matches!(self, Self::GradientTolerance | Self::CostStalled)
    }
}

#[derive(Clone, Debug)]
pub struct LbfgsResult {
    pub x: DVector<f64>,
    pub cost: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub status: LbfgsStatus,
    /// Cost after every accepted step, starting with the initial point.
    pub history: Vec<f64>,
}

/// Minimizes `f`, which returns the cost and writes the gradient into its
/// second argument. Non-finite costs are treated as failed trial steps.
pub fn minimize<F>(mut f: F, x0: DVector<f64>, params: &LbfgsParams) -> LbfgsResult
where
    F: FnMut(&DVector<f64>, &mut DVector<f64>) -> f64,
{
    let n = x0.len();
    let mut x = x0;
    let mut g = DVector::zeros(n);
    let mut fx = f(&x, &mut g);
    let mut evaluations = 1;
    let mut history = vec![fx];
    let finish = |x, cost, iterations, evaluations, status, history| LbfgsResult {
        x,
        cost,
        iterations,
        evaluations,
        status,
        history,
    };
    if !fx.is_finite() {
        return finish(x, fx, 0, evaluations, LbfgsStatus::LineSearchFailed, history);
    }
    if g.norm() < params.grad_tolerance {
        return finish(x, fx, 0, evaluations, LbfgsStatus::GradientTolerance, history);
    }

    let mut pairs: VecDeque<(DVector<f64>, DVector<f64>, f64)> = VecDeque::with_capacity(params.memory);
    let mut d = -&g;
    let mut step0 = 1.0 / g.norm();
    let mut gn = DVector::zeros(n);
    for iter in 1..=params.max_iters {
        let mut dg = g.dot(&d);
        if dg >= 0.0 {
            pairs.clear();
            d = -&g;
            dg = -g.norm_squared();
            step0 = 1.0 / g.norm();
        }
        let mut step = step0;
        let mut accepted = None;
        for _ in 0..params.max_backtracks {
            let xn = &x + &d * step;
            let fnew = f(&xn, &mut gn);
            evaluations += 1;
            if fnew.is_finite() && fnew <= fx + params.armijo * step * dg {
                accepted = Some((xn, fnew));
                break;
            }
            step *= 0.5;
        }
        let Some((xn, fnew)) = accepted else {
            return finish(x, fx, iter - 1, evaluations, LbfgsStatus::LineSearchFailed, history);
        };
        let s = &xn - &x;
        let y = &gn - &g;
        let sy = s.dot(&y);
        if sy > 1e-12 * y.norm_squared().max(f64::MIN_POSITIVE) && sy > 0.0 {
            if pairs.len() == params.memory {
                pairs.pop_front();
            }
            pairs.push_back((s, y, 1.0 / sy));
        }
        x = xn;
        fx = fnew;
        std::mem::swap(&mut g, &mut gn);
        history.push(fx);

        if g.norm() < params.grad_tolerance {
            return finish(x, fx, iter, evaluations, LbfgsStatus::GradientTolerance, history);
        }
        if history.len() > params.past {
            let old = history[history.len() - 1 - params.past];
            if (old - fx) / fx.abs().max(1.0) < params.rel_tolerance {
                return finish(x, fx, iter, evaluations, LbfgsStatus::CostStalled, history);
            }
        }

        // Two-loop recursion.
        let mut r = -&g;
        let mut alphas = Vec::with_capacity(pairs.len());
        for (s, y, rho) in pairs.iter().rev() {
            let a = rho * s.dot(&r);
            r.axpy(-a, y, 1.0);
            alphas.push(a);
        }
        if let Some((s, y, _)) = pairs.back() {
            r *= s.dot(y) / y.norm_squared();
        }
        for ((s, y, rho), a) in pairs.iter().zip(alphas.iter().rev()) {
            let b = rho * y.dot(&r);
            r.axpy(a - b, s, 1.0);
        }
        d = r;
        step0 = 1.0;
    }
    finish(x, fx, params.max_iters, evaluations, LbfgsStatus::MaxIterations, history)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let f = |x: &DVector<f64>, g: &mut DVector<f64>| {
            let (a, b) = (x[0], x[1]);
            g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
            g[1] = 200.0 * (b - a * a);
            (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
        };
        let params = LbfgsParams {
            rel_tolerance: 0.0,
            grad_tolerance: 1e-8,
            max_iters: 500,
            ..LbfgsParams::default()
        };
        let res = minimize(f, DVector::from_vec(vec![-1.2, 1.0]), &params);
        assert_eq!(res.status, LbfgsStatus::GradientTolerance);
        assert!((res.x[0] - 1.0).abs() < 1e-6 && (res.x[1] - 1.0).abs() < 1e-6);
        assert!(res.history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn quadratic_converges_quickly() {
        let f = |x: &DVector<f64>, g: &mut DVector<f64>| {
            let mut c = 0.0;
            for i in 0..x.len() {
                let w = (i + 1) as f64;
                g[i] = 2.0 * w * (x[i] - 1.0);
                c += w * (x[i] - 1.0).powi(2);
            }
            c
        };
        let res = minimize(f, DVector::zeros(5), &LbfgsParams::default());
        assert!(res.status.converged());
        assert!(res.iterations < 30);
    }
}
