//! Trajectory generation: minimum-jerk piecewise quintics shaped by
//! penalty optimization over waypoints and piece durations.

mod alloc;
mod cost;
mod lbfgs;
mod minco;
mod plan;

pub use alloc::{allocate_constant, allocate_time, allocate_trapezoidal, sample_waypoints, TimeAllocation};
pub use cost::{cost_and_gradient, CostBreakdown, CostEval};
pub use lbfgs::{minimize, LbfgsParams, LbfgsResult, LbfgsStatus};
pub use minco::{minco_construct, BandedSystem, Minco, PiecewiseTrajectory};
pub use plan::{optimize, plan, plan_candidates, plan_with_ends, Candidate, select_best, CandidateSummary, OptimizationReport, PlanOutcome};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{is_finite, Vec3};

/// How initial piece durations are chosen before optimization.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeInit {
    /// Accelerate, cruise, decelerate over the whole reference.
    #[default]
    Adaptive,
    /// Every piece flown at the desired speed.
    Constant,
    /// Every piece accelerates from rest and decelerates back to rest.
    Trapezoidal,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrajConfig {
    /// Number of polynomial pieces.
    pub pieces: usize,
    /// Desired cruise speed (m/s).
    pub v_d: f64,
    /// Desired acceleration used by time allocation (m/s²).
    pub a_d: f64,
    pub v_lim: f64,
    pub a_lim: f64,
    /// Cruise-speed shrink factor for infeasible references.
    pub gamma: f64,
    /// Weight on total duration.
    pub rho_time: f64,
    pub lambda_s: f64,
    pub lambda_v: f64,
    pub lambda_a: f64,
    /// Penalty samples per piece.
    pub kappa: usize,
    /// Safety distance (m).
    pub d_s: f64,
    pub max_iters: usize,
    /// Stop when the gradient norm drops below this.
    pub grad_tolerance: f64,
    /// Also stop when the relative cost decrease over three iterations
    /// drops below this.
    pub cost_rel_tolerance: f64,
    /// Reference paths optimized per `plan` call.
    pub max_candidates: usize,
    pub time_init: TimeInit,
}

impl Default for TrajConfig {
    fn default() -> Self {
        Self {
            pieces: 8,
            v_d: 5.0,
            a_d: 6.0,
            v_lim: 5.0,
            a_lim: 10.0,
            gamma: 0.7,
            rho_time: 100.0,
            lambda_s: 1e6,
            lambda_v: 1e3,
            lambda_a: 1e3,
            kappa: 16,
            d_s: 0.4,
            max_iters: 200,
            grad_tolerance: 1e-3,
            cost_rel_tolerance: 1e-6,
            max_candidates: 10,
            time_init: TimeInit::Adaptive,
        }
    }
}

impl TrajConfig {
    /// Config flying at `v_lim` with cruise speed equal to the limit.
    pub fn with_speed(v_lim: f64) -> Self {
        Self {
            v_d: v_lim,
            v_lim,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.pieces == 0 {
            return bad("pieces must be at least 1");
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma must lie in (0, 1)");
        }
        if !(self.v_d > 0.0 && self.a_d > 0.0) {
            return bad("v_d and a_d must be positive");
        }
        if self.v_d > self.v_lim || self.a_d > self.a_lim {
            return bad("v_d must not exceed v_lim and a_d must not exceed a_lim");
        }
        if self.kappa < 2 {
            return bad("kappa must be at least 2");
        }
        let weights = [self.rho_time, self.lambda_s, self.lambda_v, self.lambda_a, self.d_s];
        if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return bad("weights and d_s must be finite and non-negative");
        }
        if self.max_candidates == 0 {
            return bad("max_candidates must be at least 1");
        }
        Ok(())
    }
}

/// Position, velocity and acceleration at one end of a trajectory.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryState {
    pub position: Vec3,
    pub velocity: Vec3,
    pub acceleration: Vec3,
}

impl BoundaryState {
    pub fn rest(position: Vec3) -> Self {
        Self {
            position,
            velocity: Vec3::zeros(),
            acceleration: Vec3::zeros(),
        }
    }

    pub fn new(position: Vec3, velocity: Vec3, acceleration: Vec3) -> Self {
        Self {
            position,
            velocity,
            acceleration,
        }
    }

    pub fn is_finite(&self) -> bool {
        is_finite(&self.position) && is_finite(&self.velocity) && is_finite(&self.acceleration)
    }
}
