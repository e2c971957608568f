use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::alloc::{allocate_constant, allocate_time, allocate_trapezoidal, sample_waypoints};
use super::cost::{cost_and_gradient, CostBreakdown};
use super::lbfgs::{minimize, LbfgsParams};
use super::minco::{minco_construct, PiecewiseTrajectory};
use super::{BoundaryState, TimeInit, TrajConfig};
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::map::LocalMap;
use crate::topo::TopoPath;
use crate::SCHEMA_VERSION;

/// Smallest duration a piece can take.
const T_FLOOR: f64 = 1e-3;

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn tau_of(t: f64) -> f64 {
    let y = (t - T_FLOOR).max(1e-9);
    y + (-(-y).exp_m1()).ln()
}

fn duration_of(tau: f64) -> f64 {
    softplus(tau) + T_FLOOR
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizationReport {
    pub final_cost: f64,
    pub iterations: usize,
    pub converged: bool,
    pub cost_breakdown: CostBreakdown,
}

fn encode(q: &[Vec3], durations: &[f64]) -> DVector<f64> {
    let mut x = DVector::zeros(3 * q.len() + durations.len());
    for (i, p) in q.iter().enumerate() {
        x.fixed_rows_mut::<3>(3 * i).copy_from(p);
    }
    for (j, t) in durations.iter().enumerate() {
        x[3 * q.len() + j] = tau_of(*t);
    }
    x
}

fn decode(x: &DVector<f64>, pieces: usize) -> (Vec<Vec3>, Vec<f64>) {
    let nq = pieces - 1;
    let q = (0..nq).map(|i| Vec3::new(x[3 * i], x[3 * i + 1], x[3 * i + 2])).collect();
    let t = (0..pieces).map(|j| duration_of(x[3 * nq + j])).collect();
    (q, t)
}

/// Minimizes the trajectory cost over waypoints and (reparameterized,
/// always positive) durations.
pub fn optimize(
    q0: &[Vec3],
    t0: &[f64],
    map: &LocalMap,
    start: &BoundaryState,
    end: &BoundaryState,
    config: &TrajConfig,
) -> Result<(PiecewiseTrajectory, OptimizationReport)> {
    let pieces = t0.len();
    // Validates counts and durations up front.
    minco_construct(q0, t0, start, end)?;
    let nq = 3 * (pieces - 1);
    let objective = |x: &DVector<f64>, g: &mut DVector<f64>| -> f64 {
        let (q, t) = decode(x, pieces);
        let Ok(eval) = cost_and_gradient(&q, &t, map, start, end, config) else {
            return f64::INFINITY;
        };
        for (i, gq) in eval.grad_q.iter().enumerate() {
            g.fixed_rows_mut::<3>(3 * i).copy_from(gq);
        }
        for (j, gt) in eval.grad_t.iter().enumerate() {
            g[nq + j] = gt * sigmoid(x[nq + j]);
        }
        eval.cost
    };
    let params = LbfgsParams {
        max_iters: config.max_iters,
        grad_tolerance: config.grad_tolerance,
        rel_tolerance: config.cost_rel_tolerance,
        ..LbfgsParams::default()
    };
    let result = minimize(objective, encode(q0, t0), &params);
    let (q, t) = decode(&result.x, pieces);
    let eval = cost_and_gradient(&q, &t, map, start, end, config)?;
    let trajectory = minco_construct(&q, &t, start, end)?;
    let report = OptimizationReport {
        final_cost: eval.breakdown.total(),
        iterations: result.iterations,
        converged: result.status.converged(),
        cost_breakdown: eval.breakdown,
    };
    Ok((trajectory, report))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateSummary {
    pub index: usize,
    pub final_cost: f64,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanOutcome {
    pub trajectory: PiecewiseTrajectory,
    pub report: OptimizationReport,
    pub chosen_index: usize,
    pub candidates: Vec<CandidateSummary>,
}

impl PlanOutcome {
    /// Report document: the winner's report plus every candidate's cost.
    pub fn report_json(&self) -> serde_json::Value {
        serde_json::json!({
            "schema_version": SCHEMA_VERSION,
            "chosen_index": self.chosen_index,
            "report": self.report,
            "candidates": self.candidates,
        })
    }
}

/// Index of the cheapest converged candidate, or of the cheapest overall
/// when none converged. Ties go to the lowest index.
pub fn select_best(candidates: &[(f64, bool)]) -> Option<usize> {
    let pick = |want_converged: bool| {
        let mut best: Option<(usize, f64)> = None;
        for (i, &(cost, conv)) in candidates.iter().enumerate() {
            if (want_converged && !conv) || cost.is_nan() {
                continue;
            }
            if best.is_none_or(|(_, c)| cost < c) {
                best = Some((i, cost));
            }
        }
        best.map(|(i, _)| i)
    };
    pick(true).or_else(|| pick(false))
}

fn initial_durations(config: &TrajConfig, v0: f64, length: f64) -> Vec<f64> {
    match config.time_init {
        TimeInit::Adaptive => allocate_time(v0, config, length).durations,
        TimeInit::Constant => allocate_constant(config, length),
        TimeInit::Trapezoidal => allocate_trapezoidal(config, length),
    }
}

/// Optimizes one trajectory per reference path (up to
/// `config.max_candidates`) and keeps the cheapest.
pub fn plan(
    map: &LocalMap,
    paths: &[TopoPath],
    start: &BoundaryState,
    end: &BoundaryState,
    config: &TrajConfig,
) -> Result<PlanOutcome> {
    let ends = vec![*end; paths.len()];
    plan_with_ends(map, paths, start, &ends, config)
}

/// One optimized trajectory per reference path.
#[derive(Clone, Debug, PartialEq)]
pub struct Candidate {
    pub index: usize,
    pub trajectory: PiecewiseTrajectory,
    pub report: OptimizationReport,
}

/// Optimizes every reference (up to `config.max_candidates`) against its own
/// end state and returns them in selection order: converged ones by cost,
/// then the rest by cost.
pub fn plan_candidates(
    map: &LocalMap,
    paths: &[TopoPath],
    start: &BoundaryState,
    ends: &[BoundaryState],
    config: &TrajConfig,
) -> Result<Vec<Candidate>> {
    config.validate()?;
    if paths.is_empty() {
        return Err(Error::NoReferencePaths);
    }
    let v0 = start.velocity.norm();
    let mut out = Vec::new();
    let mut first_err = None;
    for ((index, path), end) in paths.iter().take(config.max_candidates).enumerate().zip(ends) {
        let (q, length) = sample_waypoints(&path.nodes, config.pieces);
        if !(length > 0.0) {
            first_err.get_or_insert(Error::DegeneratePiece(0.0));
            continue;
        }
        let t0 = initial_durations(config, v0, length);
        match optimize(&q, &t0, map, start, end, config) {
            Ok((trajectory, report)) => out.push(Candidate {
                index,
                trajectory,
                report,
            }),
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    if out.is_empty() {
        return Err(first_err.unwrap_or(Error::NoReferencePaths));
    }
    let mut order = Vec::with_capacity(out.len());
    let mut keys: Vec<(f64, bool)> = out.iter().map(|c| (c.report.final_cost, c.report.converged)).collect();
    while let Some(best) = select_best(&keys) {
        order.push(best);
        keys[best].0 = f64::NAN;
    }
    // Candidates with a NaN cost never get selected; keep them last.
    let unranked: Vec<usize> = (0..out.len()).filter(|i| !order.contains(i)).collect();
    order.extend(unranked);
    let mut slots: Vec<Option<Candidate>> = out.into_iter().map(Some).collect();
    Ok(order.into_iter().filter_map(|i| slots[i].take()).collect())
}

/// Like [`plan`], with a separate end state for each reference path.
pub fn plan_with_ends(
    map: &LocalMap,
    paths: &[TopoPath],
    start: &BoundaryState,
    ends: &[BoundaryState],
    config: &TrajConfig,
) -> Result<PlanOutcome> {
    let mut ranked = plan_candidates(map, paths, start, ends, config)?;
    let mut candidates: Vec<CandidateSummary> = ranked
        .iter()
        .map(|c| CandidateSummary {
            index: c.index,
            final_cost: c.report.final_cost,
            converged: c.report.converged,
            iterations: c.report.iterations,
        })
        .collect();
    candidates.sort_by_key(|c| c.index);
    let best = ranked.swap_remove(0);
    Ok(PlanOutcome {
        trajectory: best.trajectory,
        report: best.report,
        chosen_index: best.index,
        candidates,
    })
}
