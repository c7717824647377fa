//! `landau norms`: diagnostics and Hölder data from stored snapshots.

use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use landau_core::coefficients::CoefficientEngine;
use landau_core::diagnostics::holder::{holder_1plus, regularity_verdict, HolderOptions, PairMode};
use landau_core::diagnostics::{DiagnosticsRecord, Monitors};
use landau_core::grid::{Ball, Cylinder};
use landau_core::solver::Trajectory;

use crate::run::{load_snapshots, CliError, SNAPSHOT_DIR};
use crate::scenario::default_inner;

#[derive(Clone, Debug)]
pub struct NormsRequest {
    pub alpha: f64,
    pub q: f64,
    pub radius: f64,
    pub budget: usize,
    pub seed: u64,
}

/// Accepts either a snapshot directory or a run directory holding one.
pub fn resolve_snapshot_dir(dir: &Path) -> PathBuf {
    let nested = dir.join(SNAPSHOT_DIR);
    if nested.is_dir() {
        nested
    } else {
        dir.to_path_buf()
    }
}

fn check(req: &NormsRequest) -> Result<(), CliError> {
    let mut problems = Vec::new();
    if !(req.alpha > 0.0 && req.alpha < 1.0) {
        problems.push(format!("--alpha must lie in (0, 1), got {}", req.alpha));
    }
    if !(req.q > 3.0) {
        problems.push(format!("--q must exceed 3, got {}", req.q));
    }
    if !(req.radius > 0.0) {
        problems.push(format!("--radius must be positive, got {}", req.radius));
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(CliError::Argument(problems.join("; ")))
    }
}

pub fn norms_document(traj: &Trajectory<f64>, req: &NormsRequest) -> Result<Value, CliError> {
    check(req)?;
    if traj.len() < 2 {
        return Err(CliError::Argument(format!("need at least 2 snapshots, found {}", traj.len())));
    }
    let grid = traj.snapshots[0].grid;
    let ball = Ball::centered(req.radius);
    if !grid.contains_ball(&ball) {
        return Err(CliError::Argument(format!("ball of radius {} leaves the grid cube", req.radius)));
    }
    let times = traj.times();
    let outer = Cylinder::new(times[0], times[times.len() - 1], ball.center, ball.radius)
        .map_err(|e| CliError::Argument(e.to_string()))?;
    let inner = default_inner(&outer);

    let engine = CoefficientEngine::new(grid);
    let monitors = Monitors::new(req.q, ball);
    let records: Vec<DiagnosticsRecord<f64>> = traj
        .snapshots
        .iter()
        .map(|f| DiagnosticsRecord::evaluate(f, &engine.compute(&f.values), &monitors, 0.0))
        .collect();

    let opts = HolderOptions::new(req.alpha, PairMode::Sampled { budget: req.budget, seed: req.seed });
    let holder = holder_1plus(traj, outer, &opts).map_err(|e| CliError::Argument(e.to_string()))?;
    let verdict =
        regularity_verdict(traj, outer, inner, req.q, &opts).map_err(|e| CliError::Argument(e.to_string()))?;
    Ok(json!({
        "snapshots": traj.len(),
        "records": records,
        "holder": { "report": holder, "holder_norm": holder.holder_norm(), "holder_1plus_norm": holder.holder_1plus_norm() },
        "regularity": verdict,
    }))
}

pub fn norms(dir: &Path, req: &NormsRequest) -> Result<Value, CliError> {
    norms_document(&load_snapshots(&resolve_snapshot_dir(dir))?, req)
}
