//! Conservative time stepping of `∂_t f = ∂_j(ā_ij ∂_i f - b̄_j f)`.
//!
//! The spatial discretization is a lumped-mass finite element style form on
//! the node lattice. Each cell carries the average of `ā` over its eight
//! corners; its diffusion bilinear form is
//!
//! ```text
//! h³ [ Σ_i A_ii/4 Σ_{edges e ∥ i} δ_e u δ_e φ / h²  +  Σ_{i≠j} A_ij g_i(u) g_j(φ) ]
//! ```
//!
//! where `g_i` is the cell gradient (mean of the four edge differences).
//! By Jensen's inequality it dominates `h³ gᵀ A g ≥ 0`, so the assembled
//! stiffness `K` is symmetric positive semidefinite, and `K·1 = 0`. The
//! drift replaces each edge difference in that form by its exponentially
//! fitted counterpart against `w = -ā⁻¹ b̄`, so that any discrete `f` with
//! `ā ∇f = b̄ f` in the fitted sense (in particular a Maxwellian whose
//! coefficients satisfy `ā v + b̄ = 0`) is stationary. The difference
//! between the fitted and plain forms is applied explicitly. With
//! trapezoid masses `M` the scheme
//!
//! ```text
//! (M + dt K) f_{n+1} = M f_n + dt B(b̄) f_n
//! ```
//!
//! conserves the trapezoid mass up to the linear-solve residual; the cube
//! faces carry no flux.

use std::io;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coefficients::{drift_cell_correction, CoefficientEngine, CoefficientFields, CoefficientPath};
use crate::diagnostics::{DiagnosticsRecord, Monitors};
use crate::grid::{DistributionField, VelocityGrid};
use crate::scalar::Real;
use crate::tensor::{SymMat3, Vec3};

/// Max-norm growth within one step treated as loss of stability.
const BLOWUP_FACTOR: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Diffusion implicit with frozen coefficients, drift explicit.
    SemiImplicit,
    FullyExplicit,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    ZeroFlux,
}

/// Discretization of the drift flux `b̄ f` on cell edges.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftScheme {
    /// Exponentially fitted edge differences with `w = -ā⁻¹ b̄`; discrete
    /// Maxwellians with `ā v + b̄ = 0` are exactly stationary.
    #[default]
    Fitted,
    /// Edge average of `b̄ f`.
    Central,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig<R> {
    pub dt: R,
    pub t_final: R,
    pub scheme: Scheme,
    /// Relative ℓ¹ residual at which the implicit solve stops.
    pub linear_tol: R,
    pub coefficient_path: CoefficientPath,
    pub boundary: Boundary,
    /// Re-assemble the coefficients once from the provisional update.
    pub picard: bool,
    #[serde(default)]
    pub drift: DriftScheme,
    /// Keep every `snapshot_stride`-th step in the trajectory.
    pub snapshot_stride: usize,
}

impl<R: Real> SolverConfig<R> {
    pub fn new(dt: R, t_final: R) -> Self {
        Self {
            dt,
            t_final,
            scheme: Scheme::SemiImplicit,
            linear_tol: R::lit(1e-10),
            coefficient_path: CoefficientPath::Fast,
            boundary: Boundary::ZeroFlux,
            picard: false,
            drift: DriftScheme::Fitted,
            snapshot_stride: 1,
        }
    }

    pub fn validate(&self) -> Result<(), StepError> {
        let mut problems = Vec::new();
        if !(self.dt > R::zero()) {
            problems.push(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.t_final >= R::zero()) {
            problems.push(format!("t_final must be nonnegative, got {}", self.t_final));
        }
        if !(self.linear_tol > R::zero() && self.linear_tol <= R::lit(1e-4)) {
            problems.push(format!("linear_tol must lie in (0, 1e-4], got {}", self.linear_tol));
        }
        if self.snapshot_stride == 0 {
            problems.push("snapshot_stride must be at least 1".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(StepError::Config(problems.join("; ")))
        }
    }

    /// Number of steps to reach `t_final`.
    pub fn steps(&self) -> usize {
        (self.t_final / self.dt).round().to_usize().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StepError {
    #[error("linear solve stalled after {iterations} iterations at relative residual {residual:e}")]
    LinearSolve { iterations: usize, residual: f64 },
    #[error("non-finite value at node {node}")]
    NonFinite { node: usize },
    #[error("max norm grew from {before:e} to {after:e} in one step")]
    BlowUp { before: f64, after: f64 },
    #[error("invalid solver configuration: {0}")]
    Config(String),
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Step(#[from] StepError),
    #[error("writing run output failed: {0}")]
    Io(#[from] io::Error),
}

#[derive(Clone, Debug)]
pub struct StepOutcome<R> {
    pub field: DistributionField<R>,
    /// Relative ℓ¹ residual of the implicit solve; zero for the explicit
    /// scheme.
    pub linear_residual: R,
    pub iterations: usize,
}

/// Stiffness `K` of the divergence-form diffusion with cell-averaged `ā`.
pub struct DiffusionOperator<R> {
    grid: VelocityGrid<R>,
    cells: Vec<SymMat3<R>>,
    diag: Vec<R>,
}

#[inline]
fn sign<R: Real>(upper: usize) -> R {
    if upper == 1 {
        R::one()
    } else {
        -R::one()
    }
}

impl<R: Real> DiffusionOperator<R> {
    pub fn new(grid: VelocityGrid<R>, abar: &[SymMat3<R>]) -> Self {
        let n = grid.n();
        let m = n - 1;
        let eighth = R::lit(0.125);
        let cells: Vec<SymMat3<R>> = (0..m * m * m)
            .into_par_iter()
            .map(|c| {
                let base = cell_base(n, c);
                let mut acc = SymMat3::zero();
                for corner in 0..8 {
                    acc += abar[base + corner_offset(n, corner)];
                }
                acc.scale(eighth)
            })
            .collect();
        let h = grid.spacing();
        let quarter = R::lit(0.25);
        let diag = (0..grid.len())
            .into_par_iter()
            .map(|p| {
                let mut d = R::zero();
                for_each_cell_of(n, p, |c, (a, b, cc)| {
                    let s = [sign::<R>(a), sign::<R>(b), sign::<R>(cc)];
                    let am = &cells[c];
                    let cross = am.xy * s[0] * s[1] + am.xz * s[0] * s[2] + am.yz * s[1] * s[2];
                    d = d + h * quarter * am.trace() + h * eighth * cross;
                });
                d
            })
            .collect();
        Self { grid, cells, diag }
    }

    pub fn diagonal(&self) -> &[R] {
        &self.diag
    }

    /// `K u`.
    pub fn apply(&self, u: &[R]) -> Vec<R> {
        self.apply_edges(|(p0, p1), _| u[p1] - u[p0])
    }

    /// Drift contribution `(K - K_w) f`, where `K_w` is `K` with every edge
    /// difference `f₁ - f₀` replaced by its exponentially fitted version
    /// `B(-s) f₁ - B(s) f₀`, `s = h w_i` at the edge midpoint and
    /// `B(x) = x / (eˣ - 1)`.
    pub fn fitted_drift(&self, f: &[R], w: &[Vec3<R>]) -> Vec<R> {
        let h = self.grid.spacing();
        let half = R::lit(0.5);
        self.apply_edges(|(p0, p1), axis| {
            let s = h * half * (w[p0][axis] + w[p1][axis]);
            let (bm, bp) = (bernoulli(-s), bernoulli(s));
            // -(σ - δ): the fitted part moved to the right-hand side
            -((bm - R::one()) * f[p1] - (bp - R::one()) * f[p0])
        })
    }

    /// Assembles `Σ_cells` fluxes from per-edge differences `diff((p0, p1),
    /// axis)` and gathers them onto nodes.
    fn apply_edges<F>(&self, diff: F) -> Vec<R>
    where
        F: Fn((usize, usize), usize) -> R + Sync,
    {
        let n = self.grid.n();
        let h = self.grid.spacing();
        let quarter = R::lit(0.25);
        let stride = [1, n, n * n];
        let fluxes: Vec<[R; 12]> = self
            .cells
            .par_iter()
            .enumerate()
            .map(|(c, am)| {
                let base = cell_base(n, c);
                let at = |a: usize, b: usize, cc: usize| base + a + n * (b + n * cc);
                let mut d = [[R::zero(); 4]; 3];
                for s in 0..2 {
                    for t in 0..2 {
                        let (px, py, pz) = (at(0, s, t), at(s, 0, t), at(s, t, 0));
                        d[0][s + 2 * t] = diff((px, px + stride[0]), 0);
                        d[1][s + 2 * t] = diff((py, py + stride[1]), 1);
                        d[2][s + 2 * t] = diff((pz, pz + stride[2]), 2);
                    }
                }
                let mean = |d: &[R; 4]| (d[0] + d[1] + d[2] + d[3]) * quarter;
                let (gx, gy, gz) = (mean(&d[0]), mean(&d[1]), mean(&d[2]));
                let cx = (am.xy * gy + am.xz * gz) * h * quarter;
                let cy = (am.xy * gx + am.yz * gz) * h * quarter;
                let cz = (am.xz * gx + am.yz * gy) * h * quarter;
                let mut out = [R::zero(); 12];
                for e in 0..4 {
                    out[e] = h * quarter * am.xx * d[0][e] + cx;
                    out[4 + e] = h * quarter * am.yy * d[1][e] + cy;
                    out[8 + e] = h * quarter * am.zz * d[2][e] + cz;
                }
                out
            })
            .collect();
        gather_edges(n, &fluxes)
    }
}

/// `x / (eˣ - 1)`, continuous at 0.
#[inline]
fn bernoulli<R: Real>(x: R) -> R {
    if x.abs() < R::lit(1e-5) {
        R::one() - x * R::lit(0.5) + x * x / R::lit(12.0)
    } else {
        x / x.exp_m1()
    }
}

/// `w = -ā⁻¹ (b̄ + δb)` per node, zero where `ā` is numerically singular.
pub fn fitting_field<R: Real>(abar: &[SymMat3<R>], bbar: &[Vec3<R>], db: &[Vec3<R>]) -> Vec<Vec3<R>> {
    abar.par_iter()
        .zip(bbar)
        .zip(db)
        .map(|((a, b), d)| a.solve(-(*b + *d), R::lit(1e-12)).unwrap_or_else(Vec3::zero))
        .collect()
}

#[inline]
fn cell_base(n: usize, c: usize) -> usize {
    let m = n - 1;
    let (i, j, k) = (c % m, (c / m) % m, c / (m * m));
    i + n * (j + n * k)
}

#[inline]
fn corner_offset(n: usize, corner: usize) -> usize {
    (corner & 1) + n * ((corner >> 1) & 1) + n * n * ((corner >> 2) & 1)
}

/// Visits every cell containing node `p` with the node's corner position
/// `(a, b, c)` inside that cell.
#[inline]
fn for_each_cell_of(n: usize, p: usize, mut visit: impl FnMut(usize, (usize, usize, usize))) {
    let m = n - 1;
    let (i, j, k) = (p % n, (p / n) % n, p / (n * n));
    for c in 0..2usize {
        if (c == 1 && k == 0) || (c == 0 && k == m) {
            continue;
        }
        for b in 0..2usize {
            if (b == 1 && j == 0) || (b == 0 && j == m) {
                continue;
            }
            for a in 0..2usize {
                if (a == 1 && i == 0) || (a == 0 && i == m) {
                    continue;
                }
                let cell = (i - a) + m * ((j - b) + m * (k - c));
                visit(cell, (a, b, c));
            }
        }
    }
}

/// Scatters per-cell edge fluxes `[x(b,c) ×4, y(a,c) ×4, z(a,b) ×4]` onto
/// nodes with the sign of the node's end of each edge.
fn gather_edges<R: Real>(n: usize, fluxes: &[[R; 12]]) -> Vec<R> {
    (0..n * n * n)
        .into_par_iter()
        .map(|p| {
            let mut acc = R::zero();
            for_each_cell_of(n, p, |c, (a, b, cc)| {
                let f = &fluxes[c];
                acc = acc
                    + sign::<R>(a) * f[b + 2 * cc]
                    + sign::<R>(b) * f[4 + a + 2 * cc]
                    + sign::<R>(cc) * f[8 + a + 2 * b];
            });
            acc
        })
        .collect()
}

/// `B f`: weak-form drift `∫ b̄_i f ∂_i φ` on cell edges.
pub fn drift_term<R: Real>(grid: &VelocityGrid<R>, bbar: &[Vec3<R>], f: &[R]) -> Vec<R> {
    let n = grid.n();
    let m = n - 1;
    let h = grid.spacing();
    let w = h * h * R::lit(0.125);
    let flux: Vec<Vec3<R>> = bbar.iter().zip(f).map(|(b, &v)| *b * v).collect();
    let fluxes: Vec<[R; 12]> = (0..m * m * m)
        .into_par_iter()
        .map(|c| {
            let base = cell_base(n, c);
            let at = |a: usize, b: usize, cc: usize| flux[base + a + n * (b + n * cc)];
            let mut out = [R::zero(); 12];
            for s in 0..2 {
                for t in 0..2 {
                    out[s + 2 * t] = (at(0, s, t).x + at(1, s, t).x) * w;
                    out[4 + s + 2 * t] = (at(s, 0, t).y + at(s, 1, t).y) * w;
                    out[8 + s + 2 * t] = (at(s, t, 0).z + at(s, t, 1).z) * w;
                }
            }
            out
        })
        .collect();
    gather_edges(n, &fluxes)
}

/// Deterministic ℓ¹ norm: fixed-size chunks summed in order.
fn l1<R: Real>(v: &[R]) -> R {
    v.par_chunks(4096)
        .map(|c| c.iter().fold(R::zero(), |a, x| a + x.abs()))
        .collect::<Vec<_>>()
        .into_iter()
        .fold(R::zero(), |a, x| a + x)
}

fn dot<R: Real>(a: &[R], b: &[R]) -> R {
    a.par_chunks(4096)
        .zip(b.par_chunks(4096))
        .map(|(x, y)| x.iter().zip(y).fold(R::zero(), |s, (p, q)| s + *p * *q))
        .collect::<Vec<_>>()
        .into_iter()
        .fold(R::zero(), |a, x| a + x)
}

/// Jacobi-preconditioned conjugate gradients for `(M + dt K) x = rhs`,
/// stopping on the relative ℓ¹ residual.
fn solve_implicit<R: Real>(
    mass: &[R],
    op: &DiffusionOperator<R>,
    dt: R,
    rhs: &[R],
    guess: Vec<R>,
    tol: R,
    max_iter: usize,
) -> Result<(Vec<R>, R, usize), StepError> {
    let apply = |u: &[R]| -> Vec<R> {
        let ku = op.apply(u);
        u.iter()
            .zip(mass)
            .zip(ku)
            .map(|((&x, &m), k)| m * x + dt * k)
            .collect()
    };
    let precond: Vec<R> = mass
        .iter()
        .zip(op.diagonal())
        .map(|(&m, &d)| (m + dt * d).recip())
        .collect();
    let rhs_norm = l1(rhs);
    if rhs_norm == R::zero() {
        return Ok((vec![R::zero(); rhs.len()], R::zero(), 0));
    }
    let mut x = guess;
    let ax = apply(&x);
    let mut r: Vec<R> = rhs.iter().zip(&ax).map(|(b, a)| *b - *a).collect();
    let mut res = l1(&r) / rhs_norm;
    if res <= tol {
        return Ok((x, res, 0));
    }
    let mut z: Vec<R> = r.iter().zip(&precond).map(|(a, b)| *a * *b).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for it in 1..=max_iter {
        let ap = apply(&p);
        let alpha = rz / dot(&p, &ap);
        x.par_iter_mut().zip(&p).for_each(|(xi, pi)| *xi = *xi + alpha * *pi);
        r.par_iter_mut().zip(&ap).for_each(|(ri, api)| *ri = *ri - alpha * *api);
        res = l1(&r) / rhs_norm;
        if !res.is_finite() {
            break;
        }
        if res <= tol {
            return Ok((x, res, it));
        }
        z = r.iter().zip(&precond).map(|(a, b)| *a * *b).collect();
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        p.par_iter_mut().zip(&z).for_each(|(pi, zi)| *pi = *zi + beta * *pi);
    }
    Err(StepError::LinearSolve { iterations: max_iter, residual: res.as_f64() })
}

/// Owns the per-grid state (trapezoid masses, spectral kernel tables) and
/// advances fields one step at a time.
pub struct Stepper<R: Real> {
    grid: VelocityGrid<R>,
    cfg: SolverConfig<R>,
    mass: Vec<R>,
    engine: Option<CoefficientEngine<R>>,
}

impl<R: Real> Stepper<R> {
    pub fn new(grid: VelocityGrid<R>, cfg: SolverConfig<R>) -> Result<Self, StepError> {
        cfg.validate()?;
        let engine = match cfg.coefficient_path {
            CoefficientPath::Fast => Some(CoefficientEngine::new(grid)),
            CoefficientPath::Direct => None,
        };
        Ok(Self { grid, cfg, mass: grid.trapezoid_weights(), engine })
    }

    pub fn config(&self) -> &SolverConfig<R> {
        &self.cfg
    }

    pub fn grid(&self) -> &VelocityGrid<R> {
        &self.grid
    }

    pub fn max_iterations(&self) -> usize {
        10 * self.grid.n()
    }

    pub fn coefficients(&self, f: &DistributionField<R>) -> CoefficientFields<R> {
        match &self.engine {
            Some(e) => e.compute(&f.values),
            None => CoefficientFields::direct(&self.grid, &f.values),
        }
    }

    /// One step with freshly assembled coefficients.
    pub fn step(&self, f: &DistributionField<R>) -> Result<StepOutcome<R>, StepError> {
        let c = self.coefficients(f);
        self.step_with(f, &c)
    }

    /// One step with coefficients already assembled from `f`.
    pub fn step_with(
        &self,
        f: &DistributionField<R>,
        coeff: &CoefficientFields<R>,
    ) -> Result<StepOutcome<R>, StepError> {
        let first = self.advance(f, coeff)?;
        if !self.cfg.picard {
            return Ok(first);
        }
        let c1 = self.coefficients(&first.field);
        self.advance(f, &c1)
    }

    fn advance(
        &self,
        f: &DistributionField<R>,
        coeff: &CoefficientFields<R>,
    ) -> Result<StepOutcome<R>, StepError> {
        let dt = self.cfg.dt;
        let op = DiffusionOperator::new(self.grid, &coeff.abar);
        let drift = match self.cfg.drift {
            DriftScheme::Fitted => {
                let corr = drift_cell_correction(&self.grid, &f.values);
                let w = fitting_field(&coeff.abar, &coeff.bbar, &corr);
                op.fitted_drift(&f.values, &w)
            }
            DriftScheme::Central => drift_term(&self.grid, &coeff.bbar, &f.values),
        };
        let (values, residual, iterations) = match self.cfg.scheme {
            Scheme::SemiImplicit => {
                let rhs: Vec<R> = f
                    .values
                    .iter()
                    .zip(&self.mass)
                    .zip(&drift)
                    .map(|((&v, &m), &d)| m * v + dt * d)
                    .collect();
                solve_implicit(
                    &self.mass,
                    &op,
                    dt,
                    &rhs,
                    f.values.clone(),
                    self.cfg.linear_tol,
                    self.max_iterations(),
                )?
            }
            Scheme::FullyExplicit => {
                let ku = op.apply(&f.values);
                let v = f
                    .values
                    .iter()
                    .zip(&self.mass)
                    .zip(ku.iter().zip(&drift))
                    .map(|((&v, &m), (&k, &d))| v + dt * (d - k) / m)
                    .collect();
                (v, R::zero(), 0)
            }
        };
        if let Some(node) = values.iter().position(|v| !v.is_finite()) {
            return Err(StepError::NonFinite { node });
        }
        let before = f.max_abs();
        let after = values.iter().fold(R::zero(), |m, v| m.max(v.abs()));
        if after > R::lit(BLOWUP_FACTOR) * before {
            return Err(StepError::BlowUp { before: before.as_f64(), after: after.as_f64() });
        }
        Ok(StepOutcome {
            field: DistributionField { grid: self.grid, values, time: f.time + dt },
            linear_residual: residual,
            iterations,
        })
    }
}

/// Snapshots `t ↦ f(t, ·)` at strictly increasing times.
#[derive(Clone, Debug, Default)]
pub struct Trajectory<R> {
    pub snapshots: Vec<DistributionField<R>>,
}

impl<R: Real> Trajectory<R> {
    pub fn new() -> Self {
        Self { snapshots: Vec::new() }
    }

    pub fn push(&mut self, f: DistributionField<R>) {
        if let Some(last) = self.snapshots.last() {
            assert!(f.time > last.time, "trajectory times must increase");
        }
        self.snapshots.push(f);
    }

    pub fn times(&self) -> Vec<R> {
        self.snapshots.iter().map(|f| f.time).collect()
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn last(&self) -> Option<&DistributionField<R>> {
        self.snapshots.last()
    }
}

/// Receives run output as it is produced.
pub trait RunObserver<R> {
    fn on_record(&mut self, _record: &DiagnosticsRecord<R>) -> io::Result<()> {
        Ok(())
    }
    fn on_snapshot(&mut self, _field: &DistributionField<R>) -> io::Result<()> {
        Ok(())
    }
}

/// Discards everything.
pub struct NoObserver;

impl<R> RunObserver<R> for NoObserver {}

pub struct RunOutput<R> {
    pub trajectory: Trajectory<R>,
    /// Functionals of the initial data.
    pub initial: DiagnosticsRecord<R>,
    /// One record per completed step.
    pub records: Vec<DiagnosticsRecord<R>>,
    /// Set when the run stopped before `t_final`.
    pub error: Option<RunError>,
}

/// Iterates [`Stepper::step_with`] to `t_final`, recording diagnostics
/// after every step and snapshots every `snapshot_stride` steps and at
/// the end. Stops at the first error with everything produced so far.
pub fn run<R: Real>(
    f0: &DistributionField<R>,
    cfg: &SolverConfig<R>,
    monitors: &Monitors<R>,
    observer: &mut dyn RunObserver<R>,
) -> Result<RunOutput<R>, StepError> {
    let stepper = Stepper::new(f0.grid, *cfg)?;
    run_with(&stepper, f0, monitors, observer)
}

pub fn run_with<R: Real>(
    stepper: &Stepper<R>,
    f0: &DistributionField<R>,
    monitors: &Monitors<R>,
    observer: &mut dyn RunObserver<R>,
) -> Result<RunOutput<R>, StepError> {
    let cfg = stepper.config();
    let steps = cfg.steps();
    let mut f = f0.clone();
    let mut coeff = stepper.coefficients(&f);
    let initial = DiagnosticsRecord::evaluate(&f, &coeff, monitors, R::zero());
    let mut out = RunOutput {
        trajectory: Trajectory::new(),
        initial,
        records: Vec::with_capacity(steps),
        error: None,
    };
    out.trajectory.push(f.clone());
    if let Err(e) = observer.on_snapshot(&f) {
        out.error = Some(e.into());
        return Ok(out);
    }
    for k in 1..=steps {
        let outcome = match stepper.step_with(&f, &coeff) {
            Ok(o) => o,
            Err(e) => {
                out.error = Some(e.into());
                break;
            }
        };
        f = outcome.field;
        f.time = f0.time + R::of_usize(k) * cfg.dt;
        coeff = stepper.coefficients(&f);
        let record = DiagnosticsRecord::evaluate(&f, &coeff, monitors, outcome.linear_residual);
        let written = observer.on_record(&record);
        out.records.push(record);
        if let Err(e) = written {
            out.error = Some(e.into());
            break;
        }
        if k % cfg.snapshot_stride == 0 || k == steps {
            out.trajectory.push(f.clone());
            if let Err(e) = observer.on_snapshot(&f) {
                out.error = Some(e.into());
                break;
            }
        }
    }
    Ok(out)
}

/// `‖∂_t f - ā_ij ∂_ij f - 8π f²‖_{L²}` over interior nodes, with `∂_t f`
/// from two consecutive fields and the coefficients of the later one.
pub fn nondivergence_residual<R: Real>(
    prev: &DistributionField<R>,
    next: &DistributionField<R>,
    coeff: &CoefficientFields<R>,
) -> R {
    let grid = &next.grid;
    let dt = next.time - prev.time;
    let eight_pi = R::lit(8.0) * R::PI();
    let diff = grid.hessian_apply(&coeff.abar, &next.values);
    let sum: R = (0..grid.len())
        .filter(|&p| grid.is_interior(p))
        .map(|p| {
            let f = next.values[p];
            let r = (f - prev.values[p]) / dt - diff[p] - eight_pi * f * f;
            r * r
        })
        .sum();
    (sum * grid.cell_volume()).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Ball;
    use crate::profiles::{Maxwellian, Profile};

    fn grid(n: usize) -> VelocityGrid<f64> {
        VelocityGrid::new(n, 8.0).unwrap()
    }

    #[test]
    fn stiffness_is_symmetric_psd_and_conservative() {
        let g = VelocityGrid::<f64>::new(9, 2.0).unwrap();
        let f = Profile::Maxwellian(Maxwellian::new(1.0, Vec3::new(0.3, 0.0, -0.2), 0.5)).sample(g);
        let c = CoefficientFields::direct(&g, &f.values);
        let op = DiffusionOperator::new(g, &c.abar);
        let ones = vec![1.0; g.len()];
        assert!(op.apply(&ones).iter().all(|v| v.abs() < 1e-12));
        let u: Vec<f64> = g.points().map(|v| (v.x * 1.3).sin() + v.y * v.z).collect();
        let w: Vec<f64> = g.points().map(|v| (v.y - 0.4 * v.x).cos()).collect();
        let (ku, kw) = (op.apply(&u), op.apply(&w));
        let (a, b) = (dot(&w, &ku), dot(&u, &kw));
        assert!((a - b).abs() < 1e-10 * a.abs().max(1.0));
        assert!(dot(&u, &ku) > 0.0);
        // diagonal agrees with K e_p
        for p in [0, 40, g.len() / 2, g.len() - 1] {
            let mut e = vec![0.0; g.len()];
            e[p] = 1.0;
            assert!((op.apply(&e)[p] - op.diagonal()[p]).abs() < 1e-12);
        }
    }

    #[test]
    fn drift_conserves_mass_and_is_central() {
        let g = grid(11);
        let f = Profile::Maxwellian(Maxwellian::standard()).sample(g);
        let b: Vec<Vec3<f64>> = g.points().map(|v| Vec3::new(v.y, 1.0, -v.x)).collect();
        let d = drift_term(&g, &b, &f.values);
        let total: f64 = d.iter().sum();
        assert!(total.abs() < 1e-14);
        let flux: Vec<Vec3<f64>> = b.iter().zip(&f.values).map(|(b, v)| *b * *v).collect();
        let div = g.divergence(&flux);
        let p = g.index(5, 4, 6);
        assert!((d[p] / g.cell_volume() + div[p]).abs() < 1e-13);
    }

    #[test]
    fn fitted_drift_balances_maxwellian_exactly() {
        // ā = c(v) I and b̄ = -c(v) v satisfy ā v + b̄ = 0, so the fitted
        // flux of the unit-temperature Maxwellian vanishes edge by edge.
        let g = grid(17);
        let f = Profile::Maxwellian(Maxwellian::standard()).sample(g);
        let c = |v: Vec3<f64>| 1.0 / (1.0 + v.norm_squared()).sqrt();
        let abar: Vec<SymMat3<f64>> = g.points().map(|v| SymMat3::scalar(c(v))).collect();
        let bbar: Vec<Vec3<f64>> = g.points().map(|v| v * -c(v)).collect();
        let op = DiffusionOperator::new(g, &abar);
        let w = fitting_field(&abar, &bbar, &vec![Vec3::zero(); g.len()]);
        let net: Vec<f64> = op.fitted_drift(&f.values, &w).iter().zip(op.apply(&f.values)).map(|(d, k)| d - k).collect();
        let scale = op.apply(&f.values).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(net.iter().all(|v| v.abs() < 1e-13 * scale), "{scale}");
        assert!(op.fitted_drift(&f.values, &w).iter().sum::<f64>().abs() < 1e-15);
    }

    #[test]
    fn fitted_and_central_drifts_agree_to_second_order() {
        let err = |n: usize| {
            let g = grid(n);
            let f = Profile::Maxwellian(Maxwellian::new(1.0, Vec3::new(0.4, 0.0, -0.3), 1.5)).sample(g);
            let abar: Vec<SymMat3<f64>> = g.points().map(|v| SymMat3::diag(1.0, 0.8, 1.2 + 0.1 * v.x.tanh())).collect();
            let bbar: Vec<Vec3<f64>> = g.points().map(|v| Vec3::new(v.y.sin(), 0.5, -0.2 * v.z)).collect();
            let op = DiffusionOperator::new(g, &abar);
            let fit = op.fitted_drift(&f.values, &fitting_field(&abar, &bbar, &vec![Vec3::zero(); g.len()]));
            let cen = drift_term(&g, &bbar, &f.values);
            let d: f64 = fit.iter().zip(&cen).map(|(a, b)| (a - b).abs()).sum();
            let s: f64 = cen.iter().map(|v| v.abs()).sum();
            d / s
        };
        let (a, b) = (err(17), err(33));
        assert!(a / b > 3.0, "{a} {b}");
    }

    #[test]
    fn step_conserves_mass() {
        let g = grid(17);
        let f = Profile::Maxwellian(Maxwellian::new(1.0, Vec3::new(0.5, 0.0, 0.0), 0.8)).sample(g);
        let cfg = SolverConfig::new(1e-2, 1e-2);
        let s = Stepper::new(g, cfg).unwrap();
        let out = s.step(&f).unwrap();
        let (m0, m1) = (f.mass(), out.field.mass());
        assert!((m1 - m0).abs() <= 10.0 * cfg.linear_tol * m0, "{m0} {m1}");
        assert!(out.linear_residual <= cfg.linear_tol);
        assert!(out.iterations > 0);
    }

    #[test]
    fn explicit_blow_up_is_detected() {
        let g = grid(17);
        let f = Profile::Maxwellian(Maxwellian::standard()).sample(g);
        let mut cfg = SolverConfig::new(5.0, 100.0);
        cfg.scheme = Scheme::FullyExplicit;
        let monitors = Monitors::new(4.0, Ball::centered(2.0));
        let out = run(&f, &cfg, &monitors, &mut NoObserver).unwrap();
        assert!(matches!(out.error, Some(RunError::Step(StepError::BlowUp { .. }))));
        assert!(out.records.len() < cfg.steps());
    }

    #[test]
    fn zero_data_stays_zero() {
        let g = grid(9);
        let f = DistributionField::zeros(g);
        let cfg = SolverConfig::new(1e-3, 5e-3);
        let out = run(&f, &cfg, &Monitors::new(4.0, Ball::centered(2.0)), &mut NoObserver).unwrap();
        assert!(out.error.is_none());
        assert_eq!(out.records.len(), 5);
        assert!(out.trajectory.snapshots.iter().all(|s| s.values.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn rejects_bad_configs() {
        let mut cfg = SolverConfig::<f64>::new(0.0, 1.0);
        cfg.linear_tol = 1e-2;
        match cfg.validate() {
            Err(StepError::Config(msg)) => {
                assert!(msg.contains("dt") && msg.contains("linear_tol"));
            }
            other => panic!("{other:?}"),
        }
    }
}
