//! Parabolic Hölder quotients of computed solutions on a space-time
//! cylinder.
//!
//! A true supremum over pairs is quadratic in the number of samples, so
//! pairs are either enumerated exhaustively (small grids only) or sampled.
//! The sampled estimate visits every pair on a common grid line (or at a
//! common node), a seeded random sample, and then hill-climbs from the best
//! of those. Random pairs are drawn in fixed-size chunks, each from its own
//! ChaCha stream, so the sample for budget `B` is a prefix of the sample
//! for any larger budget and does not depend on the thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::DiagnosticsError;
use crate::grid::{Cylinder, DistributionField, VelocityGrid};
use crate::scalar::Real;
use crate::solver::Trajectory;
use crate::tensor::Vec3;

const CHUNK: usize = 4096;
const ABSENT: u32 = u32::MAX;
/// Best structured pairs used as hill-climb starts.
const CLIMB_STARTS: usize = 64;
const CLIMB_STEPS: usize = 256;
/// Largest grid on which exhaustive enumeration is allowed.
pub const EXHAUSTIVE_MAX_N: usize = 17;
pub const DEFAULT_BUDGET: usize = 100_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PairMode {
    /// Grid-line and same-node pairs, `budget` seeded random pairs and a
    /// hill climb from the best of them.
    Sampled { budget: usize, seed: u64 },
    Exhaustive,
}

impl Default for PairMode {
    fn default() -> Self {
        PairMode::Sampled { budget: DEFAULT_BUDGET, seed: 0 }
    }
}

/// Distance used to weight sup terms and quotients.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// Parabolic distance to the bottom and lateral boundary.
    Parabolic,
    /// Every point weighted by 1.
    Unit,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolderOptions<R> {
    pub alpha: R,
    pub mode: PairMode,
}

impl<R: Real> HolderOptions<R> {
    pub fn new(alpha: R, mode: PairMode) -> Self {
        Self { alpha, mode }
    }

    fn validate(&self) -> Result<(), DiagnosticsError> {
        if !(self.alpha > R::zero() && self.alpha < R::one()) {
            return Err(DiagnosticsError::InvalidArgument(format!(
                "Hölder exponent must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum PairKind {
    SameTime,
    SameNode,
    Any,
}

impl PairKind {
    fn tag(self) -> u64 {
        match self {
            PairKind::SameTime => 0x5a5a_0001,
            PairKind::SameNode => 0x5a5a_0002,
            PairKind::Any => 0x5a5a_0003,
        }
    }
}

type Point = (usize, usize);

/// Values of one scalar field at the grid nodes of a cylinder's ball and
/// the snapshot times inside its time interval.
#[derive(Clone, Debug)]
pub struct SpaceTimeSamples<R> {
    grid: VelocityGrid<R>,
    cylinder: Cylinder<R>,
    times: Vec<R>,
    nodes: Vec<usize>,
    local: Vec<u32>,
    values: Vec<Vec<R>>,
}

impl<R: Real> SpaceTimeSamples<R> {
    /// `slices` are `(time, full-grid values)` in increasing time.
    pub fn new(
        grid: VelocityGrid<R>,
        cylinder: Cylinder<R>,
        slices: impl IntoIterator<Item = (R, Vec<R>)>,
    ) -> Result<Self, DiagnosticsError> {
        let nodes = grid.nodes_in_ball(&cylinder.ball());
        let mut local = vec![ABSENT; grid.len()];
        for (k, &p) in nodes.iter().enumerate() {
            local[p] = k as u32;
        }
        let (mut times, mut values) = (Vec::new(), Vec::new());
        for (t, v) in slices {
            if cylinder.contains_time(t) {
                times.push(t);
                values.push(nodes.iter().map(|&p| v[p]).collect());
            }
        }
        if times.is_empty() || nodes.is_empty() {
            return Err(DiagnosticsError::InvalidArgument(
                "no grid samples inside the cylinder".into(),
            ));
        }
        Ok(Self { grid, cylinder, times, nodes, local, values })
    }

    pub fn from_trajectory(
        traj: &Trajectory<R>,
        cylinder: Cylinder<R>,
    ) -> Result<Self, DiagnosticsError> {
        Self::from_map(traj, cylinder, |f| f.values.clone())
    }

    /// Samples of `map(f(t))`, evaluated only on snapshots inside the
    /// cylinder's time interval.
    pub fn from_map(
        traj: &Trajectory<R>,
        cylinder: Cylinder<R>,
        map: impl Fn(&DistributionField<R>) -> Vec<R>,
    ) -> Result<Self, DiagnosticsError> {
        let grid = traj.snapshots.first().map(|f| f.grid).ok_or_else(|| {
            DiagnosticsError::InvalidArgument("empty trajectory".into())
        })?;
        let slices = traj
            .snapshots
            .iter()
            .filter(|f| cylinder.contains_time(f.time))
            .map(|f| (f.time, map(f)));
        Self::new(grid, cylinder, slices)
    }

    pub fn cylinder(&self) -> &Cylinder<R> {
        &self.cylinder
    }

    pub fn times(&self) -> &[R] {
        &self.times
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Number of space-time sample points.
    pub fn len(&self) -> usize {
        self.times.len() * self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    fn value(&self, (s, a): Point) -> R {
        self.values[s][a]
    }

    #[inline]
    fn x(&self, a: usize) -> Vec3<R> {
        self.grid.point(self.nodes[a])
    }

    /// `d_P = min(R - |x - c|, 8 √(t - t_start))`, or 1.
    #[inline]
    pub fn distance(&self, (s, a): Point, weighting: Weighting) -> R {
        match weighting {
            Weighting::Unit => R::one(),
            Weighting::Parabolic => {
                let c = &self.cylinder;
                let lateral = c.radius - (self.x(a) - c.center).norm();
                let bottom = R::lit(8.0) * (self.times[s] - c.t_start).max(R::zero()).sqrt();
                lateral.min(bottom).max(R::zero())
            }
        }
    }

    /// `max{|x - y|, 8 |t - s|^{1/2}}`.
    #[inline]
    fn metric(&self, p: Point, q: Point) -> R {
        let dx = (self.x(p.1) - self.x(q.1)).norm();
        let dt = R::lit(8.0) * (self.times[p.0] - self.times[q.0]).abs().sqrt();
        dx.max(dt)
    }

    /// `sup_P d_P^m |v(P)|`.
    pub fn weighted_sup(&self, m: i32, weighting: Weighting) -> R {
        let mut best = R::zero();
        for s in 0..self.times.len() {
            for a in 0..self.nodes.len() {
                let d = self.distance((s, a), weighting).powi(m);
                best = best.max(d * self.value((s, a)).abs());
            }
        }
        best
    }

    /// Node one grid step from `a` along `axis`, if it lies in the ball.
    fn step(&self, a: usize, axis: usize, forward: bool) -> Option<usize> {
        let p = self.nodes[a];
        let i = self.grid.unflatten(p)[axis];
        let s = self.grid.stride(axis);
        let q = match forward {
            true if i + 1 < self.grid.n() => p + s,
            false if i > 0 => p - s,
            _ => return None,
        };
        let l = self.local[q];
        (l != ABSENT).then_some(l as usize)
    }

    fn space_steps(&self, a: usize) -> impl Iterator<Item = usize> + '_ {
        (0..6).filter_map(move |k| self.step(a, k / 2, k % 2 == 0))
    }

    fn time_steps(&self, s: usize) -> impl Iterator<Item = usize> {
        let nt = self.times.len();
        [s.checked_sub(1), (s + 1 < nt).then_some(s + 1)].into_iter().flatten()
    }

    /// Pairs visited whatever the budget: every same-time pair on a common
    /// grid line and every same-node pair.
    fn structured_pairs(&self, kind: PairKind) -> Vec<(Point, Point)> {
        let mut out = Vec::new();
        let (nt, nn) = (self.times.len(), self.nodes.len());
        if kind != PairKind::SameNode {
            for s in 0..nt {
                for a in 0..nn {
                    for axis in 0..3 {
                        let mut b = a;
                        while let Some(c) = self.step(b, axis, true) {
                            out.push(((s, a), (s, c)));
                            b = c;
                        }
                    }
                }
            }
        }
        if kind != PairKind::SameTime {
            for s in 0..nt {
                for r in s + 1..nt {
                    for a in 0..nn {
                        out.push(((s, a), (r, a)));
                    }
                }
            }
        }
        out
    }

    /// Pairs one grid or snapshot step away that keep the pair kind.
    fn moves(&self, kind: PairKind, (p, q): (Point, Point)) -> Vec<(Point, Point)> {
        let mut out = Vec::new();
        match kind {
            PairKind::SameTime => {
                out.extend(self.space_steps(p.1).map(|a| ((p.0, a), q)));
                out.extend(self.space_steps(q.1).map(|b| (p, (q.0, b))));
                out.extend(self.time_steps(p.0).map(|s| ((s, p.1), (s, q.1))));
            }
            PairKind::SameNode => {
                out.extend(self.time_steps(p.0).map(|s| ((s, p.1), q)));
                out.extend(self.time_steps(q.0).map(|s| (p, (s, q.1))));
                out.extend(self.space_steps(p.1).map(|a| ((p.0, a), (q.0, a))));
            }
            PairKind::Any => {
                out.extend(self.space_steps(p.1).map(|a| ((p.0, a), q)));
                out.extend(self.space_steps(q.1).map(|b| (p, (q.0, b))));
                out.extend(self.time_steps(p.0).map(|s| ((s, p.1), q)));
                out.extend(self.time_steps(q.0).map(|s| (p, (s, q.1))));
            }
        }
        out
    }

    /// Steepest ascent from `start`; returns the local max and the number
    /// of pairs evaluated.
    fn climb<F>(&self, kind: PairKind, start: (Point, Point), eval: &F) -> (R, usize)
    where
        F: Fn(Point, Point) -> R,
    {
        let (mut cur, mut best, mut count) = (start, eval(start.0, start.1), 1);
        for _ in 0..CLIMB_STEPS {
            let mut next = None;
            for m in self.moves(kind, cur) {
                count += 1;
                let v = eval(m.0, m.1);
                if v > best {
                    best = v;
                    next = Some(m);
                }
            }
            match next {
                Some(m) => cur = m,
                None => break,
            }
        }
        (best, count)
    }

    fn draw(&self, kind: PairKind, rng: &mut ChaCha8Rng) -> (Point, Point) {
        let (nt, nn) = (self.times.len(), self.nodes.len());
        match kind {
            PairKind::SameTime => {
                let s = rng.gen_range(0..nt);
                ((s, rng.gen_range(0..nn)), (s, rng.gen_range(0..nn)))
            }
            PairKind::SameNode => {
                let a = rng.gen_range(0..nn);
                ((rng.gen_range(0..nt), a), (rng.gen_range(0..nt), a))
            }
            PairKind::Any => (
                (rng.gen_range(0..nt), rng.gen_range(0..nn)),
                (rng.gen_range(0..nt), rng.gen_range(0..nn)),
            ),
        }
    }

    /// Sup of `eval` over the pairs selected by `mode`, and the number of
    /// pairs visited. Coincident pairs are skipped.
    fn sup_pairs<F>(&self, kind: PairKind, mode: PairMode, eval: F) -> Result<(R, usize), DiagnosticsError>
    where
        F: Fn(Point, Point) -> R + Sync,
    {
        let guarded = |p: Point, q: Point| if p == q { R::zero() } else { eval(p, q) };
        match mode {
            PairMode::Exhaustive => {
                if self.grid.n() > EXHAUSTIVE_MAX_N {
                    return Err(DiagnosticsError::InvalidArgument(format!(
                        "exhaustive pairs need n ≤ {EXHAUSTIVE_MAX_N}, got {}",
                        self.grid.n()
                    )));
                }
                let (nt, nn) = (self.times.len(), self.nodes.len());
                let total = nt * nn;
                let (best, count) = (0..total)
                    .into_par_iter()
                    .map(|i| {
                        let p = (i / nn, i % nn);
                        let mut best = R::zero();
                        let mut count = 0usize;
                        for j in i + 1..total {
                            let q = (j / nn, j % nn);
                            let keep = match kind {
                                PairKind::SameTime => p.0 == q.0,
                                PairKind::SameNode => p.1 == q.1,
                                PairKind::Any => true,
                            };
                            if keep {
                                best = best.max(guarded(p, q));
                                count += 1;
                            }
                        }
                        (best, count)
                    })
                    .reduce(|| (R::zero(), 0), |a, b| (a.0.max(b.0), a.1 + b.1));
                Ok((best, count))
            }
            PairMode::Sampled { budget, seed } => {
                let structured = self.structured_pairs(kind);
                let mut scored: Vec<(R, (Point, Point))> =
                    structured.par_iter().map(|&(p, q)| (guarded(p, q), (p, q))).collect();
                let tops = CLIMB_STARTS.min(scored.len());
                if tops > 0 && tops < scored.len() {
                    scored.select_nth_unstable_by(tops - 1, |a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal));
                }
                let structured_best = scored.iter().fold(R::zero(), |m, x| m.max(x.0));
                let mut starts: Vec<(Point, Point)> = scored[..tops].iter().map(|x| x.1).collect();

                // Each chunk contributes its best pair as a climb start only
                // once complete, which keeps the estimate monotone in the budget.
                let chunks = budget.div_ceil(CHUNK);
                let sampled: Vec<(R, (Point, Point), bool)> = (0..chunks)
                    .into_par_iter()
                    .map(|c| {
                        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ kind.tag());
                        rng.set_stream(c as u64);
                        let end = ((c + 1) * CHUNK).min(budget);
                        let mut best = (R::zero(), ((0, 0), (0, 0)));
                        for _ in c * CHUNK..end {
                            let (p, q) = self.draw(kind, &mut rng);
                            let v = guarded(p, q);
                            if v > best.0 {
                                best = (v, (p, q));
                            }
                        }
                        (best.0, best.1, end - c * CHUNK == CHUNK)
                    })
                    .collect();
                let sampled_best = sampled.iter().fold(R::zero(), |m, x| m.max(x.0));
                starts.extend(sampled.iter().filter(|x| x.2).map(|x| x.1));

                let (climbed, climb_count) = starts
                    .par_iter()
                    .map(|&st| self.climb(kind, st, &guarded))
                    .reduce(|| (R::zero(), 0), |a, b| (a.0.max(b.0), a.1 + b.1));
                let best = structured_best.max(sampled_best).max(climbed);
                Ok((best, structured.len() + budget + climb_count))
            }
        }
    }

    /// `sup |v(t,x) - v(t,y)| / |x - y|^α` over same-time pairs.
    pub fn space_quotient(&self, alpha: R, mode: PairMode) -> Result<(R, usize), DiagnosticsError> {
        self.sup_pairs(PairKind::SameTime, mode, |p, q| {
            (self.value(p) - self.value(q)).abs() / (self.x(p.1) - self.x(q.1)).norm().powf(alpha)
        })
    }

    /// `sup |v(t,x) - v(s,x)| / |t - s|^{α/2}` over same-node pairs.
    pub fn time_quotient(&self, alpha: R, mode: PairMode) -> Result<(R, usize), DiagnosticsError> {
        let half = alpha * R::lit(0.5);
        self.sup_pairs(PairKind::SameNode, mode, |p, q| {
            (self.value(p) - self.value(q)).abs()
                / (self.times[p.0] - self.times[q.0]).abs().powf(half)
        })
    }

    /// `‖d^m v‖_α`: weighted sup plus the weighted quotient over all pairs
    /// in the parabolic metric.
    pub fn weighted_norm(
        &self,
        alpha: R,
        m: i32,
        weighting: Weighting,
        mode: PairMode,
    ) -> Result<(R, usize), DiagnosticsError> {
        let power = R::lit(m as f64) + alpha;
        let (quot, count) = self.sup_pairs(PairKind::Any, mode, |p, q| {
            let d = self.distance(p, weighting).min(self.distance(q, weighting));
            d.powf(power) * (self.value(p) - self.value(q)).abs() / self.metric(p, q).powf(alpha)
        })?;
        Ok((self.weighted_sup(m, weighting) + quot, count))
    }

    /// `‖d^m v‖*_α`: weighted sup plus the weighted quotient over every
    /// same-time pair on a common grid line.
    pub fn weighted_star_norm(&self, alpha: R, m: i32, weighting: Weighting) -> R {
        let power = R::lit(m as f64) + alpha;
        let nn = self.nodes.len();
        let quot = (0..self.times.len())
            .into_par_iter()
            .map(|s| {
                let mut best = R::zero();
                for a in 0..nn {
                    let pa = (s, a);
                    let da = self.distance(pa, weighting);
                    for axis in 0..3 {
                        let mut cur = a;
                        while let Some(b) = self.step(cur, axis, true) {
                            let pb = (s, b);
                            let d = da.min(self.distance(pb, weighting));
                            let dist = (self.x(a) - self.x(b)).norm();
                            let q = d.powf(power) * (self.value(pa) - self.value(pb)).abs()
                                / dist.powf(alpha);
                            best = best.max(q);
                            cur = b;
                        }
                    }
                }
                best
            })
            .reduce(R::zero, |a, b| a.max(b));
        self.weighted_sup(m, weighting) + quot
    }
}

/// Sampled Hölder data of a field (and for [`holder_1plus`], its first
/// derivatives) on a cylinder. Every sup is over the visited sample and
/// hence a lower bound of the true sup unless `exhaustive` is set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolderReport<R> {
    pub alpha: R,
    pub cylinder: Cylinder<R>,
    pub mode: PairMode,
    pub sup_norm: R,
    pub space_quotient: R,
    pub time_quotient: R,
    pub derivative_sup: [R; 3],
    pub derivative_space_quotients: [R; 3],
    pub derivative_time_quotients: [R; 3],
    /// `‖d^m f‖*_α` for `m = 0, 1, 2` with parabolic weights.
    pub weighted_star_norms: [R; 3],
    pub pair_sample_size: usize,
    pub lower_bound: bool,
}

impl<R: Real> HolderReport<R> {
    /// `‖v‖^{α,α/2}`.
    pub fn holder_norm(&self) -> R {
        self.sup_norm + self.space_quotient + self.time_quotient
    }

    /// `‖v‖^{1+α,(1+α)/2}`; equals [`Self::holder_norm`] when the
    /// derivative terms were not evaluated.
    pub fn holder_1plus_norm(&self) -> R {
        let d: R = (0..3)
            .map(|i| {
                self.derivative_sup[i]
                    + self.derivative_space_quotients[i]
                    + self.derivative_time_quotients[i]
            })
            .sum();
        self.holder_norm() + d
    }
}

fn base_report<R: Real>(
    v: &SpaceTimeSamples<R>,
    opts: &HolderOptions<R>,
) -> Result<HolderReport<R>, DiagnosticsError> {
    opts.validate()?;
    let (sq, n1) = v.space_quotient(opts.alpha, opts.mode)?;
    let (tq, n2) = v.time_quotient(opts.alpha, opts.mode)?;
    let star = [0, 1, 2].map(|m| v.weighted_star_norm(opts.alpha, m, Weighting::Parabolic));
    Ok(HolderReport {
        alpha: opts.alpha,
        cylinder: v.cylinder,
        mode: opts.mode,
        sup_norm: v.weighted_sup(0, Weighting::Unit),
        space_quotient: sq,
        time_quotient: tq,
        derivative_sup: [R::zero(); 3],
        derivative_space_quotients: [R::zero(); 3],
        derivative_time_quotients: [R::zero(); 3],
        weighted_star_norms: star,
        pair_sample_size: n1 + n2,
        lower_bound: !matches!(opts.mode, PairMode::Exhaustive),
    })
}

/// `H^{α,α/2}` data of the trajectory on `cylinder`.
pub fn parabolic_holder<R: Real>(
    traj: &Trajectory<R>,
    cylinder: Cylinder<R>,
    opts: &HolderOptions<R>,
) -> Result<HolderReport<R>, DiagnosticsError> {
    base_report(&SpaceTimeSamples::from_trajectory(traj, cylinder)?, opts)
}

/// `H^{1+α,(1+α)/2}` data: [`parabolic_holder`] plus the same quotients of
/// the three grid derivatives.
pub fn holder_1plus<R: Real>(
    traj: &Trajectory<R>,
    cylinder: Cylinder<R>,
    opts: &HolderOptions<R>,
) -> Result<HolderReport<R>, DiagnosticsError> {
    let mut report = parabolic_holder(traj, cylinder, opts)?;
    for axis in 0..3 {
        let d = SpaceTimeSamples::from_map(traj, cylinder, |f| f.grid.derivative(&f.values, axis))?;
        let (sq, n1) = d.space_quotient(opts.alpha, opts.mode)?;
        let (tq, n2) = d.time_quotient(opts.alpha, opts.mode)?;
        report.derivative_sup[axis] = d.weighted_sup(0, Weighting::Unit);
        report.derivative_space_quotients[axis] = sq;
        report.derivative_time_quotients[axis] = tq;
        report.pair_sample_size += n1 + n2;
    }
    Ok(report)
}

/// `‖d^m f‖*_α` of the trajectory on `cylinder`.
pub fn weighted_star_norm<R: Real>(
    traj: &Trajectory<R>,
    cylinder: Cylinder<R>,
    alpha: R,
    m: i32,
    weighting: Weighting,
) -> Result<R, DiagnosticsError> {
    HolderOptions::new(alpha, PairMode::Exhaustive).validate()?;
    Ok(SpaceTimeSamples::from_trajectory(traj, cylinder)?.weighted_star_norm(alpha, m, weighting))
}

/// Both sides of the conditional regularity statement, measured on a
/// trajectory: the integrability level `S₀` on the outer cylinder and the
/// pieces of the `H*_{α+2}` norm on the inner one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport<R> {
    pub q: R,
    pub alpha: R,
    pub outer: Cylinder<R>,
    pub inner: Cylinder<R>,
    pub mode: PairMode,
    /// `sup_t ‖f(t)‖_{L^q(B)}` over snapshots in the outer time interval.
    pub s0: R,
    pub hypothesis_held: bool,
    /// `‖f‖_α`.
    pub value_norm: R,
    /// `‖d ∂_i f‖_α`.
    pub gradient_norms: [R; 3],
    /// `‖d² ∂_ij f‖_α`.
    pub hessian_norms: [[R; 3]; 3],
    /// `‖d² ∂_t f‖*_α`.
    pub time_derivative_norm: R,
    pub total: R,
    pub snapshots_used: usize,
    pub pair_sample_size: usize,
}

impl<R: Real> RegularityReport<R> {
    /// All components in a fixed order: value, gradient, Hessian
    /// (row-major), time derivative.
    pub fn components(&self) -> Vec<(String, R)> {
        let mut out = vec![("f".to_string(), self.value_norm)];
        for i in 0..3 {
            out.push((format!("d_{}", i + 1), self.gradient_norms[i]));
        }
        for i in 0..3 {
            for j in 0..3 {
                out.push((format!("d_{}{}", i + 1, j + 1), self.hessian_norms[i][j]));
            }
        }
        out.push(("d_t".to_string(), self.time_derivative_norm));
        out
    }
}

/// Snapshot central differences in time, one-sided at the ends.
fn time_derivatives<R: Real>(traj: &Trajectory<R>) -> Vec<(R, Vec<R>)> {
    let s = &traj.snapshots;
    (0..s.len())
        .map(|k| {
            let (a, b) = (k.saturating_sub(1), (k + 1).min(s.len() - 1));
            let dt = s[b].time - s[a].time;
            let v = s[a]
                .values
                .iter()
                .zip(&s[b].values)
                .map(|(x, y)| (*y - *x) / dt)
                .collect();
            (s[k].time, v)
        })
        .collect()
}

pub fn regularity_verdict<R: Real>(
    traj: &Trajectory<R>,
    outer: Cylinder<R>,
    inner: Cylinder<R>,
    q: R,
    opts: &HolderOptions<R>,
) -> Result<RegularityReport<R>, DiagnosticsError> {
    if !(q > R::lit(3.0)) {
        return Err(DiagnosticsError::InvalidArgument(format!(
            "the integrability exponent must exceed 3, got q = {q}"
        )));
    }
    opts.validate()?;
    if !inner.is_compactly_inside(&outer) {
        return Err(DiagnosticsError::InvalidArgument(
            "inner cylinder must lie compactly inside the monitored cylinder".into(),
        ));
    }
    if traj.len() < 2 {
        return Err(DiagnosticsError::InvalidArgument(
            "regularity verdict needs at least 2 snapshots".into(),
        ));
    }
    let grid = traj.snapshots[0].grid;
    if !grid.contains_ball(&outer.ball()) {
        return Err(DiagnosticsError::InvalidArgument(
            "monitored ball leaves the grid cube".into(),
        ));
    }
    let ball = outer.ball();
    let mut s0 = R::zero();
    let mut finite = true;
    for f in traj.snapshots.iter().filter(|f| outer.contains_time(f.time)) {
        let n = grid
            .lq_norm_on_ball(&f.values, &ball, q)
            .map_err(|e| DiagnosticsError::InvalidArgument(e.to_string()))?;
        finite &= n.is_finite();
        s0 = s0.max(n);
    }

    let (alpha, mode, w) = (opts.alpha, opts.mode, Weighting::Parabolic);
    let mut pairs = 0usize;
    let mut norm = |v: SpaceTimeSamples<R>, m: i32| -> Result<R, DiagnosticsError> {
        let (x, n) = v.weighted_norm(alpha, m, w, mode)?;
        pairs += n;
        Ok(x)
    };

    let values = SpaceTimeSamples::from_trajectory(traj, inner)?;
    let snapshots_used = values.times().len();
    let value_norm = norm(values, 0)?;
    let mut gradient_norms = [R::zero(); 3];
    for (i, g) in gradient_norms.iter_mut().enumerate() {
        *g = norm(SpaceTimeSamples::from_map(traj, inner, |f| f.grid.derivative(&f.values, i))?, 1)?;
    }
    let hessians: Vec<(R, Vec<crate::tensor::SymMat3<R>>)> = traj
        .snapshots
        .iter()
        .filter(|f| inner.contains_time(f.time))
        .map(|f| (f.time, f.grid.hessian(&f.values)))
        .collect();
    let mut hessian_norms = [[R::zero(); 3]; 3];
    for i in 0..3 {
        for j in i..3 {
            let slices = hessians.iter().map(|(t, h)| (*t, h.iter().map(|m| m.get(i, j)).collect()));
            let v = norm(SpaceTimeSamples::new(grid, inner, slices)?, 2)?;
            hessian_norms[i][j] = v;
            hessian_norms[j][i] = v;
        }
    }
    let dt = SpaceTimeSamples::new(grid, inner, time_derivatives(traj))?;
    let time_derivative_norm = dt.weighted_star_norm(alpha, 2, w);

    let total = value_norm
        + gradient_norms.iter().copied().sum::<R>()
        + hessian_norms.iter().flatten().copied().sum::<R>()
        + time_derivative_norm;
    Ok(RegularityReport {
        q,
        alpha,
        outer,
        inner,
        mode,
        s0,
        hypothesis_held: finite && s0.is_finite(),
        value_norm,
        gradient_norms,
        hessian_norms,
        time_derivative_norm,
        total,
        snapshots_used,
        pair_sample_size: pairs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn trajectory(
        n: usize,
        extent: f64,
        times: &[f64],
        f: impl Fn(f64, Vec3<f64>) -> f64,
    ) -> Trajectory<f64> {
        let g = VelocityGrid::new(n, extent).unwrap();
        let mut t = Trajectory::new();
        for &s in times {
            t.push(DistributionField::from_fn(g, |v| f(s, v)).with_time(s));
        }
        t
    }

    fn times(k: usize, dt: f64) -> Vec<f64> {
        (0..k).map(|i| i as f64 * dt).collect()
    }

    fn cyl(t0: f64, t1: f64, r: f64) -> Cylinder<f64> {
        Cylinder::new(t0, t1, Vec3::zero(), r).unwrap()
    }

    fn sampled(budget: usize) -> PairMode {
        PairMode::Sampled { budget, seed: 7 }
    }

    #[test]
    fn constant_field_has_zero_quotients() {
        let tr = trajectory(9, 4.0, &times(5, 0.1), |_, _| 3.0);
        let r = holder_1plus(&tr, cyl(0.0, 0.4, 3.0), &HolderOptions::new(0.5, sampled(1000))).unwrap();
        assert_eq!(r.space_quotient, 0.0);
        assert_eq!(r.time_quotient, 0.0);
        assert_eq!(r.sup_norm, 3.0);
        assert_eq!(r.derivative_sup, [0.0; 3]);
        assert_eq!(r.holder_1plus_norm(), 3.0);
    }

    #[test]
    fn linear_field_quotient_found_on_grid_lines() {
        // |x - y|^{1/2} is largest for the widest x-aligned pair: 6 apart.
        let tr = trajectory(9, 4.0, &times(3, 0.1), |_, v| v.x);
        let v = SpaceTimeSamples::from_trajectory(&tr, cyl(0.0, 0.2, 3.0)).unwrap();
        let (q, _) = v.space_quotient(0.5, sampled(0)).unwrap();
        assert!((q - 6f64.sqrt()).abs() < 1e-14, "{q}");
        // h = 1/4 and radius 0.9: x runs over [-3/4, 3/4]
        let tr = trajectory(9, 1.0, &times(3, 0.1), |_, v| v.x);
        let v = SpaceTimeSamples::from_trajectory(&tr, cyl(0.0, 0.2, 0.9)).unwrap();
        let (q, _) = v.space_quotient(0.5, sampled(0)).unwrap();
        assert!((q - 1.5f64.sqrt()).abs() < 1e-14, "{q}");
    }

    #[test]
    fn quadratic_derivative_quotients_match_linear_fields() {
        let ts = times(3, 0.1);
        let c = cyl(0.0, 0.2, 3.0);
        let opts = HolderOptions::new(0.5, PairMode::Exhaustive);
        let quad = holder_1plus(&trajectory(9, 4.0, &ts, |_, v| v.norm_squared()), c, &opts).unwrap();
        for i in 0..3 {
            let lin = parabolic_holder(&trajectory(9, 4.0, &ts, |_, v| 2.0 * v[i]), c, &opts).unwrap();
            assert!((quad.derivative_space_quotients[i] - lin.space_quotient).abs() < 1e-12);
            assert!((quad.derivative_sup[i] - lin.sup_norm).abs() < 1e-12);
        }
    }

    /// Naive oracle over every same-time node pair, straight from full-grid
    /// arrays.
    fn oracle_space(tr: &Trajectory<f64>, c: Cylinder<f64>, alpha: f64) -> f64 {
        let mut best = 0.0f64;
        for f in tr.snapshots.iter().filter(|f| c.contains_time(f.time)) {
            let g = f.grid;
            let pts: Vec<usize> = (0..g.len()).filter(|&p| c.ball().contains(g.point(p))).collect();
            for (i, &p) in pts.iter().enumerate() {
                for &q in &pts[i + 1..] {
                    let d = (g.point(p) - g.point(q)).norm();
                    best = best.max((f.values[p] - f.values[q]).abs() / d.powf(alpha));
                }
            }
        }
        best
    }

    #[test]
    fn sampled_space_quotient_close_to_oracle() {
        let tr = trajectory(17, 4.0, &times(6, 0.05), |t, v| v.x.sin() * (-t).exp());
        let c = cyl(0.0, 0.25, 3.5);
        let r = parabolic_holder(&tr, c, &HolderOptions::new(0.5, PairMode::default())).unwrap();
        let o = oracle_space(&tr, c, 0.5);
        assert!(r.space_quotient <= o * (1.0 + 1e-12));
        assert!(r.space_quotient >= 0.9 * o, "{} vs {o}", r.space_quotient);
        assert!(r.lower_bound);
    }

    #[test]
    fn star_norm_of_constant_is_max_distance() {
        let (s, rad) = (0.04, 2.0);
        let tr = trajectory(9, 4.0, &times(5, 0.01), |_, _| 1.0);
        let c = cyl(0.0, s, rad);
        for m in 0..3 {
            let v = weighted_star_norm(&tr, c, 0.5, m, Weighting::Parabolic).unwrap();
            let expect = rad.min(8.0 * s.sqrt()).powi(m);
            assert!((v - expect).abs() < 1e-12, "m={m}: {v} vs {expect}");
        }
    }

    #[test]
    fn unit_star_quotient_bounded_by_space_quotient() {
        let tr = trajectory(17, 4.0, &times(4, 0.05), |t, v| (v.x * v.y + t).cos());
        let c = cyl(0.0, 0.15, 3.5);
        let v = SpaceTimeSamples::from_trajectory(&tr, c).unwrap();
        let star = v.weighted_star_norm(0.5, 0, Weighting::Unit) - v.weighted_sup(0, Weighting::Unit);
        let (full, _) = v.space_quotient(0.5, PairMode::Exhaustive).unwrap();
        assert!(star <= full * (1.0 + 1e-12));
        assert!(star > 0.0);
    }

    #[test]
    fn exhaustive_refused_on_large_grids() {
        let tr = trajectory(19, 4.0, &times(2, 0.1), |_, v| v.x);
        let r = parabolic_holder(&tr, cyl(0.0, 0.1, 1.0), &HolderOptions::new(0.5, PairMode::Exhaustive));
        assert!(r.is_err());
    }

    #[test]
    fn rejects_bad_arguments() {
        let tr = trajectory(9, 4.0, &times(4, 0.1), |_, _| 0.0);
        let outer = cyl(0.0, 0.3, 3.0);
        let inner = cyl(0.1, 0.2, 1.5);
        let opts = HolderOptions::new(0.5, sampled(10));
        assert!(regularity_verdict(&tr, outer, inner, 2.0, &opts).is_err());
        assert!(regularity_verdict(&tr, inner, outer, 4.0, &opts).is_err());
        assert!(parabolic_holder(&tr, outer, &HolderOptions::new(1.5, sampled(10))).is_err());
        assert!(parabolic_holder(&tr, cyl(5.0, 6.0, 1.0), &opts).is_err());
    }

    #[test]
    fn zero_field_verdict() {
        let tr = trajectory(9, 4.0, &times(4, 0.1), |_, _| 0.0);
        let r = regularity_verdict(&tr, cyl(0.0, 0.3, 3.0), cyl(0.1, 0.2, 1.5), 4.0, &HolderOptions::new(0.5, sampled(100)))
            .unwrap();
        assert!(r.hypothesis_held);
        assert_eq!(r.s0, 0.0);
        assert!(r.components().iter().all(|(_, v)| *v == 0.0));
        assert_eq!(r.components().len(), 14);
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"hypothesis_held\":true"));
        let back: RegularityReport<f64> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]
        #[test]
        fn sampled_estimate_is_monotone_in_budget(seed in 0u64..1000, b in 0usize..6000, extra in 1usize..6000) {
            let tr = trajectory(17, 4.0, &times(3, 0.05), |t, v| (v.x * 1.7 + v.y * v.z - 3.0 * t).sin());
            let v = SpaceTimeSamples::from_trajectory(&tr, cyl(0.0, 0.1, 3.0)).unwrap();
            let small = v.weighted_norm(0.5, 1, Weighting::Parabolic, PairMode::Sampled { budget: b, seed }).unwrap().0;
            let large = v.weighted_norm(0.5, 1, Weighting::Parabolic, PairMode::Sampled { budget: b + extra, seed }).unwrap().0;
            prop_assert!(large >= small);
        }
    }
}
