//! Uniform truncated velocity grid, fields over it, quadrature, finite
//! difference stencils and the `LANDAU1` snapshot format.
//!
//! Nodes are stored x-fastest: `p = i + n (j + n k)`.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;
use crate::tensor::{SymMat3, Vec3};

#[derive(Debug, Error)]
pub enum GridError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("non-finite value at node {0}")]
    NonFinite(usize),
    #[error("malformed snapshot: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// The cube `[-L, L]³` sampled by `n` points per axis, `n` odd so that the
/// origin is a node.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VelocityGrid<R> {
    n: usize,
    extent: R,
}

impl<R: Real> VelocityGrid<R> {
    pub fn new(n: usize, extent: R) -> Result<Self, GridError> {
        if n < 9 || n % 2 == 0 {
            return Err(GridError::InvalidGrid(format!(
                "points per axis must be odd and at least 9, got {n}"
            )));
        }
        if !(extent > R::zero() && extent.is_finite()) {
            return Err(GridError::InvalidGrid(format!(
                "extent must be positive, got {extent}"
            )));
        }
        Ok(Self { n, extent })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn extent(&self) -> R {
        self.extent
    }

    /// `h = 2L / (n - 1)`.
    #[inline]
    pub fn spacing(&self) -> R {
        R::lit(2.0) * self.extent / R::of_usize(self.n - 1)
    }

    #[inline]
    pub fn cell_volume(&self) -> R {
        let h = self.spacing();
        h * h * h
    }

    /// Total number of nodes, `n³`.
    #[inline]
    pub fn len(&self) -> usize {
        self.n * self.n * self.n
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    /// `-L + idx·h`.
    #[inline]
    pub fn coord(&self, idx: usize) -> R {
        -self.extent + R::of_usize(idx) * self.spacing()
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.n * (j + self.n * k)
    }

    #[inline]
    pub fn unflatten(&self, p: usize) -> [usize; 3] {
        let n = self.n;
        [p % n, (p / n) % n, p / (n * n)]
    }

    #[inline]
    pub fn stride(&self, axis: usize) -> usize {
        match axis {
            0 => 1,
            1 => self.n,
            2 => self.n * self.n,
            _ => panic!("axis {axis} out of range"),
        }
    }

    #[inline]
    pub fn point(&self, p: usize) -> Vec3<R> {
        let [i, j, k] = self.unflatten(p);
        Vec3::new(self.coord(i), self.coord(j), self.coord(k))
    }

    pub fn points(&self) -> impl Iterator<Item = Vec3<R>> + '_ {
        (0..self.len()).map(move |p| self.point(p))
    }

    /// Trapezoid weight: `h³` halved once per axis on which the node is on
    /// a face.
    #[inline]
    pub fn trapezoid_weight(&self, p: usize) -> R {
        let half = R::lit(0.5);
        let last = self.n - 1;
        self.unflatten(p).iter().fold(self.cell_volume(), |w, &i| {
            if i == 0 || i == last {
                w * half
            } else {
                w
            }
        })
    }

    pub fn trapezoid_weights(&self) -> Vec<R> {
        (0..self.len()).map(|p| self.trapezoid_weight(p)).collect()
    }

    /// No index on a face.
    #[inline]
    pub fn is_interior(&self, p: usize) -> bool {
        self.unflatten(p).iter().all(|&i| i > 0 && i + 1 < self.n)
    }

    /// Distance in nodes to the nearest face.
    #[inline]
    pub fn depth(&self, p: usize) -> usize {
        self.unflatten(p)
            .iter()
            .map(|&i| i.min(self.n - 1 - i))
            .min()
            .unwrap()
    }

    pub fn contains_ball(&self, ball: &Ball<R>) -> bool {
        ball.radius > R::zero()
            && ball
                .center
                .to_array()
                .iter()
                .all(|&c| c.abs() + ball.radius <= self.extent)
    }

    /// Nodes with `|v - center| ≤ radius`, ascending.
    pub fn nodes_in_ball(&self, ball: &Ball<R>) -> Vec<usize> {
        let r2 = ball.radius * ball.radius;
        (0..self.len())
            .filter(|&p| (self.point(p) - ball.center).norm_squared() <= r2)
            .collect()
    }

    /// Node-aligned shift by `offset` along `axis`, used by equivariance
    /// checks. Nodes shifted out of the cube are dropped, vacated ones
    /// filled with zero.
    pub fn shift<T: Copy + Default>(&self, values: &[T], axis: usize, offset: usize) -> Vec<T> {
        let s = self.stride(axis);
        let mut out = vec![T::default(); values.len()];
        for (p, v) in values.iter().enumerate() {
            if self.unflatten(p)[axis] + offset < self.n {
                out[p + offset * s] = *v;
            }
        }
        out
    }

    /// Trapezoid approximation of `∫ f(v) w(v) dv` over the cube.
    pub fn integrate(&self, values: &[R], weight: impl Fn(Vec3<R>) -> R) -> R {
        debug_assert_eq!(values.len(), self.len());
        values
            .iter()
            .enumerate()
            .map(|(p, &f)| {
                if f == R::zero() {
                    R::zero()
                } else {
                    self.trapezoid_weight(p) * f * weight(self.point(p))
                }
            })
            .sum()
    }

    /// `(Σ_{ball} |f|^q h³)^{1/q}`, or the max over the ball for `q = ∞`.
    pub fn lq_norm_on_ball(&self, values: &[R], ball: &Ball<R>, q: R) -> Result<R, GridError> {
        if q.is_nan() || q < R::one() {
            return Err(GridError::InvalidArgument(format!("L^q norm needs q >= 1, got {q}")));
        }
        let nodes = self.nodes_in_ball(ball);
        if q.is_infinite() {
            return Ok(nodes.iter().fold(R::zero(), |m, &p| m.max(values[p].abs())));
        }
        let sum: R = nodes.iter().map(|&p| values[p].abs().powf(q)).sum();
        Ok((sum * self.cell_volume()).powf(q.recip()))
    }

    /// Second-order first derivative along `axis` at node `p`: central in
    /// the interior, one-sided three-point on faces.
    #[inline]
    pub fn d1(&self, u: &[R], p: usize, axis: usize) -> R {
        let s = self.stride(axis);
        let i = self.unflatten(p)[axis];
        let two_h = R::lit(2.0) * self.spacing();
        let (three, four) = (R::lit(3.0), R::lit(4.0));
        if i == 0 {
            (-three * u[p] + four * u[p + s] - u[p + 2 * s]) / two_h
        } else if i + 1 == self.n {
            (three * u[p] - four * u[p - s] + u[p - 2 * s]) / two_h
        } else {
            (u[p + s] - u[p - s]) / two_h
        }
    }

    /// Second-order pure second derivative along `axis` at node `p`.
    #[inline]
    pub fn d2(&self, u: &[R], p: usize, axis: usize) -> R {
        let s = self.stride(axis);
        let i = self.unflatten(p)[axis];
        let h = self.spacing();
        let h2 = h * h;
        let (two, four, five) = (R::lit(2.0), R::lit(4.0), R::lit(5.0));
        if i == 0 {
            (two * u[p] - five * u[p + s] + four * u[p + 2 * s] - u[p + 3 * s]) / h2
        } else if i + 1 == self.n {
            (two * u[p] - five * u[p - s] + four * u[p - 2 * s] - u[p - 3 * s]) / h2
        } else {
            (u[p + s] - two * u[p] + u[p - s]) / h2
        }
    }

    pub fn derivative(&self, u: &[R], axis: usize) -> Vec<R> {
        (0..self.len()).map(|p| self.d1(u, p, axis)).collect()
    }

    pub fn gradient(&self, u: &[R]) -> Vec<Vec3<R>> {
        (0..self.len())
            .map(|p| Vec3::new(self.d1(u, p, 0), self.d1(u, p, 1), self.d1(u, p, 2)))
            .collect()
    }

    pub fn divergence(&self, w: &[Vec3<R>]) -> Vec<R> {
        let comp: [Vec<R>; 3] = std::array::from_fn(|a| w.iter().map(|x| x[a]).collect());
        (0..self.len())
            .map(|p| self.d1(&comp[0], p, 0) + self.d1(&comp[1], p, 1) + self.d1(&comp[2], p, 2))
            .collect()
    }

    /// All six second derivatives `∂_ij u` in `SymMat3` order. Mixed
    /// derivatives compose the first-derivative stencils.
    pub fn hessian(&self, u: &[R]) -> Vec<SymMat3<R>> {
        let g: [Vec<R>; 3] = std::array::from_fn(|a| self.derivative(u, a));
        (0..self.len())
            .map(|p| {
                SymMat3::new(
                    self.d2(u, p, 0),
                    self.d1(&g[1], p, 0),
                    self.d1(&g[2], p, 0),
                    self.d2(u, p, 1),
                    self.d1(&g[2], p, 1),
                    self.d2(u, p, 2),
                )
            })
            .collect()
    }

    /// `M_ij ∂_ij u` at every node.
    pub fn hessian_apply(&self, m: &[SymMat3<R>], u: &[R]) -> Vec<R> {
        let two = R::lit(2.0);
        self.hessian(u)
            .iter()
            .zip(m)
            .map(|(d, a)| {
                a.xx * d.xx
                    + a.yy * d.yy
                    + a.zz * d.zz
                    + two * (a.xy * d.xy + a.xz * d.xz + a.yz * d.yz)
            })
            .collect()
    }

    /// `h³ Σ u·w` over interior nodes.
    ///
    /// With this pairing the stencils satisfy `⟨∇u, w⟩ + ⟨u, ∇·w⟩ = 0`
    /// exactly whenever `w` vanishes on the two outermost node layers.
    /// Otherwise the defect is a sum of boundary terms involving only the
    /// values of `u` and `w` on those layers.
    pub fn interior_inner<T, F: Fn(&T, &T) -> R>(&self, a: &[T], b: &[T], dot: F) -> R {
        let s: R = (0..self.len())
            .filter(|&p| self.is_interior(p))
            .map(|p| dot(&a[p], &b[p]))
            .sum();
        s * self.cell_volume()
    }
}

/// Closed ball in velocity space.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ball<R> {
    pub center: Vec3<R>,
    pub radius: R,
}

impl<R: Real> Ball<R> {
    pub fn new(center: Vec3<R>, radius: R) -> Self {
        Self { center, radius }
    }

    pub fn centered(radius: R) -> Self {
        Self::new(Vec3::zero(), radius)
    }

    pub fn contains(&self, v: Vec3<R>) -> bool {
        (v - self.center).norm_squared() <= self.radius * self.radius
    }
}

/// Space-time cylinder `[t_start, t_end] × B(center, radius)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cylinder<R> {
    pub t_start: R,
    pub t_end: R,
    pub center: Vec3<R>,
    pub radius: R,
}

impl<R: Real> Cylinder<R> {
    pub fn new(t_start: R, t_end: R, center: Vec3<R>, radius: R) -> Result<Self, GridError> {
        if !(t_start < t_end) {
            return Err(GridError::InvalidArgument(format!(
                "cylinder needs t_start < t_end, got [{t_start}, {t_end}]"
            )));
        }
        if !(radius > R::zero()) {
            return Err(GridError::InvalidArgument(format!(
                "cylinder radius must be positive, got {radius}"
            )));
        }
        Ok(Self { t_start, t_end, center, radius })
    }

    pub fn ball(&self) -> Ball<R> {
        Ball::new(self.center, self.radius)
    }

    pub fn contains_time(&self, t: R) -> bool {
        t >= self.t_start && t <= self.t_end
    }

    /// Strict containment of the closure of `self` in `outer`.
    pub fn is_compactly_inside(&self, outer: &Cylinder<R>) -> bool {
        self.t_start > outer.t_start
            && self.t_end < outer.t_end
            && (self.center - outer.center).norm() + self.radius < outer.radius
    }
}

/// Nonnegative phase-space density sampled on a grid at one instant.
/// Transient negative values are allowed and measured elsewhere.
#[derive(Clone, Debug, PartialEq)]
pub struct DistributionField<R> {
    pub grid: VelocityGrid<R>,
    pub values: Vec<R>,
    pub time: R,
}

impl<R: Real> DistributionField<R> {
    pub fn new(grid: VelocityGrid<R>, values: Vec<R>, time: R) -> Result<Self, GridError> {
        if values.len() != grid.len() {
            return Err(GridError::InvalidArgument(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        if let Some(p) = values.iter().position(|v| !v.is_finite()) {
            return Err(GridError::NonFinite(p));
        }
        Ok(Self { grid, values, time })
    }

    pub fn zeros(grid: VelocityGrid<R>) -> Self {
        Self { grid, values: vec![R::zero(); grid.len()], time: R::zero() }
    }

    pub fn from_fn(grid: VelocityGrid<R>, f: impl Fn(Vec3<R>) -> R) -> Self {
        let values = grid.points().map(f).collect();
        Self { grid, values, time: R::zero() }
    }

    pub fn with_time(mut self, time: R) -> Self {
        self.time = time;
        self
    }

    pub fn integrate(&self, weight: impl Fn(Vec3<R>) -> R) -> R {
        self.grid.integrate(&self.values, weight)
    }

    pub fn mass(&self) -> R {
        self.integrate(|_| R::one())
    }

    pub fn max_abs(&self) -> R {
        self.values.iter().fold(R::zero(), |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, s: R) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| v * s).collect(),
            time: self.time,
        }
    }

    /// `‖f - g‖_{L¹}` with trapezoid weights.
    pub fn l1_distance(&self, other: &Self) -> R {
        (0..self.grid.len())
            .map(|p| self.grid.trapezoid_weight(p) * (self.values[p] - other.values[p]).abs())
            .sum()
    }

    pub fn l1_norm(&self) -> R {
        (0..self.grid.len())
            .map(|p| self.grid.trapezoid_weight(p) * self.values[p].abs())
            .sum()
    }

    /// Writes the `LANDAU1` snapshot: a one-line header then `n³` little
    /// endian `f64` values, x-fastest.
    pub fn write_snapshot<W: Write>(&self, mut w: W) -> Result<(), GridError> {
        writeln!(
            w,
            "LANDAU1 n={} L={} t={}",
            self.grid.n(),
            self.grid.extent().as_f64(),
            self.time.as_f64()
        )?;
        let mut buf = Vec::with_capacity(8 * self.values.len());
        for v in &self.values {
            buf.extend_from_slice(&v.as_f64().to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_snapshot<Rd: BufRead>(mut r: Rd) -> Result<Self, GridError> {
        let mut header = String::new();
        r.read_line(&mut header)?;
        let header = header
            .strip_suffix('\n')
            .ok_or_else(|| GridError::Format("missing header line".into()))?;
        let mut tokens = header.split(' ');
        if tokens.next() != Some("LANDAU1") {
            return Err(GridError::Format(format!("bad magic in header `{header}`")));
        }
        let mut field = |key: &str| -> Result<String, GridError> {
            let tok = tokens
                .next()
                .ok_or_else(|| GridError::Format(format!("header lacks `{key}=`")))?;
            tok.strip_prefix(key)
                .and_then(|t| t.strip_prefix('='))
                .map(str::to_owned)
                .ok_or_else(|| GridError::Format(format!("expected `{key}=`, found `{tok}`")))
        };
        let bad = |e: &dyn std::fmt::Display| GridError::Format(e.to_string());
        let n: usize = field("n")?.parse().map_err(|e| bad(&e))?;
        let extent: f64 = field("L")?.parse().map_err(|e| bad(&e))?;
        let time: f64 = field("t")?.parse().map_err(|e| bad(&e))?;
        let grid = VelocityGrid::new(n, R::lit(extent))?;
        let mut payload = Vec::new();
        r.read_to_end(&mut payload)?;
        if payload.len() != 8 * grid.len() {
            return Err(GridError::Format(format!(
                "payload holds {} bytes, n={n} needs {}",
                payload.len(),
                8 * grid.len()
            )));
        }
        let values = payload
            .chunks_exact(8)
            .map(|c| R::lit(f64::from_le_bytes(c.try_into().unwrap())))
            .collect();
        Self::new(grid, values, R::lit(time))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn grid(n: usize) -> VelocityGrid<f64> {
        VelocityGrid::new(n, 8.0).unwrap()
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(VelocityGrid::<f64>::new(8, 1.0).is_err());
        assert!(VelocityGrid::<f64>::new(7, 1.0).is_err());
        assert!(VelocityGrid::<f64>::new(9, 0.0).is_err());
        assert!(VelocityGrid::<f64>::new(9, -1.0).is_err());
    }

    #[test]
    fn origin_is_a_node() {
        let g = grid(33);
        assert_eq!(g.coord(16), 0.0);
        assert_eq!(g.point(g.index(16, 16, 16)), Vec3::zero());
        assert_eq!(g.spacing(), 0.5);
        assert_eq!(g.unflatten(g.index(3, 5, 7)), [3, 5, 7]);
    }

    #[test]
    fn trapezoid_weights_sum_to_volume() {
        let g = grid(9);
        let total: f64 = g.trapezoid_weights().iter().sum();
        assert_relative_eq!(total, 16f64.powi(3), epsilon = 1e-9);
    }

    #[test]
    fn zero_field_integrates_to_zero() {
        let g = grid(9);
        assert_eq!(g.integrate(&vec![0.0; g.len()], |v| v.norm()), 0.0);
    }

    #[test]
    fn lq_rejects_small_q_and_handles_infinity() {
        let g = grid(9);
        let f: Vec<f64> = (0..g.len()).map(|p| p as f64).collect();
        let ball = Ball::centered(3.0);
        assert!(g.lq_norm_on_ball(&f, &ball, 0.5).is_err());
        let max = g.nodes_in_ball(&ball).iter().map(|&p| f[p]).fold(0.0, f64::max);
        assert_eq!(g.lq_norm_on_ball(&f, &ball, f64::INFINITY).unwrap(), max);
    }

    #[test]
    fn lq_of_unit_field_is_ball_volume() {
        let g = VelocityGrid::new(65, 4.0).unwrap();
        let ones = vec![1.0; g.len()];
        let r = 2.0;
        let vol = g.lq_norm_on_ball(&ones, &Ball::centered(r), 1.0).unwrap();
        let exact = 4.0 / 3.0 * std::f64::consts::PI * r * r * r;
        // surface error O(h r²)
        assert!((vol - exact).abs() < 4.0 * std::f64::consts::PI * r * r * g.spacing(), "{vol}");
    }

    #[test]
    fn gradient_of_linear_field_is_exact() {
        let g = grid(9);
        let u: Vec<f64> = g.points().map(|v| v.x).collect();
        for (p, d) in g.gradient(&u).iter().enumerate() {
            assert_relative_eq!(d.x, 1.0, epsilon = 1e-12);
            assert!(d.y.abs() < 1e-12 && d.z.abs() < 1e-12, "node {p}");
        }
    }

    #[test]
    fn laplacian_of_quadratic_is_six() {
        let g = grid(11);
        let u: Vec<f64> = g.points().map(|v| v.norm_squared()).collect();
        let lap = g.divergence(&g.gradient(&u));
        for p in (0..g.len()).filter(|&p| g.depth(p) >= 2) {
            assert_relative_eq!(lap[p], 6.0, epsilon = 1e-10);
        }
        let lap2 = g.hessian_apply(&vec![SymMat3::identity(); g.len()], &u);
        for v in lap2 {
            assert_relative_eq!(v, 6.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn hessian_apply_converges_at_second_order() {
        let errs: Vec<f64> = [17, 33, 65]
            .iter()
            .map(|&n| {
                let l = 8.0;
                let g = VelocityGrid::new(n, l).unwrap();
                let k = std::f64::consts::PI / l;
                let u: Vec<f64> = g.points().map(|v| (k * v.x).sin()).collect();
                let lap = g.hessian_apply(&vec![SymMat3::identity(); g.len()], &u);
                (0..g.len())
                    .map(|p| (lap[p] + k * k * (k * g.point(p).x).sin()).abs())
                    .fold(0.0, f64::max)
            })
            .collect();
        for w in errs.windows(2) {
            let rate = (w[0] / w[1]).log2();
            assert!(rate > 1.8, "rate {rate} from {errs:?}");
        }
    }

    #[test]
    fn summation_by_parts_holds_for_compact_w() {
        let g = grid(13);
        let u: Vec<f64> = g.points().map(|v| (0.3 * v.x).sin() + v.y * v.z).collect();
        let w: Vec<Vec3<f64>> = (0..g.len())
            .map(|p| {
                if g.depth(p) < 2 {
                    Vec3::zero()
                } else {
                    let v = g.point(p);
                    Vec3::new(v.y.cos(), v.x * v.z, 0.1 * v.x)
                }
            })
            .collect();
        let lhs = g.interior_inner(&g.gradient(&u), &w, |a, b| a.dot(*b));
        let rhs = g.interior_inner(&u, &g.divergence(&w), |a, b| a * b);
        assert!((lhs + rhs).abs() < 1e-9 * lhs.abs().max(1.0), "{lhs} {rhs}");
    }

    #[test]
    fn stencils_are_translation_equivariant() {
        let g = grid(11);
        let u: Vec<f64> = g.points().map(|v| (0.4 * v.x).sin() * (0.2 * v.y).cos() + v.z).collect();
        let du = g.gradient(&u);
        let shifted = g.shift(&u, 1, 1);
        let dshifted = g.gradient(&shifted);
        for p in (0..g.len()).filter(|&p| g.depth(p) >= 3) {
            let q = p - g.stride(1);
            assert!((dshifted[p] - du[q]).max_abs() < 1e-13);
        }
    }

    #[test]
    fn snapshot_round_trip() {
        let g = grid(9);
        let f = DistributionField::from_fn(g, |v| (-v.norm_squared()).exp()).with_time(0.125);
        let mut buf = Vec::new();
        f.write_snapshot(&mut buf).unwrap();
        assert!(buf.starts_with(b"LANDAU1 n=9 L=8 t=0.125\n"));
        let back = DistributionField::<f64>::read_snapshot(&buf[..]).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn snapshot_rejects_short_payload() {
        let g = grid(9);
        let mut buf = Vec::new();
        DistributionField::zeros(g).write_snapshot(&mut buf).unwrap();
        buf.truncate(buf.len() - 8);
        assert!(matches!(
            DistributionField::<f64>::read_snapshot(&buf[..]),
            Err(GridError::Format(_))
        ));
        let mut bad = b"LANDAU2 n=9 L=8 t=0\n".to_vec();
        bad.extend(vec![0u8; 8 * 729]);
        assert!(DistributionField::<f64>::read_snapshot(&bad[..]).is_err());
    }

    #[test]
    fn cylinder_containment() {
        let outer = Cylinder::new(0.0, 1.0, Vec3::zero(), 2.0).unwrap();
        let inner = Cylinder::new(0.2, 0.8, Vec3::new(0.5, 0.0, 0.0), 1.0).unwrap();
        assert!(inner.is_compactly_inside(&outer));
        let touching = Cylinder::new(0.0, 0.8, Vec3::zero(), 1.0).unwrap();
        assert!(!touching.is_compactly_inside(&outer));
        assert!(Cylinder::new(1.0, 1.0, Vec3::<f64>::zero(), 1.0).is_err());
    }
}
