//! Small fixed-size vectors and symmetric matrices in velocity space.

use std::ops::{Add, AddAssign, Index, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::scalar::Real;

/// A point or displacement in velocity space.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Vec3<R> {
    pub x: R,
    pub y: R,
    pub z: R,
}

impl<R: Real> Vec3<R> {
    #[inline]
    pub const fn new(x: R, y: R, z: R) -> Self {
        Self { x, y, z }
    }

    #[inline]
    pub fn zero() -> Self {
        Self::new(R::zero(), R::zero(), R::zero())
    }

    #[inline]
    pub fn from_array(a: [R; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    #[inline]
    pub fn to_array(self) -> [R; 3] {
        [self.x, self.y, self.z]
    }

    /// Unit vector along axis `k` (0-based).
    #[inline]
    pub fn axis(k: usize) -> Self {
        let mut a = [R::zero(); 3];
        a[k] = R::one();
        Self::from_array(a)
    }

    #[inline]
    pub fn dot(self, other: Self) -> R {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    #[inline]
    pub fn norm_squared(self) -> R {
        self.dot(self)
    }

    #[inline]
    pub fn norm(self) -> R {
        self.norm_squared().sqrt()
    }

    #[inline]
    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn max_abs(self) -> R {
        self.x.abs().max(self.y.abs()).max(self.z.abs())
    }

    pub fn cast<S: Real>(self) -> Vec3<S> {
        Vec3::new(
            S::lit(self.x.as_f64()),
            S::lit(self.y.as_f64()),
            S::lit(self.z.as_f64()),
        )
    }
}

impl<R> Index<usize> for Vec3<R> {
    type Output = R;

    #[inline]
    fn index(&self, k: usize) -> &R {
        match k {
            0 => &self.x,
            1 => &self.y,
            2 => &self.z,
            _ => panic!("Vec3 index {k} out of range"),
        }
    }
}

impl<R: Real> Add for Vec3<R> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl<R: Real> AddAssign for Vec3<R> {
    #[inline]
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<R: Real> Sub for Vec3<R> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl<R: Real> Neg for Vec3<R> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y, -self.z)
    }
}

impl<R: Real> Mul<R> for Vec3<R> {
    type Output = Self;
    #[inline]
    fn mul(self, s: R) -> Self {
        Self::new(self.x * s, self.y * s, self.z * s)
    }
}

/// Symmetric 3x3 matrix stored by its upper triangle.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SymMat3<R> {
    pub xx: R,
    pub xy: R,
    pub xz: R,
    pub yy: R,
    pub yz: R,
    pub zz: R,
}

impl<R: Real> SymMat3<R> {
    #[inline]
    pub const fn new(xx: R, xy: R, xz: R, yy: R, yz: R, zz: R) -> Self {
        Self { xx, xy, xz, yy, yz, zz }
    }

    #[inline]
    pub fn zero() -> Self {
        Self::scalar(R::zero())
    }

    #[inline]
    pub fn identity() -> Self {
        Self::scalar(R::one())
    }

    /// `s * I`.
    #[inline]
    pub fn scalar(s: R) -> Self {
        let z = R::zero();
        Self::new(s, z, z, s, z, s)
    }

    pub fn diag(a: R, b: R, c: R) -> Self {
        let z = R::zero();
        Self::new(a, z, z, b, z, c)
    }

    /// Entries in the fixed order `xx, xy, xz, yy, yz, zz`.
    #[inline]
    pub fn to_array(self) -> [R; 6] {
        [self.xx, self.xy, self.xz, self.yy, self.yz, self.zz]
    }

    #[inline]
    pub fn from_array(a: [R; 6]) -> Self {
        Self::new(a[0], a[1], a[2], a[3], a[4], a[5])
    }

    /// Entry `(i, j)`; symmetric by construction.
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> R {
        match (i.min(j), i.max(j)) {
            (0, 0) => self.xx,
            (0, 1) => self.xy,
            (0, 2) => self.xz,
            (1, 1) => self.yy,
            (1, 2) => self.yz,
            (2, 2) => self.zz,
            _ => panic!("SymMat3 index ({i}, {j}) out of range"),
        }
    }

    #[inline]
    pub fn trace(&self) -> R {
        self.xx + self.yy + self.zz
    }

    pub fn determinant(&self) -> R {
        self.xx * (self.yy * self.zz - self.yz * self.yz)
            - self.xy * (self.xy * self.zz - self.yz * self.xz)
            + self.xz * (self.xy * self.yz - self.yy * self.xz)
    }

    /// `M⁻¹ b` by the adjugate; `None` when `|det M|` is below `tol·‖M‖³`.
    pub fn solve(&self, b: Vec3<R>, tol: R) -> Option<Vec3<R>> {
        let det = self.determinant();
        let scale = self.max_abs();
        if !(det.abs() > tol * scale * scale * scale) {
            return None;
        }
        let adj = SymMat3::new(
            self.yy * self.zz - self.yz * self.yz,
            self.xz * self.yz - self.xy * self.zz,
            self.xy * self.yz - self.xz * self.yy,
            self.xx * self.zz - self.xz * self.xz,
            self.xy * self.xz - self.xx * self.yz,
            self.xx * self.yy - self.xy * self.xy,
        );
        Some(adj.mul_vec(b) * det.recip())
    }

    #[inline]
    pub fn mul_vec(&self, v: Vec3<R>) -> Vec3<R> {
        Vec3::new(
            self.xx * v.x + self.xy * v.y + self.xz * v.z,
            self.xy * v.x + self.yy * v.y + self.yz * v.z,
            self.xz * v.x + self.yz * v.y + self.zz * v.z,
        )
    }

    /// `ξᵀ M ξ`.
    #[inline]
    pub fn quadratic_form(&self, xi: Vec3<R>) -> R {
        xi.dot(self.mul_vec(xi))
    }

    pub fn scale(self, s: R) -> Self {
        Self::from_array(self.to_array().map(|m| m * s))
    }

    pub fn max_abs(&self) -> R {
        self.to_array()
            .iter()
            .fold(R::zero(), |acc, m| acc.max(m.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|m| m.is_finite())
    }

    /// Eigenvalues in ascending order.
    ///
    /// Closed-form trigonometric solution of the characteristic cubic. When
    /// two roots nearly coalesce the arccos loses half the digits, so those
    /// matrices go through a cyclic Jacobi sweep instead.
    pub fn eigenvalues(&self) -> [R; 3] {
        let off = self.xy * self.xy + self.xz * self.xz + self.yz * self.yz;
        let scale = self.max_abs();
        if scale == R::zero() {
            return [R::zero(); 3];
        }
        if off <= R::epsilon() * R::epsilon() * scale * scale {
            let mut d = [self.xx, self.yy, self.zz];
            d.sort_by(|a, b| a.partial_cmp(b).unwrap());
            return d;
        }
        let three = R::lit(3.0);
        let q = self.trace() / three;
        let (dx, dy, dz) = (self.xx - q, self.yy - q, self.zz - q);
        let p2 = dx * dx + dy * dy + dz * dz + R::lit(2.0) * off;
        let p = (p2 / R::lit(6.0)).sqrt();
        let shifted = Self::new(dx, self.xy, self.xz, dy, self.yz, dz).scale(p.recip());
        let r = shifted.determinant() / R::lit(2.0);
        if R::one() - r.abs() < R::lit(1e-6) {
            return self.jacobi_eigenvalues();
        }
        let phi = r.acos() / three;
        let two_pi_3 = R::lit(2.0) * R::PI() / three;
        let hi = q + R::lit(2.0) * p * phi.cos();
        let lo = q + R::lit(2.0) * p * (phi + two_pi_3).cos();
        let mid = three * q - hi - lo;
        let mut e = [lo, mid, hi];
        e.sort_by(|a, b| a.partial_cmp(b).unwrap());
        e
    }

    /// Eigenvalues by cyclic Jacobi rotations, ascending.
    pub fn jacobi_eigenvalues(&self) -> [R; 3] {
        let mut a = [[R::zero(); 3]; 3];
        for (i, row) in a.iter_mut().enumerate() {
            for (j, m) in row.iter_mut().enumerate() {
                *m = self.get(i, j);
            }
        }
        let two = R::lit(2.0);
        for _sweep in 0..50 {
            let off = a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2];
            let diag = a[0][0] * a[0][0] + a[1][1] * a[1][1] + a[2][2] * a[2][2];
            if off <= R::epsilon() * R::epsilon() * diag || off == R::zero() {
                break;
            }
            for (p, q) in [(0usize, 1usize), (0, 2), (1, 2)] {
                if a[p][q] == R::zero() {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (two * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + R::one()).sqrt());
                let c = (t * t + R::one()).sqrt().recip();
                let s = t * c;
                for k in 0..3 {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..3 {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
        let mut e = [a[0][0], a[1][1], a[2][2]];
        e.sort_by(|x, y| x.partial_cmp(y).unwrap());
        e
    }
}

impl<R: Real> Add for SymMat3<R> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        let (a, b) = (self.to_array(), o.to_array());
        Self::from_array(std::array::from_fn(|k| a[k] + b[k]))
    }
}

impl<R: Real> AddAssign for SymMat3<R> {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<R: Real> Sub for SymMat3<R> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        let (a, b) = (self.to_array(), o.to_array());
        Self::from_array(std::array::from_fn(|k| a[k] - b[k]))
    }
}
