//! Closed-form Coulomb Landau kernel and its derivatives.
//!
//! With `r = |z|` the kernel is `a_ij(z) = (δ_ij - z_i z_j / r²) / r`, a
//! projection onto the plane orthogonal to `z` scaled by `1/r`. Its first
//! derivative contracts to `b_i(z) = Σ_j ∂_j a_ij(z) = -2 z_i / r³`, whose
//! divergence is `-8π δ`. The second derivative has the Calderón–Zygmund
//! form `μ_kl(z/r) / r³` with an even, mean-zero angular part `μ`.

use thiserror::Error;

use crate::scalar::Real;
use crate::tensor::{SymMat3, Vec3};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KernelError {
    #[error("kernel is singular at the origin")]
    SingularPoint,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// `∂_k a_ij`, indexed `[k][i][j]`; symmetric in `(i, j)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rank3Sym<R> {
    pub d: [[[R; 3]; 3]; 3],
}

/// `∂_k ∂_l a_ij`, indexed `[k][l][i][j]`; symmetric in `(i, j)` and `(k, l)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rank4Sym<R> {
    pub d: [[[[R; 3]; 3]; 3]; 3],
}

impl<R: Real> Rank3Sym<R> {
    pub fn get(&self, k: usize, i: usize, j: usize) -> R {
        self.d[k][i][j]
    }

    /// `Σ_j ∂_j a_ij`.
    pub fn contract(&self) -> Vec3<R> {
        let c = |i: usize| (0..3).fold(R::zero(), |acc, j| acc + self.d[j][i][j]);
        Vec3::new(c(0), c(1), c(2))
    }

    pub fn max_abs(&self) -> R {
        self.d
            .iter()
            .flatten()
            .flatten()
            .fold(R::zero(), |m, x| m.max(x.abs()))
    }
}

impl<R: Real> Rank4Sym<R> {
    pub fn get(&self, k: usize, l: usize, i: usize, j: usize) -> R {
        self.d[k][l][i][j]
    }

    pub fn max_abs(&self) -> R {
        self.d
            .iter()
            .flatten()
            .flatten()
            .flatten()
            .fold(R::zero(), |m, x| m.max(x.abs()))
    }

    pub fn scale(&self, s: R) -> Self {
        let mut out = *self;
        out.d
            .iter_mut()
            .flatten()
            .flatten()
            .flatten()
            .for_each(|x| *x = *x * s);
        out
    }
}

#[inline]
fn delta<R: Real>(i: usize, j: usize) -> R {
    if i == j {
        R::one()
    } else {
        R::zero()
    }
}

#[inline]
fn nonzero<R: Real>(z: Vec3<R>) -> Result<R, KernelError> {
    let r2 = z.norm_squared();
    if r2 > R::zero() && r2.is_finite() {
        Ok(r2)
    } else {
        Err(KernelError::SingularPoint)
    }
}

/// `Π(z) = I - ẑ ⊗ ẑ`.
pub fn pi_matrix<R: Real>(z: Vec3<R>) -> Result<SymMat3<R>, KernelError> {
    let r2 = nonzero(z)?;
    let inv = r2.recip();
    Ok(SymMat3::new(
        R::one() - z.x * z.x * inv,
        -z.x * z.y * inv,
        -z.x * z.z * inv,
        R::one() - z.y * z.y * inv,
        -z.y * z.z * inv,
        R::one() - z.z * z.z * inv,
    ))
}

/// `a(z) = Π(z) / |z|`.
pub fn a_kernel<R: Real>(z: Vec3<R>) -> Result<SymMat3<R>, KernelError> {
    let r = nonzero(z)?.sqrt();
    Ok(pi_matrix(z)?.scale(r.recip()))
}

/// `b(z) = -2 z / |z|³`.
pub fn b_kernel<R: Real>(z: Vec3<R>) -> Result<Vec3<R>, KernelError> {
    let r2 = nonzero(z)?;
    let r3 = r2 * r2.sqrt();
    Ok(z * (-R::lit(2.0) / r3))
}

/// Exact gradient of [`a_kernel`]:
/// `∂_k a_ij = -δ_ij z_k / r³ - (δ_ik z_j + δ_jk z_i) / r³ + 3 z_i z_j z_k / r⁵`.
pub fn grad_a_kernel<R: Real>(z: Vec3<R>) -> Result<Rank3Sym<R>, KernelError> {
    let r2 = nonzero(z)?;
    let r = r2.sqrt();
    let inv3 = (r2 * r).recip();
    let inv5 = inv3 / r2;
    let three = R::lit(3.0);
    let mut d = [[[R::zero(); 3]; 3]; 3];
    for (k, dk) in d.iter_mut().enumerate() {
        for i in 0..3 {
            for j in i..3 {
                let v = -(delta::<R>(i, j) * z[k] + delta::<R>(i, k) * z[j] + delta::<R>(j, k) * z[i])
                    * inv3
                    + three * z[i] * z[j] * z[k] * inv5;
                dk[i][j] = v;
                dk[j][i] = v;
            }
        }
    }
    Ok(Rank3Sym { d })
}

/// Degree-zero angular factor `μ_kl,ij(u)` of the Hessian, for unit `u`.
///
/// `μ = -(δ_ij δ_kl + δ_ik δ_jl + δ_il δ_jk)
///      + 3 (δ_ij u_k u_l + δ_kl u_i u_j + δ_ik u_j u_l + δ_jl u_i u_k + δ_il u_j u_k + δ_jk u_i u_l)
///      - 15 u_i u_j u_k u_l`.
///
/// `u` is used as given; callers pass a unit vector.
pub fn angular_hessian<R: Real>(u: Vec3<R>) -> Rank4Sym<R> {
    let three = R::lit(3.0);
    let fifteen = R::lit(15.0);
    let mut d = [[[[R::zero(); 3]; 3]; 3]; 3];
    for k in 0..3 {
        for l in k..3 {
            for i in 0..3 {
                for j in i..3 {
                    let dd = |a: usize, b: usize| delta::<R>(a, b);
                    let v = -(dd(i, j) * dd(k, l) + dd(i, k) * dd(j, l) + dd(i, l) * dd(j, k))
                        + three
                            * (dd(i, j) * u[k] * u[l]
                                + dd(k, l) * u[i] * u[j]
                                + dd(i, k) * u[j] * u[l]
                                + dd(j, l) * u[i] * u[k]
                                + dd(i, l) * u[j] * u[k]
                                + dd(j, k) * u[i] * u[l])
                        - fifteen * u[i] * u[j] * u[k] * u[l];
                    d[k][l][i][j] = v;
                    d[k][l][j][i] = v;
                    d[l][k][i][j] = v;
                    d[l][k][j][i] = v;
                }
            }
        }
    }
    Rank4Sym { d }
}

/// Exact Hessian of [`a_kernel`], `∂_kl a_ij(z) = μ_kl,ij(z/|z|) / |z|³`.
pub fn hess_a_kernel<R: Real>(z: Vec3<R>) -> Result<Rank4Sym<R>, KernelError> {
    let r2 = nonzero(z)?;
    let r = r2.sqrt();
    let u = z * r.recip();
    Ok(angular_hessian(u).scale((r2 * r).recip()))
}
