//! Product quadrature on the unit sphere and the moment identities that
//! certify the Calderón–Zygmund structure of the kernel Hessian.

use crate::kernel::{angular_hessian, KernelError};
use crate::scalar::Real;
use crate::tensor::Vec3;

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre<R: Real>(n: usize) -> (Vec<R>, Vec<R>) {
    assert!(n > 0, "need at least one Gauss node");
    let mut nodes = vec![0.0f64; n];
    let mut weights = vec![0.0f64; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess, refined by Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0f64, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = nf * (x * pn - pm) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (
        nodes.into_iter().map(R::lit).collect(),
        weights.into_iter().map(R::lit).collect(),
    )
}

/// Gauss–Legendre in `cos θ` times the uniform trapezoid rule in `φ`.
#[derive(Clone, Debug)]
pub struct SphereQuadrature<R> {
    pub points: Vec<Vec3<R>>,
    pub weights: Vec<R>,
}

impl<R: Real> SphereQuadrature<R> {
    /// `nodes` points per angle, `nodes²` in total.
    pub fn product_gauss(nodes: usize) -> Self {
        let (mu, w_mu) = gauss_legendre::<R>(nodes);
        let dphi = R::lit(2.0) * R::PI() / R::of_usize(nodes);
        let mut points = Vec::with_capacity(nodes * nodes);
        let mut weights = Vec::with_capacity(nodes * nodes);
        for (&c, &wc) in mu.iter().zip(&w_mu) {
            let s = (R::one() - c * c).max(R::zero()).sqrt();
            for k in 0..nodes {
                let phi = dphi * R::of_usize(k);
                points.push(Vec3::new(s * phi.cos(), s * phi.sin(), c));
                weights.push(wc * dphi);
            }
        }
        Self { points, weights }
    }

    pub fn integrate(&self, f: impl Fn(Vec3<R>) -> R) -> R {
        self.points
            .iter()
            .zip(&self.weights)
            .fold(R::zero(), |acc, (&p, &w)| acc + w * f(p))
    }
}

/// `∫_{S²} Π_{m} P_{idx_m}(u) dσ(u)` for a monomial of order 2 or 4.
///
/// Indices are 0-based coordinate labels.
pub fn sphere_moment<R: Real>(
    quad: &SphereQuadrature<R>,
    indices: &[usize],
) -> Result<R, KernelError> {
    if !matches!(indices.len(), 2 | 4) {
        return Err(KernelError::InvalidArgument(format!(
            "moment order must be 2 or 4, got {}",
            indices.len()
        )));
    }
    if let Some(bad) = indices.iter().find(|&&i| i > 2) {
        return Err(KernelError::InvalidArgument(format!(
            "coordinate index {bad} outside 0..3"
        )));
    }
    Ok(quad.integrate(|u| indices.iter().fold(R::one(), |acc, &i| acc * u[i])))
}

/// Closed forms: `(4π/3) δ_ij` and `(4π/15)(δ_ij δ_kl + δ_ik δ_jl + δ_il δ_jk)`.
pub fn sphere_moment_exact(indices: &[usize]) -> f64 {
    let d = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
    let four_pi = 4.0 * std::f64::consts::PI;
    match *indices {
        [i, j] => four_pi / 3.0 * d(i, j),
        [i, j, k, l] => four_pi / 15.0 * (d(i, j) * d(k, l) + d(i, k) * d(j, l) + d(i, l) * d(j, k)),
        _ => f64::NAN,
    }
}

/// Largest `|∫_{S²} μ_kl,ij dσ|` over all 81 index combinations.
pub fn mu_mean_zero_check<R: Real>(nodes: usize) -> Result<R, KernelError> {
    if nodes < 16 {
        return Err(KernelError::InvalidArgument(format!(
            "need at least 16 nodes per angle, got {nodes}"
        )));
    }
    let quad = SphereQuadrature::<R>::product_gauss(nodes);
    let mut acc = [[[[R::zero(); 3]; 3]; 3]; 3];
    for (&u, &w) in quad.points.iter().zip(&quad.weights) {
        let mu = angular_hessian(u);
        for (a, m) in acc.iter_mut().flatten().flatten().flatten().zip(mu.d.iter().flatten().flatten().flatten()) {
            *a = *a + w * *m;
        }
    }
    Ok(acc
        .iter()
        .flatten()
        .flatten()
        .flatten()
        .fold(R::zero(), |m, x| m.max(x.abs())))
}

/// `|∫_{S²} μ_kl,ij dσ|` for a single index tuple.
pub fn mu_mean_component<R: Real>(nodes: usize, k: usize, l: usize, i: usize, j: usize) -> R {
    let quad = SphereQuadrature::<R>::product_gauss(nodes);
    quad.integrate(|u| angular_hessian(u).d[k][l][i][j]).abs()
}
