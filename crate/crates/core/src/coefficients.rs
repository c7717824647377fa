//! Nonlocal collision coefficients `ā = a ⋆ f` and `b̄ = b ⋆ f`.
//!
//! Both paths share one discretization: a lattice sum over source nodes
//! `w ≠ v` weighted by `h³`, plus a singular-cell term for `ā`. The
//! excluded cell is replaced by the integral of `Π(z)/|z|` over the ball of
//! equal volume, `(4π/3) r_c² f(v) I` with `r_c = h (3/4π)^{1/3}`. The odd
//! kernel `b` contributes nothing from that cell.

use num_complex::Complex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{Ball, VelocityGrid};
use crate::kernel::{a_kernel, b_kernel};
use crate::scalar::Real;
use crate::spectral::{fast_length, Fft3};
use crate::tensor::{SymMat3, Vec3};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CoefficientError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Which convolution route produced a set of coefficients.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoefficientPath {
    Direct,
    Fast,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientFields<R> {
    pub grid: VelocityGrid<R>,
    pub abar: Vec<SymMat3<R>>,
    pub bbar: Vec<Vec3<R>>,
    pub provenance: CoefficientPath,
}

/// Isotropic weight of the excluded cell in `ā`.
pub fn singular_cell_weight<R: Real>(h: R) -> R {
    let four_pi_3 = R::lit(4.0) * R::PI() / R::lit(3.0);
    let rc = h * four_pi_3.recip().cbrt();
    four_pi_3 * rc * rc
}

/// First-order contribution of the excluded cell to `b̄`: expanding
/// `f(v - z) ≈ f(v) - z·∇f(v)` over the equal-volume ball gives
/// `(4π/3) r_c² ∇f(v)`. The zeroth-order term vanishes by oddness and is
/// all that [`CoefficientFields`] includes.
pub fn drift_cell_correction<R: Real>(grid: &VelocityGrid<R>, f: &[R]) -> Vec<Vec3<R>> {
    let w = singular_cell_weight(grid.spacing());
    grid.gradient(f).into_iter().map(|g| g * w).collect()
}

/// `ā(v_p)` by direct quadrature over every source node.
pub fn direct_abar_at<R: Real>(grid: &VelocityGrid<R>, f: &[R], p: usize) -> SymMat3<R> {
    let vp = grid.point(p);
    let w = grid.cell_volume();
    let mut acc = [R::zero(); 6];
    for (q, &fq) in f.iter().enumerate() {
        if q == p || fq == R::zero() {
            continue;
        }
        let a = a_kernel(vp - grid.point(q)).expect("distinct nodes").to_array();
        for (s, m) in acc.iter_mut().zip(a) {
            *s = *s + m * fq;
        }
    }
    SymMat3::from_array(acc).scale(w) + SymMat3::scalar(singular_cell_weight(grid.spacing()) * f[p])
}

/// `b̄(v_p)` by direct quadrature.
pub fn direct_bbar_at<R: Real>(grid: &VelocityGrid<R>, f: &[R], p: usize) -> Vec3<R> {
    let vp = grid.point(p);
    let mut acc = Vec3::zero();
    for (q, &fq) in f.iter().enumerate() {
        if q == p || fq == R::zero() {
            continue;
        }
        acc += b_kernel(vp - grid.point(q)).expect("distinct nodes") * fq;
    }
    acc * grid.cell_volume()
}

/// O(N²) reference for `ā` at every node.
pub fn direct_abar<R: Real>(grid: &VelocityGrid<R>, f: &[R]) -> Vec<SymMat3<R>> {
    (0..grid.len())
        .into_par_iter()
        .map(|p| direct_abar_at(grid, f, p))
        .collect()
}

/// O(N²) reference for `b̄` at every node.
pub fn direct_bbar<R: Real>(grid: &VelocityGrid<R>, f: &[R]) -> Vec<Vec3<R>> {
    (0..grid.len())
        .into_par_iter()
        .map(|p| direct_bbar_at(grid, f, p))
        .collect()
}

impl<R: Real> CoefficientFields<R> {
    pub fn direct(grid: &VelocityGrid<R>, f: &[R]) -> Self {
        Self {
            grid: *grid,
            abar: direct_abar(grid, f),
            bbar: direct_bbar(grid, f),
            provenance: CoefficientPath::Direct,
        }
    }

    /// Largest entry-wise deviation from `other`, relative to the largest
    /// entry of `other`, taken separately for `ā` and `b̄`.
    pub fn max_relative_deviation(&self, other: &Self) -> (R, R) {
        let dev_a = self
            .abar
            .iter()
            .zip(&other.abar)
            .fold(R::zero(), |m, (x, y)| m.max((*x - *y).max_abs()));
        let scale_a = other.abar.iter().fold(R::zero(), |m, y| m.max(y.max_abs()));
        let dev_b = self
            .bbar
            .iter()
            .zip(&other.bbar)
            .fold(R::zero(), |m, (x, y)| m.max((*x - *y).max_abs()));
        let scale_b = other.bbar.iter().fold(R::zero(), |m, y| m.max(y.max_abs()));
        let rel = |d: R, s: R| if s > R::zero() { d / s } else { d };
        (rel(dev_a, scale_a), rel(dev_b, scale_b))
    }
}

/// Number of packed complex spectra: nine real kernel components, two per
/// complex buffer.
const PACKS: usize = 5;

/// Spectral convolution engine for one grid. Holds the transformed kernel
/// tables, so build it once and reuse across time steps.
pub struct CoefficientEngine<R: Real> {
    grid: VelocityGrid<R>,
    fft: Fft3<R>,
    spectra: Vec<Vec<Complex<R>>>,
}

impl<R: Real> CoefficientEngine<R> {
    pub fn new(grid: VelocityGrid<R>) -> Self {
        let n = grid.n();
        let p = fast_length(2 * n - 1);
        let fft = Fft3::new(p);
        let h = grid.spacing();
        let w = grid.cell_volume();
        let self_weight = singular_cell_weight(h);
        let wrap = |d: isize| -> usize { d.rem_euclid(p as isize) as usize };
        let span = n as isize - 1;

        let mut tables = vec![vec![Complex::<R>::default(); p * p * p]; PACKS];
        for dz in -span..=span {
            for dy in -span..=span {
                for dx in -span..=span {
                    let idx = wrap(dx) + p * (wrap(dy) + p * wrap(dz));
                    let comps: [R; 9] = if dx == 0 && dy == 0 && dz == 0 {
                        let mut c = [R::zero(); 9];
                        c[0] = self_weight;
                        c[3] = self_weight;
                        c[5] = self_weight;
                        c
                    } else {
                        let z = Vec3::new(
                            R::lit(dx as f64) * h,
                            R::lit(dy as f64) * h,
                            R::lit(dz as f64) * h,
                        );
                        let a = a_kernel(z).unwrap().scale(w).to_array();
                        let b = b_kernel(z).unwrap() * w;
                        [a[0], a[1], a[2], a[3], a[4], a[5], b.x, b.y, b.z]
                    };
                    for (k, table) in tables.iter_mut().enumerate() {
                        let im = if 2 * k + 1 < 9 { comps[2 * k + 1] } else { R::zero() };
                        table[idx] = Complex::new(comps[2 * k], im);
                    }
                }
            }
        }
        for table in tables.iter_mut() {
            fft.forward(table, p);
        }
        Self { grid, fft, spectra: tables }
    }

    pub fn grid(&self) -> &VelocityGrid<R> {
        &self.grid
    }

    pub fn padded_len(&self) -> usize {
        self.fft.len()
    }

    /// `ā` and `b̄` by zero-padded spectral convolution.
    pub fn compute(&self, f: &[R]) -> CoefficientFields<R> {
        let n = self.grid.n();
        let p = self.fft.len();
        assert_eq!(f.len(), self.grid.len());
        let mut fhat = vec![Complex::<R>::default(); p * p * p];
        for k in 0..n {
            for j in 0..n {
                let src = &f[n * (j + n * k)..n * (j + n * k) + n];
                let dst = &mut fhat[p * (j + p * k)..p * (j + p * k) + n];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d = Complex::new(*s, R::zero());
                }
            }
        }
        self.fft.forward(&mut fhat, n);

        let norm = R::of_usize(p * p * p).recip();
        let mut comps = vec![vec![R::zero(); self.grid.len()]; 2 * PACKS];
        let mut work = vec![Complex::<R>::default(); p * p * p];
        for (k, spectrum) in self.spectra.iter().enumerate() {
            work.par_iter_mut()
                .zip(fhat.par_iter().zip(spectrum.par_iter()))
                .for_each(|(w, (a, b))| *w = a * b);
            self.fft.inverse(&mut work, n);
            let (lo, hi) = comps.split_at_mut(2 * k + 1);
            let (re, im) = (&mut lo[2 * k], &mut hi[0]);
            for kz in 0..n {
                for j in 0..n {
                    for i in 0..n {
                        let c = work[i + p * (j + p * kz)];
                        let q = i + n * (j + n * kz);
                        re[q] = c.re * norm;
                        im[q] = c.im * norm;
                    }
                }
            }
        }
        let abar = (0..self.grid.len())
            .map(|q| {
                SymMat3::new(
                    comps[0][q], comps[1][q], comps[2][q], comps[3][q], comps[4][q], comps[5][q],
                )
            })
            .collect();
        let bbar = (0..self.grid.len())
            .map(|q| Vec3::new(comps[6][q], comps[7][q], comps[8][q]))
            .collect();
        CoefficientFields { grid: self.grid, abar, bbar, provenance: CoefficientPath::Fast }
    }
}

/// `‖∇·b̄ + 8π f‖₂ / ‖8π f‖₂` over interior nodes; zero for a zero field.
pub fn divergence_identity_residual<R: Real>(f: &[R], coeff: &CoefficientFields<R>) -> R {
    let grid = &coeff.grid;
    let eight_pi = R::lit(8.0) * R::PI();
    let div = grid.divergence(&coeff.bbar);
    let (mut num, mut den) = (R::zero(), R::zero());
    for p in (0..grid.len()).filter(|&p| grid.is_interior(p)) {
        let src = eight_pi * f[p];
        num = num + (div[p] + src) * (div[p] + src);
        den = den + src * src;
    }
    if den == R::zero() {
        R::zero()
    } else {
        (num / den).sqrt()
    }
}

/// Extreme eigenvalues of `ā` over the nodes of a ball at one instant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EllipticityReport<R> {
    pub time: R,
    pub ball: Ball<R>,
    pub c_min: R,
    pub c_max: R,
    pub argmin: usize,
    pub argmax: usize,
}

pub fn ellipticity_bounds<R: Real>(
    coeff: &CoefficientFields<R>,
    ball: &Ball<R>,
    time: R,
) -> Result<EllipticityReport<R>, CoefficientError> {
    let nodes = coeff.grid.nodes_in_ball(ball);
    if nodes.is_empty() {
        return Err(CoefficientError::InvalidArgument(
            "ellipticity ball contains no grid nodes".into(),
        ));
    }
    let mut report = EllipticityReport {
        time,
        ball: *ball,
        c_min: R::infinity(),
        c_max: R::neg_infinity(),
        argmin: nodes[0],
        argmax: nodes[0],
    };
    for p in nodes {
        let e = coeff.abar[p].eigenvalues();
        if e[0] < report.c_min {
            report.c_min = e[0];
            report.argmin = p;
        }
        if e[2] > report.c_max {
            report.c_max = e[2];
            report.argmax = p;
        }
    }
    Ok(report)
}

/// `A(q) = 2 ‖1/|z|‖_{L^{q'}(B₁)} = 2 (4π / (3 - q'))^{1/q'}`, the Hölder
/// constant bounding the near-field part of `ā ξ·ξ` by `‖f‖_{L^q}`.
/// Finite for `q > 3/2`.
pub fn near_field_constant(q: f64) -> Result<f64, CoefficientError> {
    if !(q > 1.5) {
        return Err(CoefficientError::InvalidArgument(format!(
            "near-field constant needs q > 3/2, got {q}"
        )));
    }
    let qp = if q.is_infinite() { 1.0 } else { q / (q - 1.0) };
    Ok(2.0 * (4.0 * std::f64::consts::PI / (3.0 - qp)).powf(1.0 / qp))
}

/// Upper ellipticity constant `A(q) S₀ + 2 M₀`. `s0` must bound
/// `‖f‖_{L^q(B₁(v))}` for every `v` of interest.
pub fn ellipticity_upper_bound(q: f64, s0: f64, m0: f64) -> Result<f64, CoefficientError> {
    Ok(near_field_constant(q)? * s0 + 2.0 * m0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiles::{Maxwellian, Profile};
    use approx::assert_relative_eq;

    fn grid(n: usize) -> VelocityGrid<f64> {
        VelocityGrid::new(n, 8.0).unwrap()
    }

    fn spike(g: &VelocityGrid<f64>, p: usize) -> Vec<f64> {
        let mut f = vec![0.0; g.len()];
        f[p] = 1.0 / g.cell_volume();
        f
    }

    #[test]
    fn point_mass_reproduces_kernel() {
        let g = grid(9);
        let w0 = g.index(4, 4, 4);
        let f = spike(&g, w0);
        let direct = CoefficientFields::direct(&g, &f);
        let fast = CoefficientEngine::new(g).compute(&f);
        for p in (0..g.len()).filter(|&p| p != w0) {
            let a = a_kernel(g.point(p) - g.point(w0)).unwrap();
            let b = b_kernel(g.point(p) - g.point(w0)).unwrap();
            assert!((direct.abar[p] - a).max_abs() < 1e-14 * a.max_abs().max(1.0));
            assert!((direct.bbar[p] - b).max_abs() < 1e-14 * b.max_abs().max(1.0));
            assert!((fast.abar[p] - a).max_abs() < 1e-12);
            assert!((fast.bbar[p] - b).max_abs() < 1e-12);
        }
    }

    #[test]
    fn zero_field_gives_zero_coefficients() {
        let g = grid(9);
        let f = vec![0.0; g.len()];
        let c = CoefficientEngine::new(g).compute(&f);
        assert!(c.abar.iter().all(|m| m.max_abs() == 0.0));
        assert!(c.bbar.iter().all(|b| b.max_abs() == 0.0));
        assert_eq!(divergence_identity_residual(&f, &c), 0.0);
    }

    #[test]
    fn radial_field_is_isotropic_at_origin() {
        // ā(0) = (2/3) ∫ f/|z| dz I = (2/3) sqrt(2/π) I for the unit Maxwellian.
        let lambda = 2.0 / 3.0 * (2.0 / std::f64::consts::PI).sqrt();
        let err = |n: usize| {
            let g = grid(n);
            let f = Profile::Maxwellian(Maxwellian::standard()).sample(g);
            let c = n / 2;
            let a0 = direct_abar_at(&g, &f.values, g.index(c, c, c));
            assert!(a0.xy.abs() < 1e-14 && a0.xz.abs() < 1e-14 && a0.yz.abs() < 1e-14);
            assert_relative_eq!(a0.xx, a0.yy, epsilon = 1e-14);
            assert_relative_eq!(a0.xx, a0.zz, epsilon = 1e-14);
            (a0.xx - lambda).abs() / lambda
        };
        let (coarse, fine) = (err(17), err(33));
        assert!(fine < coarse && fine < 1e-2, "{coarse} {fine}");
    }

    #[test]
    fn fast_matches_direct_on_maxwellian() {
        let g = grid(17);
        let f = Profile::Maxwellian(Maxwellian::new(1.0, Vec3::new(0.5, -0.25, 0.0), 1.3)).sample(g);
        let direct = CoefficientFields::direct(&g, &f.values);
        let fast = CoefficientEngine::new(g).compute(&f.values);
        let (da, db) = fast.max_relative_deviation(&direct);
        assert!(da < 1e-6 && db < 1e-6, "{da} {db}");
    }

    #[test]
    fn coefficients_are_linear_and_equivariant() {
        let g = grid(17);
        let eng = CoefficientEngine::new(g);
        let f = Profile::Maxwellian(Maxwellian::new(1.0, Vec3::new(-1.0, 0.0, 0.0), 0.7)).sample(g).values;
        let h = Profile::Maxwellian(Maxwellian::new(0.5, Vec3::new(1.0, 1.0, 0.0), 1.1)).sample(g).values;
        let sum: Vec<f64> = f.iter().zip(&h).map(|(a, b)| a + b).collect();
        let (cf, ch, cs) = (eng.compute(&f), eng.compute(&h), eng.compute(&sum));
        for p in 0..g.len() {
            assert!((cs.abar[p] - (cf.abar[p] + ch.abar[p])).max_abs() < 1e-12);
        }
        let shifted = eng.compute(&g.shift(&f, 0, 1));
        for p in (0..g.len()).filter(|&p| g.is_interior(p)) {
            let q = p - 1;
            assert!((shifted.abar[p] - cf.abar[q]).max_abs() < 1e-10 * cf.abar[q].max_abs());
        }
    }

    #[test]
    fn abar_is_positive_semidefinite() {
        let g = grid(17);
        let f = Profile::Maxwellian(Maxwellian::standard()).sample(g);
        let c = CoefficientEngine::new(g).compute(&f.values);
        for m in &c.abar {
            assert!(m.eigenvalues()[0] > -1e-12);
        }
    }

    #[test]
    fn point_mass_ellipticity_pattern() {
        let g = grid(17);
        let origin = g.index(8, 8, 8);
        let c = CoefficientFields::direct(&g, &spike(&g, origin));
        let ball = Ball::new(Vec3::new(3.0, 0.0, 0.0), 0.5);
        let rep = ellipticity_bounds(&c, &ball, 0.0).unwrap();
        let v = g.point(rep.argmax);
        assert_relative_eq!(rep.c_max, 1.0 / v.norm(), epsilon = 1e-12);
        assert!(rep.c_min.abs() < 1e-12);
        let empty = Ball::new(Vec3::new(0.25, 0.25, 0.25), 0.1);
        assert!(ellipticity_bounds(&c, &empty, 0.0).is_err());
    }

    #[test]
    fn near_field_constant_values() {
        // q = ∞: 2 · 4π/2 = 4π
        assert_relative_eq!(near_field_constant(f64::INFINITY).unwrap(), 4.0 * std::f64::consts::PI);
        let a4 = near_field_constant(4.0).unwrap();
        let qp: f64 = 4.0 / 3.0;
        assert_relative_eq!(a4, 2.0 * (4.0 * std::f64::consts::PI / (3.0 - qp)).powf(1.0 / qp));
        assert!(near_field_constant(1.5).is_err());
    }
}
