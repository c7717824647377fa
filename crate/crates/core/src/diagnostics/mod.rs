//! Functionals of a single field and of a trajectory: conserved moments,
//! entropy, weighted Fisher information, integrability on a ball, and the
//! per-step record written by runs. Parabolic Hölder estimators live in
//! [`holder`].

pub mod holder;

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coefficients::{ellipticity_bounds, CoefficientFields};
use crate::grid::{Ball, DistributionField};
use crate::scalar::Real;
use crate::solver::Trajectory;
use crate::tensor::Vec3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiagnosticsError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// What a run monitors besides the conserved quantities: the `L^q` norm on
/// `ball` and the ellipticity of `ā` on the same ball.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Monitors<R> {
    pub q: R,
    pub ball: Ball<R>,
}

impl<R: Real> Monitors<R> {
    pub fn new(q: R, ball: Ball<R>) -> Self {
        Self { q, ball }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Moments<R> {
    pub mass: R,
    pub momentum: Vec3<R>,
    pub energy: R,
}

/// Trapezoid quadratures of `f`, `f v` and `f |v|²/2`.
pub fn conserved_moments<R: Real>(f: &DistributionField<R>) -> Moments<R> {
    let g = &f.grid;
    let half = R::lit(0.5);
    let (mut m, mut p, mut e) = (R::zero(), Vec3::zero(), R::zero());
    for (idx, &val) in f.values.iter().enumerate() {
        let w = g.trapezoid_weight(idx) * val;
        let v = g.point(idx);
        m = m + w;
        p += v * w;
        e = e + w * half * v.norm_squared();
    }
    Moments { mass: m, momentum: p, energy: e }
}

/// `∫ f log f`, nodes with `f ≤ 0` contributing nothing.
pub fn entropy<R: Real>(f: &DistributionField<R>) -> R {
    let g = &f.grid;
    f.values
        .iter()
        .enumerate()
        .filter(|(_, v)| **v > R::zero())
        .map(|(p, &v)| g.trapezoid_weight(p) * v * v.ln())
        .sum()
}

/// `∫ |∇√f⁺|² (1 + |v|²)^{-3/2}` with the grid gradient of `√max(f, 0)`.
pub fn weighted_fisher<R: Real>(f: &DistributionField<R>) -> R {
    let g = &f.grid;
    let root: Vec<R> = f.values.iter().map(|v| v.max(R::zero()).sqrt()).collect();
    let grad = g.gradient(&root);
    grad.iter()
        .enumerate()
        .map(|(p, d)| {
            let v2 = g.point(p).norm_squared();
            g.trapezoid_weight(p) * d.norm_squared() * (R::one() + v2).powf(R::lit(-1.5))
        })
        .sum()
}

/// Trapezoid rule in time of [`weighted_fisher`] over the snapshots.
pub fn fisher_time_integral<R: Real>(traj: &Trajectory<R>) -> R {
    let vals: Vec<(R, R)> = traj.snapshots.iter().map(|f| (f.time, weighted_fisher(f))).collect();
    vals.windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) * R::lit(0.5))
        .sum()
}

/// `‖f⁻‖_{L¹}`.
pub fn negativity<R: Real>(f: &DistributionField<R>) -> R {
    f.values
        .iter()
        .enumerate()
        .filter(|(_, v)| **v < R::zero())
        .map(|(p, &v)| -v * f.grid.trapezoid_weight(p))
        .fold(R::zero(), |a, x| a + x)
}

/// Mass carried by the two outermost node layers, a proxy for what the
/// truncation to the cube cuts off.
pub fn truncated_mass<R: Real>(f: &DistributionField<R>) -> R {
    let g = &f.grid;
    f.values
        .iter()
        .enumerate()
        .filter(|(p, _)| g.depth(*p) < 2)
        .map(|(p, &v)| g.trapezoid_weight(p) * v)
        .sum()
}

/// Largest `|∫ fφ(t) - ∫ fφ(s)| / |t - s|^{1/2}` over all snapshot pairs.
pub fn moment_time_holder<R: Real>(
    traj: &Trajectory<R>,
    phi: impl Fn(Vec3<R>) -> R,
) -> Result<R, DiagnosticsError> {
    if traj.len() < 2 {
        return Err(DiagnosticsError::InvalidArgument(format!(
            "moment Hölder constant needs at least 2 snapshots, got {}",
            traj.len()
        )));
    }
    let m: Vec<(R, R)> = traj.snapshots.iter().map(|f| (f.time, f.integrate(&phi))).collect();
    let mut best = R::zero();
    for (a, &(s, ms)) in m.iter().enumerate() {
        for &(t, mt) in &m[a + 1..] {
            best = best.max((mt - ms).abs() / (t - s).abs().sqrt());
        }
    }
    Ok(best)
}

pub const CSV_HEADER: &str =
    "time,mass,px,py,pz,energy,entropy,fisher,lq,ellip_c,ellip_C,negativity,trunc_mass,lin_res";

/// Everything measured after one step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord<R> {
    pub time: R,
    pub mass: R,
    pub momentum: Vec3<R>,
    pub energy: R,
    pub entropy: R,
    pub weighted_fisher: R,
    pub lq_ball_norm: R,
    pub ellipticity_min: R,
    pub ellipticity_max: R,
    pub negativity: R,
    pub truncated_mass: R,
    pub linear_residual: R,
}

impl<R: Real> DiagnosticsRecord<R> {
    /// `coeff` must have been assembled from `f`.
    pub fn evaluate(
        f: &DistributionField<R>,
        coeff: &CoefficientFields<R>,
        monitors: &Monitors<R>,
        linear_residual: R,
    ) -> Self {
        let mo = conserved_moments(f);
        let lq = f
            .grid
            .lq_norm_on_ball(&f.values, &monitors.ball, monitors.q)
            .unwrap_or(R::nan());
        let (c, cmax) = match ellipticity_bounds(coeff, &monitors.ball, f.time) {
            Ok(r) => (r.c_min, r.c_max),
            Err(_) => (R::nan(), R::nan()),
        };
        Self {
            time: f.time,
            mass: mo.mass,
            momentum: mo.momentum,
            energy: mo.energy,
            entropy: entropy(f),
            weighted_fisher: weighted_fisher(f),
            lq_ball_norm: lq,
            ellipticity_min: c,
            ellipticity_max: cmax,
            negativity: negativity(f),
            truncated_mass: truncated_mass(f),
            linear_residual,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.fields().iter().all(|v| v.is_finite())
    }

    fn fields(&self) -> [R; 14] {
        [
            self.time,
            self.mass,
            self.momentum.x,
            self.momentum.y,
            self.momentum.z,
            self.energy,
            self.entropy,
            self.weighted_fisher,
            self.lq_ball_norm,
            self.ellipticity_min,
            self.ellipticity_max,
            self.negativity,
            self.truncated_mass,
            self.linear_residual,
        ]
    }

    /// One CSV row, 17 significant digits per value.
    pub fn csv_row(&self) -> String {
        let cells: Vec<String> = self.fields().iter().map(|v| format!("{:.16e}", v.as_f64())).collect();
        cells.join(",")
    }
}

pub fn write_csv<R: Real, W: Write>(records: &[DiagnosticsRecord<R>], mut w: W) -> io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in records {
        writeln!(w, "{}", r.csv_row())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::VelocityGrid;
    use crate::profiles::{Maxwellian, Profile};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn grid(n: usize) -> VelocityGrid<f64> {
        VelocityGrid::new(n, 8.0).unwrap()
    }

    fn maxwellian(n: usize, mean: Vec3<f64>) -> DistributionField<f64> {
        Profile::Maxwellian(Maxwellian::new(1.0, mean, 1.0)).sample(grid(n))
    }

    #[test]
    fn moments_of_shifted_maxwellian() {
        let m = conserved_moments(&maxwellian(33, Vec3::new(1.0, 0.0, 0.0)));
        assert!((m.momentum - Vec3::new(1.0, 0.0, 0.0)).max_abs() < 1e-4);
        assert_relative_eq!(m.mass, 1.0, epsilon = 1e-6);
        assert_relative_eq!(m.energy, 2.0, epsilon = 1e-4);
    }

    #[test]
    fn moments_of_zero_and_doubled_fields() {
        let z = conserved_moments(&DistributionField::zeros(grid(9)));
        assert_eq!((z.mass, z.momentum, z.energy), (0.0, Vec3::zero(), 0.0));
        let f = maxwellian(17, Vec3::new(0.3, -0.2, 0.5));
        let (a, b) = (conserved_moments(&f), conserved_moments(&f.scaled(2.0)));
        assert_eq!(b.mass, 2.0 * a.mass);
        assert_eq!(b.momentum, a.momentum * 2.0);
        assert_eq!(b.energy, 2.0 * a.energy);
    }

    #[test]
    fn entropy_matches_gaussian_closed_form() {
        let h = entropy(&maxwellian(33, Vec3::zero()));
        let exact = -1.5 * (1.0 + (2.0 * std::f64::consts::PI).ln());
        assert!((h - exact).abs() < 1e-3, "{h} vs {exact}");
    }

    #[test]
    fn entropy_of_constant_field() {
        let g = VelocityGrid::new(9, 1.0).unwrap();
        let c: f64 = 0.3;
        let f = DistributionField::from_fn(g, |_| c);
        let m = c * 8.0;
        assert_relative_eq!(entropy(&f), m * c.ln(), max_relative = 1e-13);
    }

    fn radial_fisher_oracle() -> f64 {
        // |∇√M|² = |v|²/4 M; Simpson in r on [0, 8].
        let steps = 20_000;
        let dr = 8.0 / steps as f64;
        let integrand = |r: f64| {
            let m = (2.0 * std::f64::consts::PI).powf(-1.5) * (-r * r / 2.0).exp();
            4.0 * std::f64::consts::PI * r * r * m * r * r / 4.0 * (1.0 + r * r).powf(-1.5)
        };
        let mut s = integrand(0.0) + integrand(8.0);
        for k in 1..steps {
            s += integrand(k as f64 * dr) * if k % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * dr / 3.0
    }

    #[test]
    fn fisher_identity_quadrature_matches_radial_oracle() {
        let oracle = radial_fisher_oracle();
        let f = maxwellian(33, Vec3::zero());
        let q = f.integrate(|v| v.norm_squared() / 4.0 * (1.0 + v.norm_squared()).powf(-1.5));
        assert!(((q - oracle) / oracle).abs() < 1e-3, "{q} vs {oracle}");
    }

    #[test]
    fn fisher_converges_to_radial_oracle() {
        // the discrete gradient is second order: errors shrink ~4x per
        // halving of h and the Richardson value meets the oracle
        let oracle = radial_fisher_oracle();
        let (a, b) = (weighted_fisher(&maxwellian(33, Vec3::zero())), weighted_fisher(&maxwellian(65, Vec3::zero())));
        let (ea, eb) = ((a - oracle).abs(), (b - oracle).abs());
        assert!(ea / eb > 3.5, "{ea} {eb}");
        let extrapolated = (4.0 * b - a) / 3.0;
        assert!(((extrapolated - oracle) / oracle).abs() < 1e-3, "{extrapolated} vs {oracle}");
    }

    #[test]
    fn fisher_of_constant_is_zero_and_permutation_invariant() {
        let g = grid(9);
        assert!(weighted_fisher(&DistributionField::from_fn(g, |_| 2.0)) < 1e-28);
        let g = grid(17);
        let radial = |v: Vec3<f64>| (-(v.x * v.x + 2.0 * v.y * v.y + 3.0 * v.z * v.z) / 4.0).exp();
        let a = weighted_fisher(&DistributionField::from_fn(g, radial));
        let b = weighted_fisher(&DistributionField::from_fn(g, |v| radial(Vec3::new(v.z, v.x, v.y))));
        assert_relative_eq!(a, b, max_relative = 1e-12);
    }

    #[test]
    fn negativity_and_truncation() {
        let g = grid(9);
        let f = DistributionField::from_fn(g, |v| if v.x < 0.0 { -1.0 } else { 0.0 });
        assert!(negativity(&f) > 0.0);
        assert_eq!(negativity(&maxwellian(9, Vec3::zero())), 0.0);
        let one = DistributionField::from_fn(g, |_| 1.0);
        let shell = truncated_mass(&one);
        assert!(shell > 0.0 && shell < one.mass());
    }

    #[test]
    fn stationary_trajectory_has_zero_moment_holder() {
        let f = maxwellian(9, Vec3::zero());
        let mut t = Trajectory::new();
        for k in 0..4 {
            t.push(f.clone().with_time(k as f64 * 0.1));
        }
        assert_eq!(moment_time_holder(&t, |v| v.x * v.x).unwrap(), 0.0);
        let mut short = Trajectory::new();
        short.push(f);
        assert!(moment_time_holder(&short, |_| 1.0).is_err());
    }

    #[test]
    fn csv_row_has_every_column() {
        let f = maxwellian(17, Vec3::zero());
        let c = CoefficientFields::direct(&f.grid, &f.values);
        let r = DiagnosticsRecord::evaluate(&f, &c, &Monitors::new(4.0, Ball::centered(2.0)), 0.0);
        assert!(r.is_finite());
        assert_eq!(r.csv_row().split(',').count(), CSV_HEADER.split(',').count());
        assert!(r.ellipticity_min > 0.0 && r.ellipticity_max >= r.ellipticity_min);
        let mut buf = Vec::new();
        write_csv(&[r], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 2);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn entropy_doubling_identity(mass in 0.2f64..3.0, t in 0.5f64..2.0, ux in -1.0f64..1.0) {
            let f = Profile::Maxwellian(Maxwellian::new(mass, Vec3::new(ux, 0.0, 0.0), t)).sample(grid(17));
            let lhs = entropy(&f.scaled(2.0));
            let rhs = 2.0 * entropy(&f) + 2.0 * f.mass() * 2f64.ln();
            prop_assert!((lhs - rhs).abs() < 1e-12 * (1.0 + lhs.abs()));
        }
    }
}
