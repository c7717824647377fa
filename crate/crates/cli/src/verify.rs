//! `landau verify`: kernel identities and convolution path equivalence.

use std::f64::consts::PI;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use landau_core::coefficients::{CoefficientEngine, CoefficientFields};
use landau_core::grid::{DistributionField, VelocityGrid};
use landau_core::kernel::{a_kernel, grad_a_kernel, hess_a_kernel};
use landau_core::profiles::{CompactBump, Maxwellian};
use landau_core::sphere::{mu_mean_zero_check, sphere_moment, sphere_moment_exact, SphereQuadrature};
use landau_core::tensor::SymMat3;
use landau_core::Vec3d;

pub const DEFAULT_NODES: usize = 64;
pub const DEFAULT_CONV_N: usize = 17;
pub const KERNEL_SAMPLES: usize = 1000;

/// One line of the pass/fail table.
#[derive(Clone, Debug)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: String,
    pub pass: bool,
}

impl Check {
    fn below(name: impl Into<String>, value: f64, tol: f64) -> Self {
        Self { name: name.into(), value, bound: format!("< {tol:e}"), pass: value < tol }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.pass { "PASS" } else { "FAIL" };
        write!(f, "{:<44} {:<14} {:<10} {}", self.name, fmt_value(self.value), self.bound, verdict)
    }
}

fn fmt_value(x: f64) -> String {
    if x != 0.0 && (x.abs() < 1e-3 || x.abs() >= 1e4) {
        format!("{x:.3e}")
    } else {
        format!("{x:.5}")
    }
}

pub fn print_table(title: &str, checks: &[Check]) {
    println!("{title}");
    for c in checks {
        println!("  {c}");
    }
    let failed = checks.iter().filter(|c| !c.pass).count();
    println!("{} checks, {} failed", checks.len(), failed);
}

/// Log-uniform radius in `[1e-2, 1e2]`, uniform direction.
fn random_point(rng: &mut ChaCha8Rng) -> Vec3d {
    loop {
        let u = Vec3d::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let n = u.norm();
        if n > 1e-3 && n <= 1.0 {
            let r = 10f64.powf(rng.gen_range(-2.0..=2.0));
            return u * (r / n);
        }
    }
}

fn rel(err: f64, scale: f64) -> f64 {
    if scale > 0.0 {
        err / scale
    } else {
        err
    }
}

fn matrix_diff(a: &SymMat3<f64>, b: &SymMat3<f64>) -> [[f64; 3]; 3] {
    let mut d = [[0.0; 3]; 3];
    for (i, row) in d.iter_mut().enumerate() {
        for (j, x) in row.iter_mut().enumerate() {
            *x = a.get(i, j) - b.get(i, j);
        }
    }
    d
}

/// Worst relative errors of the null direction, the trace, and the first
/// and second derivatives against central differences.
fn kernel_samples(samples: usize, seed: u64) -> [f64; 4] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = [0.0f64; 4];
    let a = |z: Vec3d| a_kernel(z).expect("nonzero point");
    for _ in 0..samples {
        let z = random_point(&mut rng);
        let r = z.norm();
        let az = a(z);
        worst[0] = worst[0].max(az.mul_vec(z).max_abs() / (az.max_abs() * r));
        worst[1] = worst[1].max(((az.trace() - 2.0 / r) * r / 2.0).abs());

        let grad = grad_a_kernel(z).expect("nonzero point");
        let h = 1e-5 * r;
        let mut err = 0.0f64;
        for k in 0..3 {
            let e = Vec3d::axis(k) * h;
            let d = matrix_diff(&a(z + e), &a(z - e));
            for i in 0..3 {
                for j in 0..3 {
                    err = err.max((d[i][j] / (2.0 * h) - grad.get(k, i, j)).abs());
                }
            }
        }
        worst[2] = worst[2].max(rel(err, grad.max_abs()));

        let hess = hess_a_kernel(z).expect("nonzero point");
        let h = 3e-4 * r;
        let mut err = 0.0f64;
        for k in 0..3 {
            for l in 0..3 {
                let (ek, el) = (Vec3d::axis(k) * h, Vec3d::axis(l) * h);
                let pp = a(z + ek + el);
                let pm = a(z + ek - el);
                let mp = a(z - ek + el);
                let mm = a(z - ek - el);
                for i in 0..3 {
                    for j in 0..3 {
                        let fd = (pp.get(i, j) - pm.get(i, j) - mp.get(i, j) + mm.get(i, j)) / (4.0 * h * h);
                        err = err.max((fd - hess.get(k, l, i, j)).abs());
                    }
                }
            }
        }
        worst[3] = worst[3].max(rel(err, hess.max_abs()));
    }
    worst
}

fn subscript(i: usize) -> char {
    ['₁', '₂', '₃'][i]
}

/// Sphere moments, the mean-zero angular identity and finite-difference
/// certification of the kernel derivatives.
pub fn kernel_suite(nodes: usize) -> Vec<Check> {
    let quad = SphereQuadrature::<f64>::product_gauss(nodes);
    let mut checks = Vec::new();
    let p11 = sphere_moment(&quad, &[0, 0]).unwrap_or(f64::NAN);
    checks.push(Check {
        name: format!("∫P{0}P{0} dσ = {1:.5}", subscript(0), p11),
        value: p11,
        bound: format!("{:.5}", 4.0 * PI / 3.0),
        pass: (p11 - 4.0 * PI / 3.0).abs() < 1e-8,
    });

    let mut second = 0.0f64;
    for i in 0..3 {
        for j in 0..3 {
            let m = sphere_moment(&quad, &[i, j]).unwrap_or(f64::NAN);
            second = second.max((m - sphere_moment_exact(&[i, j])).abs());
        }
    }
    checks.push(Check::below("max |∫P_iP_j dσ - (4π/3)δ_ij|", second, 1e-8));

    let mut fourth = 0.0f64;
    for idx in 0..81 {
        let ix = [idx % 3, (idx / 3) % 3, (idx / 9) % 3, idx / 27];
        let m = sphere_moment(&quad, &ix).unwrap_or(f64::NAN);
        fourth = fourth.max((m - sphere_moment_exact(&ix)).abs());
    }
    checks.push(Check::below("max |∫P_iP_jP_kP_l dσ - (4π/15)(δδ+δδ+δδ)|", fourth, 1e-8));

    let mu = mu_mean_zero_check::<f64>(nodes).unwrap_or(f64::NAN);
    checks.push(Check::below("max |∫μ_kl dσ|", mu, 1e-8));

    let [null, trace, grad, hess] = kernel_samples(KERNEL_SAMPLES, 0);
    checks.push(Check::below("max |a(z)z| relative", null, 1e-12));
    checks.push(Check::below("max |tr a(z) - 2/|z|| relative", trace, 1e-12));
    checks.push(Check::below("∇a vs central differences", grad, 1e-5));
    checks.push(Check::below("∇²a vs central differences", hess, 1e-5));
    checks
}

fn two_bump(grid: VelocityGrid<f64>) -> DistributionField<f64> {
    let b1 = CompactBump { center: Vec3d::new(1.0, 0.5, 0.0), radius: 2.5, height: 0.2, power: 3.0 };
    let b2 = CompactBump { center: Vec3d::new(-1.5, -0.5, 0.5), radius: 2.0, height: 0.15, power: 4.0 };
    DistributionField::from_fn(grid, |v| b1.density(v) + b2.density(v))
}

/// FFT path against the direct lattice sum on a Maxwellian and a
/// two-bump field.
pub fn conv_suite(n: usize) -> Result<Vec<Check>, String> {
    let grid = VelocityGrid::new(n, 8.0).map_err(|e| e.to_string())?;
    let engine = CoefficientEngine::new(grid);
    let m = Maxwellian::<f64>::standard();
    let fields = [
        ("Maxwellian", DistributionField::from_fn(grid, |v| m.density(v))),
        ("two-bump", two_bump(grid)),
    ];
    let mut checks = Vec::new();
    for (label, f) in fields {
        let fast = engine.compute(&f.values);
        let direct = CoefficientFields::direct(&grid, &f.values);
        let (da, db) = fast.max_relative_deviation(&direct);
        checks.push(Check::below(format!("{label} n={n}: ā fast vs direct"), da, 1e-6));
        checks.push(Check::below(format!("{label} n={n}: b̄ fast vs direct"), db, 1e-6));
    }
    Ok(checks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_suite_passes_and_names_the_moment() {
        let checks = kernel_suite(32);
        assert!(checks.iter().all(|c| c.pass), "{checks:?}");
        assert!(checks[0].to_string().contains("∫P₁P₁ dσ = 4.18879"));
    }

    #[test]
    fn conv_suite_passes_on_small_grid() {
        let checks = conv_suite(9).unwrap();
        assert_eq!(checks.len(), 4);
        assert!(checks.iter().all(|c| c.pass), "{checks:?}");
    }

    #[test]
    fn conv_suite_rejects_even_n() {
        assert!(conv_suite(8).is_err());
    }

    #[test]
    fn random_points_stay_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let r = random_point(&mut rng).norm();
            assert!((1e-2 * (1.0 - 1e-12)..=1e2 * (1.0 + 1e-12)).contains(&r));
        }
    }
}
