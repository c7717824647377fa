//! Space-homogeneous Landau equation with Coulomb interaction: closed-form
//! kernels, fast evaluation of the nonlocal coefficients, a conservative
//! semi-implicit time stepper, and the functionals and parabolic Hölder
//! norms used to monitor conditional regularity of computed solutions.
//!
//! Everything numerical is generic over [`Real`] (`f32` or `f64`); the
//! aliases at the crate root fix `f64`, which is what the solver and the
//! command line tool use.

pub mod coefficients;
pub mod diagnostics;
pub mod grid;
pub mod kernel;
pub mod profiles;
pub mod scalar;
pub mod solver;
pub mod spectral;
pub mod sphere;
pub mod tensor;

pub use scalar::Real;

pub type Vec3d = tensor::Vec3<f64>;
pub type SymMat3d = tensor::SymMat3<f64>;
pub type Grid = grid::VelocityGrid<f64>;
pub type Field = grid::DistributionField<f64>;
pub type Ball = grid::Ball<f64>;
pub type Cylinder = grid::Cylinder<f64>;
pub type Coefficients = coefficients::CoefficientFields<f64>;
pub type Engine = coefficients::CoefficientEngine<f64>;
pub type SolverConfig = solver::SolverConfig<f64>;
pub type Trajectory = solver::Trajectory<f64>;
pub type DiagnosticsRecord = diagnostics::DiagnosticsRecord<f64>;
pub type HolderReport = diagnostics::holder::HolderReport<f64>;
