//! Initial data with finite mass, energy and entropy.

use serde::{Deserialize, Serialize};

use crate::grid::{DistributionField, VelocityGrid};
use crate::scalar::Real;
use crate::tensor::Vec3;

/// `ρ (2πT)^{-3/2} exp(-|v - u|² / 2T)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Maxwellian<R> {
    pub mass: R,
    pub mean: Vec3<R>,
    pub temperature: R,
}

impl<R: Real> Maxwellian<R> {
    pub fn new(mass: R, mean: Vec3<R>, temperature: R) -> Self {
        Self { mass, mean, temperature }
    }

    /// Unit mass, zero mean, unit temperature.
    pub fn standard() -> Self {
        Self::new(R::one(), Vec3::zero(), R::one())
    }

    pub fn density(&self, v: Vec3<R>) -> R {
        let two_t = R::lit(2.0) * self.temperature;
        let norm = (R::PI() * two_t).powf(R::lit(-1.5));
        self.mass * norm * (-(v - self.mean).norm_squared() / two_t).exp()
    }

    pub fn energy(&self) -> R {
        self.mass * (R::lit(1.5) * self.temperature + R::lit(0.5) * self.mean.norm_squared())
    }

    /// `∫ f log f = ρ log ρ - (3/2) ρ (1 + log 2πT)`.
    pub fn entropy(&self) -> R {
        let two_pi_t = R::lit(2.0) * R::PI() * self.temperature;
        self.mass * self.mass.ln() - R::lit(1.5) * self.mass * (R::one() + two_pi_t.ln())
    }
}

/// `height (1 - |v - c|²/r²)^power` inside the ball, zero outside.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompactBump<R> {
    pub center: Vec3<R>,
    pub radius: R,
    pub height: R,
    pub power: R,
}

impl<R: Real> CompactBump<R> {
    pub fn density(&self, v: Vec3<R>) -> R {
        let s = (v - self.center).norm_squared() / (self.radius * self.radius);
        if s < R::one() {
            self.height * (R::one() - s).powf(self.power)
        } else {
            R::zero()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Profile<R> {
    Maxwellian(Maxwellian<R>),
    Mixture(Vec<Maxwellian<R>>),
    Bump(CompactBump<R>),
}

impl<R: Real> Profile<R> {
    pub fn density(&self, v: Vec3<R>) -> R {
        match self {
            Profile::Maxwellian(m) => m.density(v),
            Profile::Mixture(ms) => ms.iter().map(|m| m.density(v)).sum(),
            Profile::Bump(b) => b.density(v),
        }
    }

    pub fn sample(&self, grid: VelocityGrid<R>) -> DistributionField<R> {
        DistributionField::from_fn(grid, |v| self.density(v))
    }
}

/// Asymmetric two-temperature mixture used by the relaxation scenarios.
pub fn relaxation_mixture<R: Real>() -> Profile<R> {
    Profile::Mixture(vec![
        Maxwellian::new(R::lit(0.6), Vec3::new(R::lit(1.0), R::lit(0.5), R::zero()), R::lit(0.8)),
        Maxwellian::new(R::lit(0.4), Vec3::new(R::lit(-1.0), R::zero(), R::zero()), R::lit(1.2)),
    ])
}
