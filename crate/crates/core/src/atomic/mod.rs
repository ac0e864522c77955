//! Angular momentum algebra, Clebsch-Gordan coefficients and level schemes.

pub mod angular;
pub mod cg;
pub mod scheme;

pub use angular::{angular_momentum_ops, AngularMomentumOps, HalfInt};
pub use cg::{clebsch_gordan, clebsch_gordan_exact, ExactCoefficient};
pub use scheme::{DecayChannel, LevelScheme, Manifold, Multipole, Polarization, QuantumLabel};
