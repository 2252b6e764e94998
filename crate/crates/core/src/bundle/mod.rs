//! Bundle charts, theories and the canonical objects built from them.

mod canonical;
mod chart;
pub mod quadratic;
pub mod section;
mod theory;

pub use canonical::*;
pub use chart::{BundleChart, FiberDecl, Layer};
pub use theory::{FiberCovector, Formalism, HamiltonianData, LagrangianTheory};
