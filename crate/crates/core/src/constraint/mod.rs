//! Constraint algorithms: pointwise solvability of the horizontal-lift
//! equations, sampling of constraint sets, and the iterated chains.

mod chain;
mod problem;
mod sampler;
mod system;
mod transport;

pub use chain::*;
pub use problem::*;
pub use sampler::*;
pub use system::*;
pub use transport::*;
