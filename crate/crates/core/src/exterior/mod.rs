//! Sparse exterior algebra on coordinate charts.

pub mod checks;
mod form;
mod structure;
mod tensor;

pub use form::{canonical_key, pullback, Coefficient, ExteriorForm, Form, Key};
pub use structure::{contraction_matrix, contraction_rank, is_cosymplectic, is_multisymplectic};
pub use tensor::{contract_projector, contract_vector, volume, volume_minus, Projector, VectorField, VerticalTensor};
