pub mod bundle;
pub mod connection;
pub mod constraint;
pub mod error;
pub mod exterior;
pub mod expr;
pub mod linalg;
pub mod mechanics;
pub mod ode;
pub mod theories;

pub use error::{Error, ExprError, Result};
pub use expr::{CoordId, Expr, Point, Space};
