//! Gradient flows of polynomial functions on singular real varieties.

pub mod critical;
pub mod experiment;
pub mod flow;
pub mod levelmap;
mod linalg;
pub mod lojasiewicz;
mod newton;
pub mod polynomial;
pub mod report;
pub mod space;
pub mod tolerances;

pub use polynomial::{parse_polynomial, Monomial, PolyError, Polynomial, PolynomialSystem};
pub use space::{Objective, SingularPoint, SingularSpace, SpaceError};
pub use tolerances::Tolerances;
