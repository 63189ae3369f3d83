//! Independent numerical reference paths: quadrature, finite differences,
//! fixed-step RK4 and the solver-based attention layer.

pub mod baseline;
pub mod fd;
pub mod quad;
pub mod rk4;

pub use baseline::{numerical_attention_layer, VectorField};
pub use fd::finite_diff;
pub use quad::{quad_gauss, quad_simpson};
pub use rk4::{rk4_integrate, rk4_path, FnSystem, OdeSystem};
