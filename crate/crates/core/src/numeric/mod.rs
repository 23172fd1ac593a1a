//! Generic numerical building blocks: quadrature, root bracketing,
//! limit extrapolation and an embedded Runge–Kutta integrator.

pub mod extrapolate;
pub mod ode;
pub mod quad;
pub mod roots;
