//! Radial bound states of weighted semilinear equations
//! `(q u')' + q f(u) = 0`, `u(0) = α`, `u'(0) = 0`:
//! shooting, classification into `N_k`/`G_k`/`P_k`, Pohozaev-type functionals,
//! and numerical audits of the structural hypotheses on `q` and `f`.
//!
//! Numerical code is generic over [`Real`] (`f32` or `f64`); the aliases at
//! the crate root fix `f64`.

// `!(x > y)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classify;
pub mod error;
pub mod functionals;
pub mod model;
pub mod numeric;
pub mod scalar;
pub mod shoot;
pub mod variation;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Weight = model::Weight<f64>;
pub type WeightSpec = model::WeightSpec<f64>;
pub type Nonlinearity = model::Nonlinearity<f64>;
pub type WeightConstants = model::WeightConstants<f64>;
pub type Model = model::Model<f64>;
pub type Trajectory = shoot::Trajectory<f64>;
pub type ClassificationResult = classify::ClassificationResult<f64>;
pub type VariationTrajectory = variation::VariationTrajectory<f64>;
pub type BranchInverse<'a> = functionals::BranchInverse<'a, f64>;
