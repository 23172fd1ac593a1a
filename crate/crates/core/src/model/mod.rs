//! Weights, nonlinearities, their derived quantities, and the hypothesis audit.

pub mod checks;
pub mod constants;
pub mod hypotheses;
pub mod nonlinearity;
pub mod weight;

pub use checks::Status;
pub use constants::{weight_constants, RadialGrid, WeightConstants};
pub use hypotheses::{audit, certify_theorems, check_f_hypotheses, check_q_hypotheses, CheckerOptions, HypothesisReport};
pub use nonlinearity::{find_b_beta, Family, Nonlinearity, ScanRange};
pub use weight::{Weight, WeightSpec, WeightValues};

use crate::error::{Error, Result};
use crate::numeric::roots::bisect;
use crate::scalar::Real;

/// A weight paired with a nonlinearity: the equation `(q u')' + q f(u) = 0`.
#[derive(Debug, Clone)]
pub struct Model<T> {
    pub weight: Weight<T>,
    pub nl: Nonlinearity<T>,
}

impl<T: Real> Model<T> {
    pub fn new(weight: Weight<T>, nl: Nonlinearity<T>) -> Self {
        Model { weight, nl }
    }

    /// `I = u'² + 2F(u)`.
    pub fn energy(&self, u: T, up: T) -> T {
        up * up + T::lit(2.0) * self.nl.big_f(u)
    }

    /// Radius at which the frozen-`f` approximation `α − f(α)∫₀^r Q/q` reaches `s`.
    pub fn frozen_radius(&self, alpha: T, s: T) -> Result<T> {
        let fa = self.nl.f(alpha);
        if !(fa > T::zero()) || !(s < alpha) {
            return Err(Error::Undefined(format!(
                "frozen radius needs f(alpha) > 0 and s < alpha (alpha = {}, s = {})",
                alpha.as_f64(),
                s.as_f64()
            )));
        }
        let target = (alpha - s) / fa;
        let g = |lr: T| -> Result<T> { Ok(self.weight.q_ratio_integral(lr.exp())? - target) };
        let (lo, hi) = self.weight.domain();
        let lo = lo.max(T::lit(1e-12)).ln();
        let hi = hi.min(T::lit(1e6)).ln();
        Ok(bisect(|x| g(x).unwrap_or(T::nan()), lo, hi, T::lit(1e-10))?.exp())
    }

    /// Default integration horizon: `max(50·r_β, 40)` with `r_β` the frozen radius of `β`.
    pub fn default_horizon(&self, alpha: T) -> T {
        let floor = T::lit(40.0);
        match self.frozen_radius(alpha, self.nl.beta) {
            Ok(r) => (T::lit(50.0) * r).max(floor),
            Err(_) => floor,
        }
    }
}
