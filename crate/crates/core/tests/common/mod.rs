//! Reference computations shared by the integration suites. Nothing here calls
//! the integrator, the classifier or the functionals under test.

#![allow(dead_code)]

use boundstate::model::{Model, Nonlinearity, Weight, WeightSpec};

pub fn cubic(theta: f64) -> Model<f64> {
    power_model(theta, 3.0)
}

pub fn power_model(theta: f64, p: f64) -> Model<f64> {
    Model::new(Weight::new(WeightSpec::Power { theta }).unwrap(), Nonlinearity::power_minus_linear(p).unwrap())
}

/// `u'' + (θ/r)u' + u|u|^{p−1} − u = 0` integrated by classical RK4 with a fixed step,
/// started at `r0` from the three-term series `u = α + a₁r² + a₂r⁴ + a₃r⁶`.
#[derive(Debug, Clone, Copy)]
pub struct Rk4 {
    pub theta: f64,
    pub p: f64,
    pub h: f64,
    pub r0: f64,
}

impl Rk4 {
    pub fn new(theta: f64, p: f64) -> Self {
        Rk4 { theta, p, h: 1e-3, r0: 1e-2 }
    }

    fn f(&self, u: f64) -> f64 {
        u.abs().powf(self.p - 1.0) * u - u
    }

    fn rhs(&self, r: f64, y: [f64; 2]) -> [f64; 2] {
        [y[1], -self.theta / r * y[1] - self.f(y[0])]
    }

    /// Series coefficients from matching powers of `r` in the equation.
    pub fn start(&self, alpha: f64) -> [f64; 2] {
        let (th, p) = (self.theta, self.p);
        let f0 = alpha.powf(p) - alpha;
        let f1 = p * alpha.powf(p - 1.0) - 1.0;
        let f2 = p * (p - 1.0) * alpha.powf(p - 2.0);
        let a1 = -f0 / (2.0 * (1.0 + th));
        let a2 = -f1 * a1 / (4.0 * (3.0 + th));
        let a3 = -(f1 * a2 + 0.5 * f2 * a1 * a1) / (6.0 * (5.0 + th));
        let r = self.r0;
        let (r2, r4) = (r * r, r * r * r * r);
        [alpha + a1 * r2 + a2 * r4 + a3 * r4 * r2, 2.0 * a1 * r + 4.0 * a2 * r2 * r + 6.0 * a3 * r4 * r]
    }

    fn step(&self, r: f64, y: [f64; 2]) -> [f64; 2] {
        let h = self.h;
        let add = |y: [f64; 2], k: [f64; 2], c: f64| [y[0] + c * k[0], y[1] + c * k[1]];
        let k1 = self.rhs(r, y);
        let k2 = self.rhs(r + 0.5 * h, add(y, k1, 0.5 * h));
        let k3 = self.rhs(r + 0.5 * h, add(y, k2, 0.5 * h));
        let k4 = self.rhs(r + h, add(y, k3, h));
        [
            y[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
            y[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        ]
    }

    /// Walks the solution, calling `visit(r, u, u')` after every step until it returns false or `r_end`.
    pub fn walk(&self, alpha: f64, r_end: f64, mut visit: impl FnMut(f64, f64, f64) -> bool) {
        let mut y = self.start(alpha);
        let mut i = 0usize;
        loop {
            let r = self.r0 + i as f64 * self.h;
            if r >= r_end {
                return;
            }
            y = self.step(r, y);
            i += 1;
            if !visit(self.r0 + i as f64 * self.h, y[0], y[1]) {
                return;
            }
        }
    }

    /// `(u, u')` at the grid points nearest to `radii` (which must be increasing and on the grid).
    pub fn sample(&self, alpha: f64, radii: &[f64]) -> Vec<[f64; 2]> {
        let mut out = Vec::with_capacity(radii.len());
        let mut next = 0;
        let last = *radii.last().unwrap();
        self.walk(alpha, last + self.h, |r, u, up| {
            while next < radii.len() && (r - radii[next]).abs() < 0.5 * self.h {
                out.push([u, up]);
                next += 1;
            }
            next < radii.len()
        });
        out
    }

    /// `true` when `u` reaches zero before `u'` turns nonnegative (the N side at level 1).
    pub fn crosses_first(&self, alpha: f64, r_end: f64) -> Option<bool> {
        let mut verdict = None;
        self.walk(alpha, r_end, |_, u, up| {
            if u <= 0.0 {
                verdict = Some(true);
            } else if up >= 0.0 {
                verdict = Some(false);
            }
            verdict.is_none()
        });
        verdict
    }

    /// Bisection for the ground state on `[lo, hi]` (P side below, N side above).
    pub fn ground_state(&self, mut lo: f64, mut hi: f64, tol: f64, r_end: f64) -> (f64, f64) {
        assert_eq!(self.crosses_first(lo, r_end), Some(false));
        assert_eq!(self.crosses_first(hi, r_end), Some(true));
        while hi - lo > tol {
            let mid = 0.5 * (lo + hi);
            match self.crosses_first(mid, r_end) {
                Some(true) => hi = mid,
                Some(false) => lo = mid,
                None => panic!("reference integration undecided at alpha = {mid}"),
            }
        }
        (lo, hi)
    }
}

/// Central difference of `g` at `x` with step `e`, refined by one Richardson step.
pub fn richardson_diff(g: impl Fn(f64) -> f64, x: f64, e: f64) -> f64 {
    let d = |h: f64| (g(x + h) - g(x - h)) / (2.0 * h);
    (4.0 * d(0.5 * e) - d(e)) / 3.0
}
