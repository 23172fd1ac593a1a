//! Dormand–Prince 5(4) integrator with continuous (dense) output.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Right-hand side `y' = F(r, y)` of a first-order system.
pub trait System<T: Real, const N: usize> {
    fn rhs(&self, r: T, y: &[T; N]) -> [T; N];
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// One accepted step with its continuous extension.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DenseStep<T, const N: usize> {
    pub r0: T,
    pub h: T,
    pub y0: [T; N],
    pub y1: [T; N],
    rc: [[T; N]; 3],
}

impl<T: Real, const N: usize> DenseStep<T, N> {
    pub fn r1(&self) -> T {
        self.r0 + self.h
    }

    /// Interpolated state at `r` (meant for `r` within the step).
    pub fn eval(&self, r: T) -> [T; N] {
        let th = (r - self.r0) / self.h;
        let th1 = T::one() - th;
        let mut out = [T::zero(); N];
        for (i, o) in out.iter_mut().enumerate() {
            let d = self.y1[i] - self.y0[i];
            *o = self.y0[i]
                + th * (d + th1 * (self.rc[0][i] + th * (self.rc[1][i] + th1 * self.rc[2][i])));
        }
        out
    }

    /// A constant step, used for states that are held fixed.
    pub fn constant(r0: T, h: T, y: [T; N]) -> Self {
        DenseStep { r0, h, y0: y, y1: y, rc: [[T::zero(); N]; 3] }
    }
}

/// Integration controls.
#[derive(Debug, Clone, Copy)]
pub struct OdeOptions<T> {
    pub rtol: T,
    /// Absolute tolerance applied componentwise alongside `rtol`.
    pub atol: T,
    pub h_init: T,
    pub max_steps: usize,
}

/// Per-step verdict returned by the observer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

fn axpy<T: Real, const N: usize>(y: &[T; N], h: T, terms: &[(f64, &[T; N])]) -> [T; N] {
    let mut out = *y;
    for &(c, k) in terms {
        let c = T::lit(c) * h;
        for i in 0..N {
            out[i] = out[i] + c * k[i];
        }
    }
    out
}

/// Integrates from `(r0, y0)` towards `r_end`, handing each accepted step to `observe`.
///
/// Returns the final radius reached.
pub fn dopri5<T, S, O, const N: usize>(
    sys: &S,
    r0: T,
    y0: [T; N],
    r_end: T,
    opts: OdeOptions<T>,
    mut observe: O,
) -> Result<T>
where
    T: Real,
    S: System<T, N>,
    O: FnMut(&DenseStep<T, N>) -> Result<Control>,
{
    let OdeOptions { rtol, atol, h_init, max_steps } = opts;
    let safety = T::lit(0.9);
    let fac_min = T::lit(0.2);
    let fac_max = T::lit(5.0);
    let mut r = r0;
    let mut y = y0;
    let mut k1 = sys.rhs(r, &y);
    let mut h = h_init.min(r_end - r);
    let mut err_old = T::lit(1e-4);
    let mut rejected = false;
    let mut steps = 0usize;
    while r < r_end {
        steps += 1;
        if steps > max_steps {
            return Err(Error::TooManySteps { r: r.as_f64() });
        }
        if h < T::lit(16.0) * T::epsilon() * r.abs().max(T::min_positive_value().sqrt()) {
            return Err(Error::StepUnderflow { r: r.as_f64() });
        }
        let last = r + h >= r_end;
        if last {
            h = r_end - r;
        }
        let k2 = sys.rhs(r + T::lit(C2) * h, &axpy(&y, h, &[(A21, &k1)]));
        let k3 = sys.rhs(r + T::lit(C3) * h, &axpy(&y, h, &[(A31, &k1), (A32, &k2)]));
        let k4 = sys.rhs(
            r + T::lit(C4) * h,
            &axpy(&y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]),
        );
        let k5 = sys.rhs(
            r + T::lit(C5) * h,
            &axpy(&y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
        );
        let k6 = sys.rhs(
            r + h,
            &axpy(&y, h, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]),
        );
        let y1 = axpy(&y, h, &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
        let r1 = if last { r_end } else { r + h };
        let k7 = sys.rhs(r1, &y1);
        let mut err = T::zero();
        for i in 0..N {
            let e = h
                * (T::lit(E1) * k1[i]
                    + T::lit(E3) * k3[i]
                    + T::lit(E4) * k4[i]
                    + T::lit(E5) * k5[i]
                    + T::lit(E6) * k6[i]
                    + T::lit(E7) * k7[i]);
            let sc = atol + rtol * y[i].abs().max(y1[i].abs());
            err = err + (e / sc) * (e / sc);
        }
        err = (err / T::from_count(N)).sqrt();
        if !err.is_finite() {
            h = h * fac_min;
            rejected = true;
            continue;
        }
        if err <= T::one() {
            // PI step-size control (Gustafsson), as in Hairer's DOPRI5.
            let beta = T::lit(0.04);
            let expo = T::lit(0.2) - beta * T::lit(0.75);
            let mut fac = safety * err.max(T::lit(1e-10)).powf(-expo) * err_old.powf(beta);
            fac = fac.max(fac_min).min(fac_max);
            if rejected {
                fac = fac.min(T::one());
            }
            err_old = err.max(T::lit(1e-4));
            let mut rc = [[T::zero(); N]; 3];
            for i in 0..N {
                let d = y1[i] - y[i];
                let bspl = h * k1[i] - d;
                rc[0][i] = bspl;
                rc[1][i] = d - h * k7[i] - bspl;
                rc[2][i] = h
                    * (T::lit(D1) * k1[i]
                        + T::lit(D3) * k3[i]
                        + T::lit(D4) * k4[i]
                        + T::lit(D5) * k5[i]
                        + T::lit(D6) * k6[i]
                        + T::lit(D7) * k7[i]);
            }
            let step = DenseStep { r0: r, h: r1 - r, y0: y, y1, rc };
            r = r1;
            y = y1;
            k1 = k7;
            rejected = false;
            if observe(&step)? == Control::Stop {
                return Ok(r);
            }
            h = h * fac;
        } else {
            let fac = (safety * err.powf(T::lit(-0.2))).max(fac_min);
            h = h * fac;
            rejected = true;
        }
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts(tol: f64) -> OdeOptions<f64> {
        OdeOptions { rtol: tol, atol: tol, h_init: 1e-3, max_steps: 100_000 }
    }

    struct Oscillator;
    impl System<f64, 2> for Oscillator {
        fn rhs(&self, _r: f64, y: &[f64; 2]) -> [f64; 2] {
            [y[1], -y[0]]
        }
    }

    #[test]
    fn harmonic_oscillator_with_dense_output() {
        let mut steps = Vec::new();
        let end = dopri5(&Oscillator, 0.0, [1.0, 0.0], 10.0, opts(1e-11), |s| {
            steps.push(*s);
            Ok(Control::Continue)
        })
        .unwrap();
        assert_eq!(end, 10.0);
        let last = steps.last().unwrap();
        assert!((last.y1[0] - 10f64.cos()).abs() < 1e-9);
        for s in &steps {
            let m = s.r0 + 0.37 * s.h;
            let y = s.eval(m);
            assert!((y[0] - m.cos()).abs() < 1e-9, "dense output at {m}");
            assert!((y[1] + m.sin()).abs() < 1e-9);
        }
    }

    #[test]
    fn observer_can_stop() {
        let mut n = 0;
        let end = dopri5(&Oscillator, 0.0, [1.0, 0.0], 10.0, opts(1e-8), |_| {
            n += 1;
            Ok(if n == 3 { Control::Stop } else { Control::Continue })
        })
        .unwrap();
        assert!(end < 10.0);
        assert_eq!(n, 3);
    }

    #[test]
    fn single_precision_runs() {
        struct Decay;
        impl System<f32, 1> for Decay {
            fn rhs(&self, _r: f32, y: &[f32; 1]) -> [f32; 1] {
                [-y[0]]
            }
        }
        let mut y_end = 0.0;
        let o = OdeOptions { rtol: 1e-5f32, atol: 1e-6, h_init: 1e-2, max_steps: 10_000 };
        dopri5(&Decay, 0.0f32, [1.0], 2.0, o, |s| {
            y_end = s.y1[0];
            Ok(Control::Continue)
        })
        .unwrap();
        assert!((y_end - (-2f32).exp()).abs() < 1e-4);
    }
}
