//! Adaptive Gauss–Kronrod (7, 15) quadrature on finite intervals.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::scalar::Real;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Tolerances for [`integrate`].
#[derive(Debug, Clone, Copy)]
pub struct QuadTol {
    pub rel: f64,
    pub abs: f64,
    pub max_intervals: usize,
}

impl Default for QuadTol {
    fn default() -> Self {
        QuadTol { rel: 1e-12, abs: 1e-300, max_intervals: 4000 }
    }
}

struct Piece<T> {
    a: T,
    b: T,
    val: T,
    err: T,
}

impl<T: Real> PartialEq for Piece<T> {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl<T: Real> Eq for Piece<T> {}
impl<T: Real> PartialOrd for Piece<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<T: Real> Ord for Piece<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err.partial_cmp(&other.err).unwrap_or(Ordering::Equal)
    }
}

fn gk15<T: Real, F: Fn(T) -> T>(f: &F, a: T, b: T) -> (T, T) {
    let half = T::lit(0.5);
    let c = (a + b) * half;
    let hl = (b - a) * half;
    let fc = f(c);
    let mut kron = fc * T::lit(WGK[7]);
    let mut gauss = fc * T::lit(WG[3]);
    for j in 0..7 {
        let dx = hl * T::lit(XGK[j]);
        let s = f(c - dx) + f(c + dx);
        kron = kron + s * T::lit(WGK[j]);
        if j % 2 == 1 {
            gauss = gauss + s * T::lit(WG[j / 2]);
        }
    }
    (kron * hl, ((kron - gauss) * hl).abs())
}

/// Integrates `f` over `[a, b]` (either orientation).
pub fn integrate<T: Real, F: Fn(T) -> T>(f: F, a: T, b: T, tol: QuadTol) -> Result<T> {
    if a == b {
        return Ok(T::zero());
    }
    if a > b {
        return integrate(f, b, a, tol).map(|v| -v);
    }
    let rel = T::lit(tol.rel).max(T::epsilon() * T::lit(50.0));
    let abs = T::lit(tol.abs);
    let (v0, e0) = gk15(&f, a, b);
    let mut heap = BinaryHeap::new();
    heap.push(Piece { a, b, val: v0, err: e0 });
    let mut total = v0;
    let mut err = e0;
    let mut n = 1;
    while err > abs.max(rel * total.abs()) {
        if n >= tol.max_intervals {
            return Err(Error::QuadratureFailed { a: a.as_f64(), b: b.as_f64() });
        }
        let p = heap.pop().expect("nonempty heap");
        let m = (p.a + p.b) * T::lit(0.5);
        if m <= p.a || m >= p.b {
            // Interval exhausted at machine resolution; keep its estimate.
            heap.push(Piece { err: T::zero(), ..p });
            err = heap.iter().fold(T::zero(), |s, q| s + q.err);
            continue;
        }
        let (v1, e1) = gk15(&f, p.a, m);
        let (v2, e2) = gk15(&f, m, p.b);
        total = total - p.val + v1 + v2;
        err = err - p.err + e1 + e2;
        heap.push(Piece { a: p.a, b: m, val: v1, err: e1 });
        heap.push(Piece { a: m, b: p.b, val: v2, err: e2 });
        n += 1;
        if n % 64 == 0 {
            // Resum to shed accumulated cancellation in the running totals.
            total = heap.iter().fold(T::zero(), |s, q| s + q.val);
            err = heap.iter().fold(T::zero(), |s, q| s + q.err);
        }
    }
    if !total.is_finite() {
        return Err(Error::QuadratureFailed { a: a.as_f64(), b: b.as_f64() });
    }
    Ok(heap.iter().fold(T::zero(), |s, q| s + q.val))
}

/// Integrates with default tolerances.
pub fn quad<T: Real, F: Fn(T) -> T>(f: F, a: T, b: T) -> Result<T> {
    integrate(f, a, b, QuadTol::default())
}
