//! Radial weights `q` and the quantities derived from them.
//!
//! Every family reduces to a handful of scale-free primitives
//! (`Q/(qr)`, `rq'/q`, `h/r`, `∫₀^r h / r²`), from which `H`, `h'`, `G` and `G̃`
//! follow by the same algebra. Working with the scaled forms keeps the limit
//! estimates finite at radii where `q` itself overflows.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::extrapolate::Nodes;
use crate::numeric::quad::{integrate, QuadTol};
use crate::scalar::Real;

const QTOL: QuadTol = QuadTol { rel: 1e-13, abs: 1e-300, max_intervals: 4000 };

/// Weight family and parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum WeightSpec<T> {
    /// `q = r^θ`.
    Power { theta: T },
    /// `q = r^{θ+1} + c·r^θ`.
    PowerSum { theta: T, c: T },
    /// `q = r^θ` below `r0`, `q = (1/e)·ln(r0)·r^μ / ln r` above, with `r0^{μ−θ} = e`.
    PiecewiseLog { theta: T, mu: T, r0: T },
    /// Samples `(r, q, q')`, interpolated by cubic Hermite splines.
    Tabulated { r: Vec<T>, q: Vec<T>, q_prime: Vec<T> },
}

impl<T: Real> WeightSpec<T> {
    /// Piecewise-log weight with `μ` fixed by `r0^{μ−θ} = e`.
    pub fn piecewise_log(theta: T, r0: T) -> Self {
        WeightSpec::PiecewiseLog { theta, mu: theta + T::one() / r0.ln(), r0 }
    }

    /// The canonical piecewise-log weight with `r0 = e²`.
    pub fn piecewise_log_default(theta: T) -> Self {
        Self::piecewise_log(theta, T::E() * T::E())
    }
}

/// Weight and derived quantities at one radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightValues<T> {
    pub r: T,
    pub q: T,
    pub q_prime: T,
    #[serde(rename = "Q")]
    pub big_q: T,
    #[serde(rename = "H")]
    pub big_h: T,
    pub h: T,
    pub h_prime: T,
    /// `∫₀^r h`.
    pub h_integral: T,
    #[serde(rename = "G")]
    pub g: T,
    #[serde(rename = "Gtilde")]
    pub g_tilde: T,
}

/// Scale-free primitives at a radius.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Scaled<T> {
    /// `Q / (q r)`
    ratio: T,
    /// `r q' / q`
    log_slope: T,
    /// `h / r`
    h: T,
    /// `∫₀^r h / r²`
    h_int: T,
}

impl<T: Real> Scaled<T> {
    fn big_h(&self) -> T {
        T::one() - self.ratio * self.log_slope
    }
    fn h_prime(&self) -> T {
        self.h * self.log_slope - T::one()
    }
    fn g(&self) -> T {
        self.log_slope * self.h_int / self.h - T::lit(0.5)
    }
    fn g_tilde(&self) -> T {
        T::lit(2.0) * self.g() * self.h / self.h_int.sqrt()
    }
}

#[derive(Debug, Clone)]
enum Data<T> {
    Power { theta: T },
    PowerSum { theta: T, c: T },
    PiecewiseLog(LogData<T>),
    Tabulated(TableData<T>),
}

#[derive(Debug, Clone)]
struct LogData<T> {
    theta: T,
    mu: T,
    r0: T,
    /// `ln(r0)/e`
    k: T,
    c0: T,
    /// `Q(r0)`
    q0: T,
    /// `∫₀^{r0} h`
    h0: T,
    /// `∫₀^{r0} Q/q`
    qq0: T,
}

#[derive(Debug, Clone)]
struct TableData<T> {
    r: Vec<T>,
    q: Vec<T>,
    dq: Vec<T>,
    /// `Q` at nodes.
    big_q: Vec<T>,
    /// `∫_{r_i}^∞ 1/q` at nodes.
    tail: Vec<T>,
    /// `∫₀^{r_i} h` at nodes.
    h_int: Vec<T>,
    /// `∫₀^{r_i} Q/q` at nodes.
    qq_int: Vec<T>,
    /// Log-slopes `rq'/q` at the first and last node, used outside the table.
    th0: T,
    th_n: T,
}

/// A validated weight ready for evaluation.
#[derive(Debug, Clone)]
pub struct Weight<T> {
    spec: WeightSpec<T>,
    data: Data<T>,
}

/// `(x − ln(1+x))/x²`, accurate for small `x`.
fn log1p_defect<T: Real>(x: T) -> T {
    if x.abs() < T::lit(1e-2) {
        // Alternating series 1/2 − x/3 + x²/4 − …
        let mut sum = T::zero();
        let mut p = T::one();
        for n in 2..14 {
            let term = p / T::from_count(n);
            sum = if n % 2 == 0 { sum + term } else { sum - term };
            p = p * x;
        }
        sum
    } else {
        (x - x.ln_1p()) / (x * x)
    }
}

impl<T: Real> Weight<T> {
    /// Validates `spec` and precomputes the tables it needs.
    pub fn new(spec: WeightSpec<T>) -> Result<Self> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        let data = match &spec {
            WeightSpec::Power { theta } => {
                if !(*theta > T::one()) {
                    return bad("power weight requires theta > 1");
                }
                Data::Power { theta: *theta }
            }
            WeightSpec::PowerSum { theta, c } => {
                if !(*theta >= T::one()) || !(*c > T::zero()) {
                    return bad("power-sum weight requires theta >= 1 and c > 0");
                }
                Data::PowerSum { theta: *theta, c: *c }
            }
            WeightSpec::PiecewiseLog { theta, mu, r0 } => {
                let (theta, mu, r0) = (*theta, *mu, *r0);
                if !(theta > T::one()) || !(mu > T::one()) {
                    return bad("piecewise-log weight requires theta > 1 and mu > 1");
                }
                let e = T::E();
                if !(r0 >= e * e * (T::one() - T::lit(1e-12))) {
                    return bad("piecewise-log weight requires r0 >= e^2");
                }
                if ((mu - theta) * r0.ln() - T::one()).abs() > T::lit(1e-9) {
                    return bad("piecewise-log weight requires r0^(mu - theta) = e");
                }
                let lr0 = r0.ln();
                let m1 = mu - T::one();
                let c0 = e / (m1 * m1) * r0.powf(T::one() - mu) / lr0 * (m1 * lr0 + T::one());
                let tp1 = theta + T::one();
                let tm1 = theta - T::one();
                let h0 = r0 * r0 / (T::lit(2.0) * tm1)
                    + (c0 - r0.powf(T::one() - theta) / tm1) * r0.powf(tp1) / tp1;
                Data::PiecewiseLog(LogData {
                    theta,
                    mu,
                    r0,
                    k: lr0 / e,
                    c0,
                    q0: r0.powf(tp1) / tp1,
                    h0,
                    qq0: r0 * r0 / (T::lit(2.0) * tp1),
                })
            }
            WeightSpec::Tabulated { r, q, q_prime } => Data::Tabulated(TableData::build(r, q, q_prime)?),
        };
        Ok(Weight { spec, data })
    }

    pub fn spec(&self) -> &WeightSpec<T> {
        &self.spec
    }

    /// Short human-readable description.
    pub fn label(&self) -> String {
        match &self.spec {
            WeightSpec::Power { theta } => format!("power(theta={theta})"),
            WeightSpec::PowerSum { theta, c } => format!("power_sum(theta={theta}, c={c})"),
            WeightSpec::PiecewiseLog { theta, mu, r0 } => {
                format!("piecewise_log(theta={theta}, mu={mu}, r0={r0})")
            }
            WeightSpec::Tabulated { r, .. } => format!("tabulated({} nodes)", r.len()),
        }
    }

    /// Radius range on which the weight can be evaluated.
    pub fn domain(&self) -> (T, T) {
        match &self.data {
            Data::Tabulated(t) => (t.r[0], *t.r.last().expect("nonempty table")),
            _ => (T::zero(), T::infinity()),
        }
    }

    fn check_r(&self, r: T) -> Result<()> {
        let (lo, hi) = self.domain();
        let ok = match &self.data {
            Data::Tabulated(_) => r >= lo && r <= hi,
            _ => r > T::zero() && r.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::OutOfRange { r: r.as_f64(), lo: lo.as_f64(), hi: hi.as_f64() })
        }
    }

    /// `q(r)`.
    pub fn q(&self, r: T) -> T {
        match &self.data {
            Data::Power { theta } => r.powf(*theta),
            Data::PowerSum { theta, c } => r.powf(*theta) * (r + *c),
            Data::PiecewiseLog(d) => {
                if r < d.r0 {
                    r.powf(d.theta)
                } else {
                    d.k * r.powf(d.mu) / r.ln()
                }
            }
            Data::Tabulated(t) => t.extended(r).0,
        }
    }

    /// `q'(r)`.
    pub fn q_prime(&self, r: T) -> T {
        match &self.data {
            Data::Power { theta } => *theta * r.powf(*theta - T::one()),
            Data::PowerSum { theta, c } => {
                r.powf(*theta - T::one()) * ((*theta + T::one()) * r + *c * *theta)
            }
            Data::PiecewiseLog(d) => {
                if r < d.r0 {
                    d.theta * r.powf(d.theta - T::one())
                } else {
                    let l = r.ln();
                    d.k * r.powf(d.mu - T::one()) * (d.mu * l - T::one()) / (l * l)
                }
            }
            Data::Tabulated(t) => t.extended(r).1,
        }
    }

    /// `q'(r)/q(r)`, the damping coefficient of the radial equation.
    pub fn log_derivative(&self, r: T) -> T {
        match &self.data {
            Data::Power { theta } => *theta / r,
            Data::PowerSum { theta, c } => (*theta + r / (r + *c)) / r,
            Data::PiecewiseLog(d) => {
                if r < d.r0 {
                    d.theta / r
                } else {
                    (d.mu - T::one() / r.ln()) / r
                }
            }
            Data::Tabulated(t) => {
                let (q, dq) = t.extended(r);
                dq / q
            }
        }
    }

    /// `Q(r)/q(r)`.
    ///
    /// Tabulated weights are continued as power laws outside the table.
    pub fn q_ratio(&self, r: T) -> Result<T> {
        if let Data::Tabulated(t) = &self.data {
            return Ok(t.ratio_extended(r));
        }
        Ok(self.scaled_ratio(r)? * r)
    }

    /// `∫₀^r Q/q`, used by the series start at the origin.
    pub fn q_ratio_integral(&self, r: T) -> Result<T> {
        if r == T::zero() {
            return Ok(T::zero());
        }
        if let Data::Tabulated(t) = &self.data {
            let n = t.r.len();
            let two = T::lit(2.0);
            return if r < t.r[0] {
                Ok(r * r / (two * (t.th0 + T::one())))
            } else if r > t.r[n - 1] {
                let part = integrate(|s| t.ratio_extended(s), t.r[n - 1], r, QTOL)?;
                Ok(t.qq_int[n - 1] + part)
            } else {
                t.qq_integral(r)
            };
        }
        self.check_r(r)?;
        let two = T::lit(2.0);
        Ok(match &self.data {
            Data::Power { theta } => r * r / (two * (*theta + T::one())),
            Data::PowerSum { theta, c } => {
                let a = T::one() / (*theta + two);
                let d = *c / ((*theta + T::one()) * (*theta + two));
                r * r * (a / two + d / *c * log1p_defect(r / *c))
            }
            Data::PiecewiseLog(d) => {
                if r <= d.r0 {
                    r * r / (two * (d.theta + T::one()))
                } else {
                    d.qq0 + integrate(|s| self.q_ratio(s).unwrap_or(T::nan()), d.r0, r, QTOL)?
                }
            }
            Data::Tabulated(_) => unreachable!("handled above"),
        })
    }

    fn scaled_ratio(&self, r: T) -> Result<T> {
        self.check_r(r)?;
        Ok(match &self.data {
            Data::Power { theta } => T::one() / (*theta + T::one()),
            Data::PowerSum { theta, c } => {
                let rho = r / (r + *c);
                let sigma = *c / (r + *c);
                rho / (*theta + T::lit(2.0)) + sigma / (*theta + T::one())
            }
            Data::PiecewiseLog(d) => {
                if r < d.r0 {
                    T::one() / (d.theta + T::one())
                } else {
                    d.big_ratio(r)?
                }
            }
            Data::Tabulated(t) => t.big_q(r) / (t.hermite(r).0 * r),
        })
    }

    pub(crate) fn scaled(&self, r: T) -> Result<Scaled<T>> {
        self.check_r(r)?;
        let two = T::lit(2.0);
        Ok(match &self.data {
            Data::Power { theta } => {
                let tm1 = *theta - T::one();
                Scaled {
                    ratio: T::one() / (*theta + T::one()),
                    log_slope: *theta,
                    h: T::one() / tm1,
                    h_int: T::one() / (two * tm1),
                }
            }
            Data::PowerSum { theta, c } => {
                let (theta, c) = (*theta, *c);
                let rho = r / (r + c);
                let sigma = c / (r + c);
                let ratio = rho / (theta + two) + sigma / (theta + T::one());
                // h/r = ∫₀¹ t^{θ−1} / (ρ + σ t) dt
                let h = integrate(|t: T| t.powf(theta - T::one()) / (rho + sigma * t), T::zero(), T::one(), QTOL)
                    .map_err(|_| Error::TailDivergent(format!("power-sum tail at r = {}", r.as_f64())))?;
                let a = T::one() / (theta + two);
                let d = c / ((theta + T::one()) * (theta + two));
                // ∫₀^r h = h·Q/q + ∫₀^r Q/q
                let qq = a / two + d / c * log1p_defect(r / c);
                Scaled { ratio, log_slope: theta + rho, h, h_int: h * ratio + qq }
            }
            Data::PiecewiseLog(d) => d.scaled(r)?,
            Data::Tabulated(t) => t.scaled(r)?,
        })
    }

    /// All derived quantities at `r`.
    pub fn eval(&self, r: T) -> Result<WeightValues<T>> {
        let s = self.scaled(r)?;
        let q = self.q(r);
        Ok(WeightValues {
            r,
            q,
            q_prime: self.q_prime(r),
            big_q: s.ratio * r * q,
            big_h: s.big_h(),
            h: s.h * r,
            h_prime: s.h_prime(),
            h_integral: s.h_int * r * r,
            g: s.g(),
            g_tilde: s.g_tilde(),
        })
    }

    /// `H(r)`; finite even where `q(r)` overflows.
    pub fn big_h(&self, r: T) -> Result<T> {
        Ok(self.scaled(r)?.big_h())
    }

    /// `h'(r)`; finite even where `q(r)` overflows.
    pub fn h_prime(&self, r: T) -> Result<T> {
        Ok(self.scaled(r)?.h_prime())
    }

    /// `G(r)`; finite even where `q(r)` overflows.
    pub fn g(&self, r: T) -> Result<T> {
        Ok(self.scaled(r)?.g())
    }

    /// `h(r)`.
    pub fn h(&self, r: T) -> Result<T> {
        Ok(self.scaled(r)?.h * r)
    }

    /// `∫₀^r h`.
    pub fn h_integral(&self, r: T) -> Result<T> {
        Ok(self.scaled(r)?.h_int * r * r)
    }

    /// Sampling nodes for limits as `r → ∞`, with the matching extrapolation variable.
    pub fn limit_nodes(&self) -> (Nodes, usize) {
        match &self.data {
            Data::Power { .. } => (Nodes::Geometric { r0: 1.0 }, 8),
            Data::PowerSum { c, .. } => (Nodes::Geometric { r0: c.as_f64().max(1.0) }, 60),
            Data::PiecewiseLog(d) => {
                // Decay is in powers of 1/ln r with factorially growing coefficients,
                // so the nodes start well inside the tail and double ln r up to
                // just below the overflow of exp.
                const L_MAX: f64 = 700.0;
                let l0 = (L_MAX / 128.0).max(d.r0.as_f64().ln() + 0.5);
                let max = ((L_MAX / l0).log2().floor() as usize) + 1;
                (Nodes::LogGeometric { l0 }, max)
            }
            Data::Tabulated(t) => {
                let hi = t.r.last().expect("nonempty").as_f64();
                let lo = t.r[0].as_f64();
                let j = ((hi / lo).log2().floor() as usize).min(40);
                (Nodes::Geometric { r0: hi / 2f64.powi(j as i32) }, j + 1)
            }
        }
    }
}

impl<T: Real> LogData<T> {
    /// `Q/(q r)` for `r ≥ r0`.
    fn big_ratio(&self, r: T) -> Result<T> {
        let l = r.ln();
        let mu = self.mu;
        let j1 = integrate(|x: T| x.powf(mu) * l / (l + x.ln()), self.r0 / r, T::one(), QTOL)?;
        let head = (self.q0.ln() + l.ln() - self.k.ln() - (mu + T::one()) * l).exp();
        Ok(head + j1)
    }

    fn scaled(&self, r: T) -> Result<Scaled<T>> {
        let two = T::lit(2.0);
        let tm1 = self.theta - T::one();
        if r < self.r0 {
            let rt = r.powf(tm1);
            let w = self.r0.powf(-tm1);
            return Ok(Scaled {
                ratio: T::one() / (self.theta + T::one()),
                log_slope: self.theta,
                h: (T::one() - w * rt) / tm1 + self.c0 * rt,
                h_int: T::one() / (two * tm1) + (self.c0 - w / tm1) * rt / (self.theta + T::one()),
            });
        }
        let l = r.ln();
        let m1 = self.mu - T::one();
        let x0 = self.r0 / r;
        let j2 = integrate(|x: T| x / (l + x.ln()), x0, T::one(), QTOL)?;
        Ok(Scaled {
            ratio: self.big_ratio(r)?,
            log_slope: self.mu - T::one() / l,
            h: (m1 * l + T::one()) / (m1 * m1 * l),
            h_int: self.h0 / (r * r) + (T::one() - x0 * x0) / (two * m1) + j2 / (m1 * m1),
        })
    }
}

impl<T: Real> TableData<T> {
    fn build(r: &[T], q: &[T], dq: &[T]) -> Result<Self> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        let n = r.len();
        if n < 2 || q.len() != n || dq.len() != n {
            return bad("tabulated weight needs at least two nodes and equal-length columns");
        }
        if !(r[0] > T::zero()) || r.windows(2).any(|w| !(w[1] > w[0])) {
            return bad("tabulated radii must be positive and strictly increasing");
        }
        if q.iter().any(|v| !(*v > T::zero())) || dq.iter().any(|v| !v.is_finite()) {
            return bad("tabulated q must be positive and q' finite");
        }
        let mut t = TableData {
            r: r.to_vec(),
            q: q.to_vec(),
            dq: dq.to_vec(),
            big_q: vec![T::zero(); n],
            tail: vec![T::zero(); n],
            h_int: vec![T::zero(); n],
            qq_int: vec![T::zero(); n],
            th0: r[0] * dq[0] / q[0],
            th_n: r[n - 1] * dq[n - 1] / q[n - 1],
        };
        let two = T::lit(2.0);
        // Power-law continuation below the first node and beyond the last one.
        let th0 = t.th0;
        t.big_q[0] = q[0] * r[0] / (th0 + T::one());
        for i in 0..n - 1 {
            let d = r[i + 1] - r[i];
            t.big_q[i + 1] = t.big_q[i]
                + d * (q[i] + q[i + 1]) / two
                + d * d * (dq[i] - dq[i + 1]) / T::lit(12.0);
        }
        let th_n = t.th_n;
        if !(th_n > T::one()) {
            return Err(Error::TailDivergent(format!(
                "tabulated weight ends with log-slope {} <= 1",
                th_n.as_f64()
            )));
        }
        t.tail[n - 1] = r[n - 1] / (q[n - 1] * (th_n - T::one()));
        for i in (0..n - 1).rev() {
            let cell = integrate(|s| T::one() / t.hermite(s).0, r[i], r[i + 1], QTOL)?;
            t.tail[i] = t.tail[i + 1] + cell;
        }
        // h is taken linear on [0, r_0].
        t.h_int[0] = q[0] * t.tail[0] * r[0] / two;
        t.qq_int[0] = r[0] * r[0] / (two * (th0 + T::one()));
        for i in 0..n - 1 {
            let hc = integrate(|s| t.h_raw(s).unwrap_or(T::nan()), r[i], r[i + 1], QTOL)?;
            t.h_int[i + 1] = t.h_int[i] + hc;
            let qc = integrate(|s| t.big_q(s) / t.hermite(s).0, r[i], r[i + 1], QTOL)?;
            t.qq_int[i + 1] = t.qq_int[i] + qc;
        }
        Ok(t)
    }

    fn cell(&self, r: T) -> usize {
        let n = self.r.len();
        match self.r.binary_search_by(|x| x.partial_cmp(&r).expect("finite radius")) {
            Ok(i) => i.min(n - 2),
            Err(i) => i.saturating_sub(1).min(n - 2),
        }
    }

    fn hermite(&self, r: T) -> (T, T) {
        let i = self.cell(r);
        let d = self.r[i + 1] - self.r[i];
        let t = (r - self.r[i]) / d;
        let (t2, t3) = (t * t, t * t * t);
        let (two, three) = (T::lit(2.0), T::lit(3.0));
        let h00 = two * t3 - three * t2 + T::one();
        let h10 = t3 - two * t2 + t;
        let h01 = -two * t3 + three * t2;
        let h11 = t3 - t2;
        let q = h00 * self.q[i] + h10 * d * self.dq[i] + h01 * self.q[i + 1] + h11 * d * self.dq[i + 1];
        let six = T::lit(6.0);
        let d00 = six * t2 - six * t;
        let d10 = three * t2 - T::lit(4.0) * t + T::one();
        let d11 = three * t2 - two * t;
        let dq = (d00 * (self.q[i] - self.q[i + 1])) / d + d10 * self.dq[i] + d11 * self.dq[i + 1];
        (q, dq)
    }

    /// `(q, q')` including the power-law continuation outside the table.
    fn extended(&self, r: T) -> (T, T) {
        let n = self.r.len();
        let (r0, rn) = (self.r[0], self.r[n - 1]);
        if r < r0 {
            let q = self.q[0] * (r / r0).powf(self.th0);
            (q, self.th0 * q / r)
        } else if r > rn {
            let q = self.q[n - 1] * (r / rn).powf(self.th_n);
            (q, self.th_n * q / r)
        } else {
            self.hermite(r)
        }
    }

    /// `Q/q` including the continuation.
    fn ratio_extended(&self, r: T) -> T {
        let n = self.r.len();
        let (r0, rn) = (self.r[0], self.r[n - 1]);
        if r < r0 {
            r / (self.th0 + T::one())
        } else if r > rn {
            let x = (r / rn).powf(self.th_n + T::one());
            let qn = self.q[n - 1];
            let big_q = self.big_q[n - 1] + qn * rn / (self.th_n + T::one()) * (x - T::one());
            big_q / self.extended(r).0
        } else {
            self.big_q(r) / self.hermite(r).0
        }
    }

    fn big_q(&self, r: T) -> T {
        let i = self.cell(r);
        let d = self.r[i + 1] - self.r[i];
        let t = (r - self.r[i]) / d;
        let (t2, t3, t4) = (t * t, t * t * t, t * t * t * t);
        let (two, three, four) = (T::lit(2.0), T::lit(3.0), T::lit(4.0));
        let i00 = t4 / two - t3 + t;
        let i10 = t4 / four - two * t3 / three + t2 / two;
        let i01 = -t4 / two + t3;
        let i11 = t4 / four - t3 / three;
        self.big_q[i]
            + d * (i00 * self.q[i] + i10 * d * self.dq[i] + i01 * self.q[i + 1] + i11 * d * self.dq[i + 1])
    }

    fn tail_at(&self, r: T) -> Result<T> {
        let i = self.cell(r);
        let part = integrate(|s| T::one() / self.hermite(s).0, r, self.r[i + 1], QTOL)?;
        Ok(self.tail[i + 1] + part)
    }

    fn h_raw(&self, r: T) -> Result<T> {
        Ok(self.hermite(r).0 * self.tail_at(r)?)
    }

    fn qq_integral(&self, r: T) -> Result<T> {
        let i = self.cell(r);
        let part = integrate(|s| self.big_q(s) / self.hermite(s).0, self.r[i], r, QTOL)?;
        Ok(self.qq_int[i] + part)
    }

    fn scaled(&self, r: T) -> Result<Scaled<T>> {
        let (q, dq) = self.hermite(r);
        let i = self.cell(r);
        let h = self.h_raw(r)?;
        let part = integrate(|s| self.h_raw(s).unwrap_or(T::nan()), self.r[i], r, QTOL)?;
        Ok(Scaled {
            ratio: self.big_q(r) / (q * r),
            log_slope: r * dq / q,
            h: h / r,
            h_int: (self.h_int[i] + part) / (r * r),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn power(theta: f64) -> Weight<f64> {
        Weight::new(WeightSpec::Power { theta }).unwrap()
    }

    #[test]
    fn power_two_at_two() {
        let v = power(2.0).eval(2.0).unwrap();
        assert_relative_eq!(v.q, 4.0);
        assert_relative_eq!(v.q_prime, 4.0);
        assert_relative_eq!(v.big_q, 8.0 / 3.0, max_relative = 1e-15);
        assert_relative_eq!(v.big_h, 1.0 / 3.0, max_relative = 1e-15);
        assert_relative_eq!(v.h, 2.0, max_relative = 1e-15);
        assert_relative_eq!(v.h_prime, 1.0, max_relative = 1e-15);
        assert_relative_eq!(v.g, 0.5, max_relative = 1e-15);
    }

    #[test]
    fn power_three_at_one() {
        let v = power(3.0).eval(1.0).unwrap();
        assert_relative_eq!(v.big_h, 0.25, max_relative = 1e-15);
        assert_relative_eq!(v.h_prime, 0.5, max_relative = 1e-15);
        assert_relative_eq!(v.g, 1.0, max_relative = 1e-15);
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(Weight::new(WeightSpec::Power { theta: 1.0 }).is_err());
        assert!(Weight::new(WeightSpec::PowerSum { theta: 0.5, c: 1.0 }).is_err());
        assert!(Weight::new(WeightSpec::PiecewiseLog { theta: 2.0, mu: 3.0, r0: 8.0 }).is_err());
        assert!(Weight::new(WeightSpec::piecewise_log(2.0, 5.0)).is_err());
        assert!(Weight::new(WeightSpec::Tabulated { r: vec![1.0, 1.0], q: vec![1.0, 2.0], q_prime: vec![1.0, 1.0] }).is_err());
    }

    #[test]
    fn power_sum_large_radius() {
        let w = Weight::new(WeightSpec::PowerSum { theta: 2.0f64, c: 1.0 }).unwrap();
        assert!((w.big_h(1e8).unwrap() - 0.25).abs() < 1e-7);
        assert!((w.h_prime(1e8).unwrap() - 0.5).abs() < 1e-7);
    }

    #[test]
    fn piecewise_log_h_is_continuous_at_r0() {
        let w = Weight::new(WeightSpec::<f64>::piecewise_log_default(2.0)).unwrap();
        let r0 = std::f64::consts::E.powi(2);
        let below = w.h(r0 * (1.0 - 1e-12)).unwrap();
        let above = w.h(r0).unwrap();
        assert_relative_eq!(below, above, max_relative = 1e-10);
        let qb = w.q(r0 * (1.0 - 1e-13));
        assert_relative_eq!(qb, w.q(r0), max_relative = 1e-11);
    }

    #[test]
    fn log1p_defect_branches_agree() {
        let x = 1e-2f64;
        let direct = (x - x.ln_1p()) / (x * x);
        let series = log1p_defect(x * (1.0 - 1e-12));
        assert_relative_eq!(direct, series, max_relative = 1e-12);
    }

    #[test]
    fn tabulated_rejects_out_of_range() {
        let r: Vec<f64> = (1..=50).map(|i| 0.1 * i as f64).collect();
        let q = r.iter().map(|x| x * x).collect();
        let dq = r.iter().map(|x| 2.0 * x).collect();
        let w = Weight::new(WeightSpec::Tabulated { r, q, q_prime: dq }).unwrap();
        assert!(matches!(w.eval(0.05), Err(Error::OutOfRange { .. })));
        assert!(w.eval(5.0).is_ok());
    }

    #[test]
    fn tabulated_continues_as_power_law() {
        let r: Vec<f64> = (1..=50).map(|i| 0.1 * i as f64).collect();
        let q = r.iter().map(|x| x * x).collect();
        let dq = r.iter().map(|x| 2.0 * x).collect();
        let w = Weight::new(WeightSpec::Tabulated { r, q, q_prime: dq }).unwrap();
        for &x in &[1e-6f64, 0.05, 2.345, 12.0] {
            assert_relative_eq!(w.q_ratio(x).unwrap(), x / 3.0, max_relative = 1e-9);
            assert_relative_eq!(w.q_ratio_integral(x).unwrap(), x * x / 6.0, max_relative = 1e-9);
            assert_relative_eq!(w.log_derivative(x), 2.0 / x, max_relative = 1e-12);
        }
    }

    #[test]
    fn tabulated_divergent_tail_rejected() {
        let r: Vec<f64> = (1..=10).map(|i| i as f64).collect();
        let q = r.clone();
        let dq = vec![1.0; 10];
        assert!(matches!(
            Weight::new(WeightSpec::Tabulated { r, q, q_prime: dq }),
            Err(Error::TailDivergent(_))
        ));
    }

    #[test]
    fn single_precision_power() {
        let w = Weight::new(WeightSpec::Power { theta: 2.0f32 }).unwrap();
        let v = w.eval(3.0).unwrap();
        assert!((v.big_h - 1.0 / 3.0).abs() < 1e-6);
        assert!((v.g - 0.5).abs() < 1e-6);
    }
}
