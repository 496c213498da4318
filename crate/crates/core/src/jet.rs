//! Second-order forward-mode differentiation in two variables.
//!
//! [`Dual2`] carries a truncated Taylor expansion of a scalar function of
//! `(p, q)`: the value, both first partials and the three distinct second
//! partials. Arithmetic propagates all six coefficients exactly, so a model
//! written once as an expression yields its full second-order jet.

use std::ops::{Add, Div, Mul, Neg, Sub};

/// Truncated second-order Taylor expansion in `(p, q)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual2 {
    pub v: f64,
    pub dp: f64,
    pub dq: f64,
    pub dpp: f64,
    pub dpq: f64,
    pub dqq: f64,
}

impl Dual2 {
    pub const fn constant(v: f64) -> Self {
        Dual2 { v, dp: 0.0, dq: 0.0, dpp: 0.0, dpq: 0.0, dqq: 0.0 }
    }

    /// The independent variable `p` seeded at `value`.
    pub const fn var_p(value: f64) -> Self {
        Dual2 { v: value, dp: 1.0, dq: 0.0, dpp: 0.0, dpq: 0.0, dqq: 0.0 }
    }

    /// The independent variable `q` seeded at `value`.
    pub const fn var_q(value: f64) -> Self {
        Dual2 { v: value, dp: 0.0, dq: 1.0, dpp: 0.0, dpq: 0.0, dqq: 0.0 }
    }

    /// Composes a scalar function with this expansion given `f(v)`, `f'(v)`, `f''(v)`.
    #[inline]
    pub fn chain(self, f0: f64, f1: f64, f2: f64) -> Self {
        Dual2 {
            v: f0,
            dp: f1 * self.dp,
            dq: f1 * self.dq,
            dpp: f1 * self.dpp + f2 * self.dp * self.dp,
            dpq: f1 * self.dpq + f2 * self.dp * self.dq,
            dqq: f1 * self.dqq + f2 * self.dq * self.dq,
        }
    }

    pub fn exp(self) -> Self {
        let e = self.v.exp();
        self.chain(e, e, e)
    }

    pub fn ln(self) -> Self {
        let inv = 1.0 / self.v;
        self.chain(self.v.ln(), inv, -inv * inv)
    }

    pub fn sqrt(self) -> Self {
        let s = self.v.sqrt();
        self.chain(s, 0.5 / s, -0.25 / (s * self.v))
    }

    pub fn recip(self) -> Self {
        let inv = 1.0 / self.v;
        self.chain(inv, -inv * inv, 2.0 * inv * inv * inv)
    }

    /// Integer power; exact at a zero base for every non-negative exponent.
    pub fn powi(self, n: i32) -> Self {
        let nf = n as f64;
        let f0 = self.v.powi(n);
        let f1 = if n == 0 { 0.0 } else { nf * self.v.powi(n - 1) };
        let f2 = if n == 0 || n == 1 { 0.0 } else { nf * (nf - 1.0) * self.v.powi(n - 2) };
        self.chain(f0, f1, f2)
    }

    /// Real constant power. Derivative coefficients are formed directly from
    /// `powf`, so `x^k` at `x = 0` is finite whenever `k >= 2`.
    pub fn powf(self, k: f64) -> Self {
        if k.fract() == 0.0 && k.abs() < i32::MAX as f64 {
            return self.powi(k as i32);
        }
        let f0 = self.v.powf(k);
        let f1 = k * self.v.powf(k - 1.0);
        let f2 = k * (k - 1.0) * self.v.powf(k - 2.0);
        self.chain(f0, f1, f2)
    }

    /// General power `self^other` via `exp(other * ln(self))`.
    pub fn pow(self, other: Dual2) -> Self {
        if other.dp == 0.0 && other.dq == 0.0 && other.dpp == 0.0 && other.dpq == 0.0 && other.dqq == 0.0 {
            return self.powf(other.v);
        }
        (other * self.ln()).exp()
    }

    pub fn is_finite(&self) -> bool {
        self.v.is_finite()
            && self.dp.is_finite()
            && self.dq.is_finite()
            && self.dpp.is_finite()
            && self.dpq.is_finite()
            && self.dqq.is_finite()
    }
}

impl From<f64> for Dual2 {
    fn from(v: f64) -> Self {
        Dual2::constant(v)
    }
}

impl Add for Dual2 {
    type Output = Dual2;
    #[inline]
    fn add(self, o: Dual2) -> Dual2 {
        Dual2 {
            v: self.v + o.v,
            dp: self.dp + o.dp,
            dq: self.dq + o.dq,
            dpp: self.dpp + o.dpp,
            dpq: self.dpq + o.dpq,
            dqq: self.dqq + o.dqq,
        }
    }
}

impl Sub for Dual2 {
    type Output = Dual2;
    #[inline]
    fn sub(self, o: Dual2) -> Dual2 {
        Dual2 {
            v: self.v - o.v,
            dp: self.dp - o.dp,
            dq: self.dq - o.dq,
            dpp: self.dpp - o.dpp,
            dpq: self.dpq - o.dpq,
            dqq: self.dqq - o.dqq,
        }
    }
}

impl Mul for Dual2 {
    type Output = Dual2;
    #[inline]
    fn mul(self, o: Dual2) -> Dual2 {
        Dual2 {
            v: self.v * o.v,
            dp: self.dp * o.v + self.v * o.dp,
            dq: self.dq * o.v + self.v * o.dq,
            dpp: self.dpp * o.v + 2.0 * self.dp * o.dp + self.v * o.dpp,
            dpq: self.dpq * o.v + self.dp * o.dq + self.dq * o.dp + self.v * o.dpq,
            dqq: self.dqq * o.v + 2.0 * self.dq * o.dq + self.v * o.dqq,
        }
    }
}

impl Div for Dual2 {
    type Output = Dual2;
    #[inline]
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, o: Dual2) -> Dual2 {
        self * o.recip()
    }
}

impl Neg for Dual2 {
    type Output = Dual2;
    #[inline]
    fn neg(self) -> Dual2 {
        Dual2 { v: -self.v, dp: -self.dp, dq: -self.dq, dpp: -self.dpp, dpq: -self.dpq, dqq: -self.dqq }
    }
}
