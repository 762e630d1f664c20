//! Hyper-dual numbers for exact first and second derivatives.
//!
//! A hyper-dual number `a + b·e1 + c·e2 + d·e1e2` with `e1² = e2² = 0` and
//! `e1e2 ≠ 0` carries a value, two directional first derivatives and the
//! mixed second derivative. Seeding input `p` with `e1` and input `q` with
//! `e2` yields `∂f/∂p` in the `e1` part and `∂²f/∂p∂q` in the `e1e2` part,
//! without truncation error.
//!
//! The residual system is written once against the [`Real`] trait and is
//! evaluated either on plain `f64` or on [`HyperDual`].

use std::ops::{Add, Div, Mul, Neg, Sub};

/// Scalar arithmetic required by the model equations.
pub trait Real:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    fn cst(v: f64) -> Self;
    fn re(self) -> f64;
    fn powf(self, p: f64) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
}

impl Real for f64 {
    #[inline]
    fn cst(v: f64) -> Self {
        v
    }
    #[inline]
    fn re(self) -> f64 {
        self
    }
    #[inline]
    fn powf(self, p: f64) -> Self {
        f64::powf(self, p)
    }
    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }
    #[inline]
    fn ln(self) -> Self {
        f64::ln(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HyperDual {
    pub re: f64,
    pub e1: f64,
    pub e2: f64,
    pub e12: f64,
}

impl HyperDual {
    pub const fn new(re: f64, e1: f64, e2: f64, e12: f64) -> Self {
        Self { re, e1, e2, e12 }
    }

    pub const fn constant(re: f64) -> Self {
        Self::new(re, 0.0, 0.0, 0.0)
    }

    /// Input seeded in the directions selected by `d1` and `d2`.
    pub fn seeded(re: f64, d1: bool, d2: bool) -> Self {
        Self::new(re, f64::from(u8::from(d1)), f64::from(u8::from(d2)), 0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.re.is_finite() && self.e1.is_finite() && self.e2.is_finite() && self.e12.is_finite()
    }

    /// Chain rule for a scalar function with value `g0`, slope `g1` and
    /// curvature `g2` at `self.re`. Zero seed components are skipped so that
    /// an infinite slope only poisons the result when it is actually needed.
    #[inline]
    fn chain(self, g0: f64, g1: f64, g2: f64) -> Self {
        let e1 = if self.e1 != 0.0 { g1 * self.e1 } else { 0.0 };
        let e2 = if self.e2 != 0.0 { g1 * self.e2 } else { 0.0 };
        let mut e12 = if self.e12 != 0.0 { g1 * self.e12 } else { 0.0 };
        if self.e1 != 0.0 && self.e2 != 0.0 {
            e12 += g2 * self.e1 * self.e2;
        }
        Self::new(g0, e1, e2, e12)
    }

    pub fn recip(self) -> Self {
        let inv = 1.0 / self.re;
        self.chain(inv, -inv * inv, 2.0 * inv * inv * inv)
    }
}

impl Real for HyperDual {
    #[inline]
    fn cst(v: f64) -> Self {
        Self::constant(v)
    }
    #[inline]
    fn re(self) -> f64 {
        self.re
    }
    fn powf(self, p: f64) -> Self {
        if p == 0.0 {
            return Self::constant(1.0);
        }
        if p == 1.0 {
            return self;
        }
        let x = self.re;
        let g0 = x.powf(p);
        let g1 = if self.e1 != 0.0 || self.e2 != 0.0 || self.e12 != 0.0 {
            p * x.powf(p - 1.0)
        } else {
            0.0
        };
        let g2 = if self.e1 != 0.0 && self.e2 != 0.0 {
            p * (p - 1.0) * x.powf(p - 2.0)
        } else {
            0.0
        };
        self.chain(g0, g1, g2)
    }
    fn exp(self) -> Self {
        let g = self.re.exp();
        self.chain(g, g, g)
    }
    fn ln(self) -> Self {
        let inv = 1.0 / self.re;
        self.chain(self.re.ln(), inv, -inv * inv)
    }
}

impl Add for HyperDual {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Self::new(self.re + o.re, self.e1 + o.e1, self.e2 + o.e2, self.e12 + o.e12)
    }
}

impl Sub for HyperDual {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Self::new(self.re - o.re, self.e1 - o.e1, self.e2 - o.e2, self.e12 - o.e12)
    }
}

impl Mul for HyperDual {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        Self::new(
            self.re * o.re,
            self.re * o.e1 + self.e1 * o.re,
            self.re * o.e2 + self.e2 * o.re,
            self.re * o.e12 + self.e1 * o.e2 + self.e2 * o.e1 + self.e12 * o.re,
        )
    }
}

impl Div for HyperDual {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        self * o.recip()
    }
}

impl Neg for HyperDual {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self::new(-self.re, -self.e1, -self.e2, -self.e12)
    }
}

impl Add<f64> for HyperDual {
    type Output = Self;
    #[inline]
    fn add(self, o: f64) -> Self {
        Self::new(self.re + o, self.e1, self.e2, self.e12)
    }
}

impl Sub<f64> for HyperDual {
    type Output = Self;
    #[inline]
    fn sub(self, o: f64) -> Self {
        Self::new(self.re - o, self.e1, self.e2, self.e12)
    }
}

impl Mul<f64> for HyperDual {
    type Output = Self;
    #[inline]
    fn mul(self, o: f64) -> Self {
        Self::new(self.re * o, self.e1 * o, self.e2 * o, self.e12 * o)
    }
}

impl Div<f64> for HyperDual {
    type Output = Self;
    #[inline]
    fn div(self, o: f64) -> Self {
        self * (1.0 / o)
    }
}
