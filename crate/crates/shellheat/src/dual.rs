//! First-order dual numbers, nestable.
//!
//! The shell-energy kernels are written generically over a scalar type so the
//! same code path yields values (`f64`), exact partial derivatives
//! (`Dual<f64>`) and exact second derivatives (`Dual<Dual<f64>>`). No
//! finite-difference noise enters the assembled gradients or Hessian
//! actions; finite differences appear only in tests, as the independent
//! check.

use std::ops::{Add, Div, Mul, Neg, Sub};

/// Scalar abstraction shared by the pointwise tensor kernels.
pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn from_f64(v: f64) -> Self;
    /// Discards all derivative payload.
    fn value(self) -> f64;
    /// Multiplication by an f64 constant.
    fn scale(self, c: f64) -> Self;
}

impl Scalar for f64 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline]
    fn value(self) -> f64 {
        self
    }
    #[inline]
    fn scale(self, c: f64) -> Self {
        self * c
    }
}

/// `a + b ε` with `ε² = 0`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Dual<T> {
    pub re: T,
    pub eps: T,
}

impl<T: Scalar> Dual<T> {
    pub fn new(re: T, eps: T) -> Self {
        Self { re, eps }
    }

    pub fn constant(re: T) -> Self {
        Self {
            re,
            eps: T::from_f64(0.0),
        }
    }

    /// Seeds the derivative slot with 1.
    pub fn seeded(re: T) -> Self {
        Self {
            re,
            eps: T::from_f64(1.0),
        }
    }
}

impl<T: Scalar> Add for Dual<T> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Self::new(self.re + o.re, self.eps + o.eps)
    }
}

impl<T: Scalar> Sub for Dual<T> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Self::new(self.re - o.re, self.eps - o.eps)
    }
}

impl<T: Scalar> Mul for Dual<T> {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        Self::new(self.re * o.re, self.re * o.eps + self.eps * o.re)
    }
}

impl<T: Scalar> Div for Dual<T> {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        Self::new(
            self.re / o.re,
            (self.eps * o.re - self.re * o.eps) / (o.re * o.re),
        )
    }
}

impl<T: Scalar> Neg for Dual<T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self::new(-self.re, -self.eps)
    }
}

impl<T: Scalar> Scalar for Dual<T> {
    #[inline]
    fn from_f64(v: f64) -> Self {
        Self::constant(T::from_f64(v))
    }
    #[inline]
    fn value(self) -> f64 {
        self.re.value()
    }
    #[inline]
    fn scale(self, c: f64) -> Self {
        Self::new(self.re.scale(c), self.eps.scale(c))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_rule() {
        let x = Dual::<f64>::seeded(3.0);
        let y = x * x * x; // x³, derivative 3x²
        assert_eq!(y.re, 27.0);
        assert_eq!(y.eps, 27.0);
    }

    #[test]
    fn quotient_rule() {
        let x = Dual::<f64>::seeded(2.0);
        let y = Dual::constant(1.0) / x;
        assert_eq!(y.re, 0.5);
        assert_eq!(y.eps, -0.25);
    }

    #[test]
    fn nested_second_derivative() {
        // f(x) = x⁴: f''(3) = 108
        let x = Dual::<Dual<f64>>::seeded(Dual::seeded(3.0));
        let y = x * x * x * x;
        assert_eq!(y.eps.eps, 108.0);
    }
}
