//! Scalar contract shared by every closed-form kernel.
//!
//! All kernel code is written against [`Real`], which exposes only a closed
//! primitive set (arithmetic, `exp`, `sin`, `cos`, `sinh`, `cosh`, `sqrt`,
//! integer powers). `f64` implements it directly; the reverse-mode tape in
//! [`crate::toytrain::tape`] implements it with a derivative-carrying `Var`,
//! so the same formulas produce gradients without modification.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

pub trait Real:
    Copy
    + Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
    + AddAssign
{
    /// Lift a constant. Constants carry no derivative.
    fn cst(v: f64) -> Self;
    /// Primal value, used for branching (regime selection, series switches).
    fn value(self) -> f64;

    fn exp(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn sinh(self) -> Self;
    fn cosh(self) -> Self;
    fn sqrt(self) -> Self;
    fn powi(self, n: i32) -> Self;

    #[inline]
    fn zero() -> Self {
        Self::cst(0.0)
    }

    #[inline]
    fn one() -> Self {
        Self::cst(1.0)
    }

    #[inline]
    fn sq(self) -> Self {
        self * self
    }

    /// `c - self` for a constant `c`.
    #[inline]
    fn rsub(self, c: f64) -> Self {
        -self + c
    }

    /// `c / self` for a constant `c`.
    #[inline]
    fn recip_scaled(self, c: f64) -> Self {
        Self::cst(c) / self
    }
}

impl Real for f64 {
    #[inline]
    fn cst(v: f64) -> Self {
        v
    }
    #[inline]
    fn value(self) -> f64 {
        self
    }
    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }
    #[inline]
    fn sin(self) -> Self {
        f64::sin(self)
    }
    #[inline]
    fn cos(self) -> Self {
        f64::cos(self)
    }
    #[inline]
    fn sinh(self) -> Self {
        f64::sinh(self)
    }
    #[inline]
    fn cosh(self) -> Self {
        f64::cosh(self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn powi(self, n: i32) -> Self {
        f64::powi(self, n)
    }
}

/// Inner product of two equally long slices.
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

/// Lift a slice of constants.
pub fn lift<T: Real>(v: &[f64]) -> Vec<T> {
    v.iter().map(|&x| T::cst(x)).collect()
}

/// Primal values of a slice.
pub fn values<T: Real>(v: &[T]) -> Vec<f64> {
    v.iter().map(|x| x.value()).collect()
}
