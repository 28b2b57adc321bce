//! Scalar abstraction shared by every numerical routine.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating-point type the library computes in. Implemented for `f32` and `f64`.
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + Default + Sum + Send + Sync + 'static
{
    /// Lossless-enough conversion from an `f64` literal.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    fn from_usize_(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable")
    }

    fn to_f64_(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// `x ∧ y`.
#[inline]
pub fn min<T: Real>(x: T, y: T) -> T {
    if x < y {
        x
    } else {
        y
    }
}

/// `x⁺`.
#[inline]
pub fn pos<T: Real>(x: T) -> T {
    if x > T::zero() {
        x
    } else {
        T::zero()
    }
}

pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

pub fn norm<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

/// Row-major `d × d` matrix times vector.
pub fn mat_vec<T: Real>(m: &[T], v: &[T]) -> Vec<T> {
    let d = v.len();
    (0..d).map(|i| dot(&m[i * d..(i + 1) * d], v)).collect()
}

/// `vᵀ M v` for a row-major `d × d` matrix.
pub fn quad_form<T: Real>(m: &[T], v: &[T]) -> T {
    dot(v, &mat_vec(m, v))
}

/// Extended value in `ℝ ∪ {−∞, +∞}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ExtendedReal<T> {
    NegInfinity,
    Finite(T),
    PosInfinity,
}

impl<T: Real> ExtendedReal<T> {
    pub fn from_float(x: T) -> Self {
        if x == T::infinity() {
            ExtendedReal::PosInfinity
        } else if x == T::neg_infinity() {
            ExtendedReal::NegInfinity
        } else {
            ExtendedReal::Finite(x)
        }
    }

    pub fn to_float(self) -> T {
        match self {
            ExtendedReal::NegInfinity => T::neg_infinity(),
            ExtendedReal::Finite(x) => x,
            ExtendedReal::PosInfinity => T::infinity(),
        }
    }

    pub fn finite(self) -> Option<T> {
        match self {
            ExtendedReal::Finite(x) => Some(x),
            _ => None,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, ExtendedReal::Finite(_))
    }
}

impl<T: Real> Display for ExtendedReal<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ExtendedReal::NegInfinity => write!(f, "-inf"),
            ExtendedReal::Finite(x) => write!(f, "{x}"),
            ExtendedReal::PosInfinity => write!(f, "inf"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extended_real_round_trip() {
        for x in [f64::NEG_INFINITY, -1.5, 0.0, 2.0, f64::INFINITY] {
            assert_eq!(ExtendedReal::from_float(x).to_float(), x);
        }
        assert_eq!(ExtendedReal::<f32>::NegInfinity.finite(), None);
    }

    #[test]
    fn quad_form_matches_manual() {
        let m = [2.0, 1.0, 1.0, 3.0];
        assert_eq!(quad_form(&m, &[1.0, -1.0]), 2.0 - 1.0 - 1.0 + 3.0);
    }
}
