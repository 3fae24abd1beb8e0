//! Scalar abstractions.
//!
//! Welfare accounting and the optimal-matching solver work over any [`Value`]
//! (floats or exact rationals). The closed-form analytics need transcendental
//! functions and are written against [`Real`].

use std::fmt::Debug;

use num_rational::Ratio;
use num_traits::{Float, FloatConst, FromPrimitive, Num, ToPrimitive};

/// A nonnegative valuation scalar: `f32`, `f64`, or an exact rational.
pub trait Value: Num + Copy + PartialOrd + Debug + Send + Sync + 'static {
    /// Finite and nonnegative.
    fn is_admissible(&self) -> bool;

    fn to_f64_lossy(&self) -> f64;

    fn abs_value(self) -> Self {
        if self < Self::zero() {
            Self::zero() - self
        } else {
            self
        }
    }
}

macro_rules! impl_value_float {
    ($($t:ty),*) => {$(
        impl Value for $t {
            #[inline]
            fn is_admissible(&self) -> bool {
                self.is_finite() && *self >= 0.0
            }

            #[inline]
            fn to_f64_lossy(&self) -> f64 {
                *self as f64
            }
        }
    )*};
}

impl_value_float!(f32, f64);

macro_rules! impl_value_ratio {
    ($($t:ty),*) => {$(
        impl Value for Ratio<$t> {
            #[inline]
            fn is_admissible(&self) -> bool {
                *self >= Ratio::from_integer(0)
            }

            fn to_f64_lossy(&self) -> f64 {
                self.to_f64().unwrap_or(f64::NAN)
            }
        }
    )*};
}

impl_value_ratio!(i32, i64, i128);

/// Floating-point scalar for closed-form quantities.
pub trait Real: Float + FloatConst + FromPrimitive + Debug + Send + Sync + 'static {
    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 converts into every Real")
    }

    #[inline]
    fn of_usize(x: usize) -> Self {
        Self::from_usize(x).expect("usize converts into every Real")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Neumaier-compensated running sum.
///
/// For exact scalars the compensation term stays zero.
#[derive(Debug, Clone, Copy)]
pub struct CompensatedSum<T> {
    sum: T,
    compensation: T,
}

impl<T: Value> Default for CompensatedSum<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Value> CompensatedSum<T> {
    pub fn new() -> Self {
        Self {
            sum: T::zero(),
            compensation: T::zero(),
        }
    }

    #[inline]
    pub fn add(&mut self, x: T) {
        let t = self.sum + x;
        if self.sum.abs_value() >= x.abs_value() {
            self.compensation = self.compensation + ((self.sum - t) + x);
        } else {
            self.compensation = self.compensation + ((x - t) + self.sum);
        }
        self.sum = t;
    }

    /// Folds another accumulator in. Order-sensitive only through rounding.
    pub fn merge(&mut self, other: &Self) {
        self.add(other.sum);
        self.add(other.compensation);
    }

    #[inline]
    pub fn value(&self) -> T {
        self.sum + self.compensation
    }
}

impl<T: Value> FromIterator<T> for CompensatedSum<T> {
    fn from_iter<I: IntoIterator<Item = T>>(iter: I) -> Self {
        let mut acc = Self::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut acc = CompensatedSum::<f64>::new();
        acc.add(1.0);
        for _ in 0..10 {
            acc.add(1e-16);
        }
        acc.add(-1.0);
        assert!((acc.value() - 1e-15).abs() < 1e-30);
    }

    #[test]
    fn rational_sum_is_exact() {
        let acc: CompensatedSum<Ratio<i64>> =
            (1..=10).map(|k| Ratio::new(1, k)).collect();
        assert_eq!(acc.value(), Ratio::new(7381, 2520));
    }

    #[test]
    fn admissibility() {
        assert!(0.0f64.is_admissible());
        assert!(!(-1e-300f64).is_admissible());
        assert!(!f64::NAN.is_admissible());
        assert!(!f32::INFINITY.is_admissible());
        assert!(!Ratio::new(-1i64, 3).is_admissible());
    }
}
