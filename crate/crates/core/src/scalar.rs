//! Scalar abstraction for the numeric kernels.
//!
//! Propagation, aggregation, lexical overlap and frame sampling only need
//! ring arithmetic plus a ceiling, so they are written once over [`Scalar`]
//! and instantiated for `f32`, `f64` and exact rationals.

use std::fmt::Debug;

use num_rational::Ratio;
use num_traits::{Float, Num, ToPrimitive};

/// Numeric type usable by the probability and sampling kernels.
pub trait Scalar: Num + Copy + PartialOrd + Debug {
    fn from_usize(n: usize) -> Self;

    /// Smallest integer not below `self`. Callers guarantee `self >= 0`.
    /// Floating types treat values within a small relative tolerance of an integer as
    /// that integer, so rounding noise does not add a step.
    fn ceil_to_usize(self) -> usize;

    fn to_f64(self) -> f64;
}

macro_rules! float_scalar {
    ($t:ty, $eps:expr) => {
        impl Scalar for $t {
            fn from_usize(n: usize) -> Self {
                n as $t
            }

            fn ceil_to_usize(self) -> usize {
                let nearest = self.round();
                if (self - nearest).abs() <= $eps * nearest.abs().max(1.0) {
                    nearest as usize
                } else {
                    self.ceil() as usize
                }
            }

            fn to_f64(self) -> f64 {
                self as f64
            }
        }
    };
}

float_scalar!(f32, 1e-6);
float_scalar!(f64, 1e-9);

impl Scalar for Ratio<i64> {
    fn from_usize(n: usize) -> Self {
        Ratio::from_integer(n as i64)
    }

    fn ceil_to_usize(self) -> usize {
        self.ceil().to_integer() as usize
    }

    fn to_f64(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }
}

/// Product of a sequence; the empty product is one.
pub fn product<S: Scalar>(values: impl IntoIterator<Item = S>) -> S {
    values.into_iter().fold(S::one(), |acc, v| acc * v)
}

/// Arithmetic mean, `None` for an empty sequence.
pub fn mean<S: Scalar>(values: impl IntoIterator<Item = S>) -> Option<S> {
    let mut sum = S::zero();
    let mut n = 0usize;
    for v in values {
        sum = sum + v;
        n += 1;
    }
    (n > 0).then(|| sum / S::from_usize(n))
}

/// Geometric mean. Only defined for floating scalars.
pub fn geometric_mean<S: Scalar + Float>(values: impl IntoIterator<Item = S>) -> Option<S> {
    let values: Vec<S> = values.into_iter().collect();
    if values.is_empty() {
        return None;
    }
    let n = <S as Scalar>::from_usize(values.len());
    Some(product(values.iter().copied()).powf(S::one() / n))
}

/// `|a ∩ b| / |a ∪ b|` from set sizes; zero when both sets are empty.
pub fn jaccard<S: Scalar>(intersection: usize, union: usize) -> S {
    if union == 0 {
        S::zero()
    } else {
        S::from_usize(intersection) / S::from_usize(union)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_product_is_one() {
        assert_eq!(product::<f64>([]), 1.0);
        assert_eq!(product([0.9, 0.8]), 0.9 * 0.8);
    }

    #[test]
    fn exact_mean_over_rationals() {
        let r = |n, d| Ratio::new(n, d);
        assert_eq!(mean([r(1, 5), r(9, 10), r(9, 10)]), Some(r(2, 3)));
        assert_eq!(mean::<Ratio<i64>>([]), None);
    }

    #[test]
    fn geometric_mean_of_equal_values() {
        let g = geometric_mean([0.25f64, 0.25, 0.25]).unwrap();
        assert!((g - 0.25).abs() < 1e-12);
        let g32 = geometric_mean([0.5f32, 0.125]).unwrap();
        assert!((g32 - 0.25).abs() < 1e-6);
    }

    #[test]
    fn jaccard_counts() {
        assert_eq!(jaccard::<f64>(2, 4), 0.5);
        assert_eq!(jaccard::<Ratio<i64>>(1, 3), Ratio::new(1, 3));
        assert_eq!(jaccard::<f32>(0, 0), 0.0);
    }

    #[test]
    fn ceil_agrees_across_scalars() {
        assert_eq!(3.06f64.ceil_to_usize(), 4);
        assert_eq!(Ratio::new(52i64, 17).ceil_to_usize(), 4);
        assert_eq!(Ratio::new(8i64, 1).ceil_to_usize(), 8);
        assert_eq!(8.0f32.ceil_to_usize(), 8);
        assert_eq!(1.0000000000000002f64.ceil_to_usize(), 1);
    }
}
