//! Scalar abstraction shared by the distribution, geodesy and scoring code.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive};

/// Floating-point scalar usable by every numeric routine in the crate (`f32` or `f64`).
pub trait Real: Float + FromPrimitive + Debug + Display + Default + Send + Sync + 'static {}

impl<T> Real for T where T: Float + FromPrimitive + Debug + Display + Default + Send + Sync + 'static
{}

/// Lossless-enough literal conversion; every literal used in the crate is representable in `f32`.
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("literal representable in scalar type")
}

#[inline]
pub fn from_usize<T: Real>(n: usize) -> T {
    T::from_usize(n).expect("count representable in scalar type")
}

#[inline]
pub fn to_f64<T: Real>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// Natural log of the gamma function, evaluated in `f64` and narrowed back.
#[inline]
pub fn ln_gamma<T: Real>(x: T) -> T {
    lit(statrs::function::gamma::ln_gamma(to_f64(x)))
}

/// Sum with a fixed pairwise-tree association so results do not depend on how
/// the terms were produced (sequential or parallel).
pub fn pairwise_sum<T: Real>(xs: &[T]) -> T {
    match xs.len() {
        0 => T::zero(),
        1 => xs[0],
        n if n <= 8 => xs.iter().fold(T::zero(), |acc, &x| acc + x),
        n => {
            let mid = n / 2;
            pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ln_gamma_matches_factorials() {
        let lg: f64 = ln_gamma(6.0);
        assert!((lg - 120f64.ln()).abs() < 1e-12);
        let lg32: f32 = ln_gamma(5.0f32);
        assert!((lg32 - 24f32.ln()).abs() < 1e-5);
    }

    #[test]
    fn pairwise_sum_matches_naive_on_integers() {
        let xs: Vec<f64> = (1..=1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&xs), 500500.0);
        assert_eq!(pairwise_sum::<f64>(&[]), 0.0);
    }
}
