//! Exact combinatorial model of how row numbers depend on key ordinals.
//!
//! Between two known records at keys `k_min` (row 0) and `k_max` (row
//! `λ_max`), the `λ_max - 1` records in between occupy distinct key values
//! strictly inside the segment. If every placement is equally likely, the
//! number of records below a key `k` is hypergeometric. This module gives
//! its counts, mean and variance, and the inverse mean used to estimate a
//! key from a row number.
//!
//! Means and variances are generic over [`Scalar`]: use [`Rational`] for exact
//! results and `f64` for quick estimates. Counts are always exact.
//!
//! [`Rational`]: crate::Rational

use num_bigint::BigUint;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{Num, One, ToPrimitive, Zero};
use thiserror::Error;

use crate::Ordinal;

/// Scalar types the model's means and variances can be evaluated in.
pub trait Scalar: Num + Clone + PartialOrd + std::fmt::Debug {
    fn from_ordinal(value: &Ordinal) -> Self;

    fn from_u64(value: u64) -> Self {
        Self::from_ordinal(&BigUint::from(value))
    }
}

impl Scalar for f64 {
    fn from_ordinal(value: &Ordinal) -> Self {
        value.to_f64().unwrap_or(f64::INFINITY)
    }

    fn from_u64(value: u64) -> Self {
        value as f64
    }
}

impl Scalar for f32 {
    fn from_ordinal(value: &Ordinal) -> Self {
        value.to_f32().unwrap_or(f32::INFINITY)
    }

    fn from_u64(value: u64) -> Self {
        value as f32
    }
}

impl Scalar for BigRational {
    fn from_ordinal(value: &Ordinal) -> Self {
        BigRational::from_integer(value.clone().into())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("k_max must exceed k_min")]
    EmptySegment,
    #[error("λ_max = {lambda_max} does not fit between 1 and the key span {span}")]
    TooManyRecords { lambda_max: u64, span: Ordinal },
}

/// One interpolation segment: known records at `k_min` (row 0) and `k_max`
/// (row `lambda_max`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentModel {
    k_min: Ordinal,
    k_max: Ordinal,
    lambda_max: u64,
}

/// Binomial coefficient; zero when `k > n`.
pub fn binomial(n: &BigUint, k: u64) -> BigUint {
    let k_big = BigUint::from(k);
    if &k_big > n {
        return BigUint::zero();
    }
    // Use the smaller of k and n - k.
    let alt = n - &k_big;
    let k = if alt < k_big {
        alt.to_u64().expect("smaller binomial index fits u64")
    } else {
        k
    };
    let mut acc = BigUint::one();
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

impl SegmentModel {
    pub fn new(k_min: Ordinal, k_max: Ordinal, lambda_max: u64) -> Result<Self, ModelError> {
        if k_max <= k_min {
            return Err(ModelError::EmptySegment);
        }
        let span = &k_max - &k_min;
        if lambda_max == 0 || BigUint::from(lambda_max) > span {
            return Err(ModelError::TooManyRecords { lambda_max, span });
        }
        Ok(Self {
            k_min,
            k_max,
            lambda_max,
        })
    }

    pub fn k_min(&self) -> &Ordinal {
        &self.k_min
    }

    pub fn k_max(&self) -> &Ordinal {
        &self.k_max
    }

    pub fn lambda_max(&self) -> u64 {
        self.lambda_max
    }

    fn span(&self) -> Ordinal {
        &self.k_max - &self.k_min
    }

    /// Number of admissible monotone placements:
    /// `C(k_max - k_min - 1, λ_max - 1)`.
    pub fn total_functions(&self) -> BigUint {
        binomial(&(self.span() - 1u32), self.lambda_max - 1)
    }

    /// Number of placements with exactly `lambda` records below key `k`:
    /// `C(k - k_min - 1, λ - 1) * C(k_max - k, λ_max - λ)`.
    ///
    /// Defined for `k_min < k <= k_max` and `1 <= λ <= λ_max`; zero
    /// elsewhere.
    pub fn functions_through(&self, k: &Ordinal, lambda: u64) -> BigUint {
        if k <= &self.k_min || k > &self.k_max || lambda == 0 || lambda > self.lambda_max {
            return BigUint::zero();
        }
        let below = k - &self.k_min - 1u32;
        let above = &self.k_max - k;
        binomial(&below, lambda - 1) * binomial(&above, self.lambda_max - lambda)
    }

    /// Mean number of records below `k`; zero at `k_min`.
    pub fn expected_lambda<T: Scalar>(&self, k: &Ordinal) -> T {
        if k <= &self.k_min {
            return T::zero();
        }
        if k >= &self.k_max {
            return T::from_u64(self.lambda_max);
        }
        let inner = self.span() - 1u32;
        let offset = k - &self.k_min - 1u32;
        T::from_u64(self.lambda_max - 1) * T::from_ordinal(&offset) / T::from_ordinal(&inner)
            + T::one()
    }

    /// Variance of the number of records below `k`. Zero at both ends of
    /// `k_min + 1 ..= k_max` (and at `k_min`, where the count is fixed).
    pub fn variance_lambda<T: Scalar>(&self, k: &Ordinal) -> T {
        if k <= &self.k_min || k >= &self.k_max {
            return T::zero();
        }
        let inner = self.span() - 1u32;
        if inner <= BigUint::one() {
            return T::zero();
        }
        let offset = k - &self.k_min - 1u32;
        let above = &self.k_max - k;
        let free = self.span() - self.lambda_max;
        let inner_s = T::from_ordinal(&inner);
        T::from_u64(self.lambda_max - 1)
            * T::from_ordinal(&offset)
            * T::from_ordinal(&above)
            * T::from_ordinal(&free)
            / (inner_s.clone() * inner_s.clone() * (inner_s - T::one()))
    }

    /// Minimum-variance unbiased key estimate for row `lambda`: the inverse
    /// of [`expected_lambda`](Self::expected_lambda).
    pub fn expected_key<T: Scalar>(&self, lambda: u64) -> T {
        if lambda == 0 {
            return T::from_ordinal(&self.k_min);
        }
        if lambda >= self.lambda_max {
            return T::from_ordinal(&self.k_max);
        }
        let inner = self.span() - 1u32;
        T::from_u64(lambda - 1) * T::from_ordinal(&inner) / T::from_u64(self.lambda_max - 1)
            + T::from_ordinal(&self.k_min)
            + T::one()
    }

    /// [`expected_key`](Self::expected_key) rounded half-up, in integers.
    pub fn expected_key_rounded(&self, lambda: u64) -> Ordinal {
        interpolate_key(&self.k_min, &self.k_max, self.lambda_max, lambda)
    }

    /// [`expected_lambda`](Self::expected_lambda) rounded half-up, in integers.
    pub fn expected_lambda_rounded(&self, k: &Ordinal) -> u64 {
        interpolate_lambda(&self.k_min, &self.k_max, self.lambda_max, k)
    }
}

/// `round((num) / den)` with halves rounded up; `den > 0`.
fn div_round_half_up(num: BigUint, den: &BigUint) -> BigUint {
    let (q, r) = num.div_rem(den);
    if (r << 1u32) >= *den {
        q + 1u32
    } else {
        q
    }
}

/// Key estimate for local row `lambda` inside a segment whose endpoints sit
/// at local rows 0 and `lambda_span`, clamped into `(k_lo, k_hi]` for
/// interior rows. Does not require `lambda_span <= k_hi - k_lo`, so it also
/// serves segments built from stale or default bounds.
pub(crate) fn interpolate_key(k_lo: &Ordinal, k_hi: &Ordinal, lambda_span: u64, lambda: u64) -> Ordinal {
    if lambda == 0 {
        return k_lo.clone();
    }
    if lambda >= lambda_span || k_hi <= k_lo {
        return k_hi.clone();
    }
    let inner = k_hi - k_lo - 1u32;
    let offset = div_round_half_up(inner * (lambda - 1), &BigUint::from(lambda_span - 1));
    let k = k_lo + 1u32 + offset;
    if &k > k_hi {
        k_hi.clone()
    } else {
        k
    }
}

/// Row estimate for key `k` inside a segment, clamped into `[1, lambda_span]`
/// for `k > k_lo`; zero at or below `k_lo`.
pub(crate) fn interpolate_lambda(k_lo: &Ordinal, k_hi: &Ordinal, lambda_span: u64, k: &Ordinal) -> u64 {
    if k <= k_lo {
        return 0;
    }
    if k >= k_hi || lambda_span <= 1 {
        return lambda_span;
    }
    let inner = k_hi - k_lo - 1u32;
    if inner.is_zero() {
        return lambda_span;
    }
    let offset = k - k_lo - 1u32;
    let est = div_round_half_up(offset * (lambda_span - 1), &inner) + 1u32;
    est.to_u64().unwrap_or(lambda_span).clamp(1, lambda_span)
}
