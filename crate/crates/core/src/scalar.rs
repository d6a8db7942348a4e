//! Numeric abstraction shared by every computation in the crate.
//!
//! Monetary amounts, fractions and performance indices are all carried in the
//! same scalar type `S`. Production code uses [`rust_decimal::Decimal`] so that
//! money sums are exact and associative; `f64`/`f32` and `num_rational`
//! ratios are supported for analysis and testing.

use std::fmt::{Debug, Display};

use num_rational::Ratio;
use num_traits::{FromPrimitive, Num, Signed, ToPrimitive};
use rust_decimal::Decimal;

/// A signed number usable for amounts and ratios.
///
/// The `try_*` operations return `None` instead of overflowing, wrapping or
/// producing a non-finite value.
pub trait Scalar:
    Num
    + Signed
    + Copy
    + PartialOrd
    + ToPrimitive
    + FromPrimitive
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    fn try_add(self, rhs: Self) -> Option<Self>;
    fn try_sub(self, rhs: Self) -> Option<Self>;
    fn try_mul(self, rhs: Self) -> Option<Self>;
    fn try_div(self, rhs: Self) -> Option<Self>;

    /// `false` for NaN and infinities; exact types are always finite.
    fn is_finite_value(self) -> bool;

    fn from_period(period: i64) -> Option<Self> {
        Self::from_i64(period)
    }

    /// Rounds `self` just enough that `self ± p` is exact for every `p` in
    /// `peers`. Only finite-precision decimals ever change.
    fn fit_for_subtraction(self, _peers: &[Self]) -> Self {
        self
    }

    /// Lossy view used for dispersion statistics and threshold checks.
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

macro_rules! float_scalar {
    ($($t:ty),*) => {$(
        impl Scalar for $t {
            fn try_add(self, rhs: Self) -> Option<Self> {
                finite(self + rhs)
            }
            fn try_sub(self, rhs: Self) -> Option<Self> {
                finite(self - rhs)
            }
            fn try_mul(self, rhs: Self) -> Option<Self> {
                finite(self * rhs)
            }
            fn try_div(self, rhs: Self) -> Option<Self> {
                if rhs == 0.0 {
                    return None;
                }
                finite(self / rhs)
            }
            fn is_finite_value(self) -> bool {
                self.is_finite()
            }
        }
    )*};
}

fn finite<T: num_traits::Float>(v: T) -> Option<T> {
    v.is_finite().then_some(v)
}

float_scalar!(f32, f64);

impl Scalar for Decimal {
    fn try_add(self, rhs: Self) -> Option<Self> {
        self.checked_add(rhs)
    }
    fn try_sub(self, rhs: Self) -> Option<Self> {
        self.checked_sub(rhs)
    }
    fn try_mul(self, rhs: Self) -> Option<Self> {
        self.checked_mul(rhs)
    }
    fn try_div(self, rhs: Self) -> Option<Self> {
        self.checked_div(rhs)
    }
    fn is_finite_value(self) -> bool {
        true
    }
    fn fit_for_subtraction(self, peers: &[Self]) -> Self {
        // a sum or difference has at most one more integer digit than its
        // widest operand and as many fraction digits as the finer one
        let widest = peers
            .iter()
            .chain([&self])
            .map(|d| integer_digits(*d))
            .max()
            .unwrap_or(0);
        let room = DECIMAL_DIGITS.saturating_sub(widest + 1);
        if self.scale() > room {
            self.round_dp(room)
        } else {
            self
        }
    }
}

/// Significant digits every `Decimal` mantissa can hold.
const DECIMAL_DIGITS: u32 = 28;

fn integer_digits(d: Decimal) -> u32 {
    let mut whole = d.abs().trunc();
    let mut n = 0;
    while !whole.is_zero() {
        whole = (whole / Decimal::TEN).trunc();
        n += 1;
    }
    n
}

macro_rules! ratio_scalar {
    ($($t:ty),*) => {$(
        impl Scalar for Ratio<$t> {
            fn try_add(self, rhs: Self) -> Option<Self> {
                num_traits::CheckedAdd::checked_add(&self, &rhs)
            }
            fn try_sub(self, rhs: Self) -> Option<Self> {
                num_traits::CheckedSub::checked_sub(&self, &rhs)
            }
            fn try_mul(self, rhs: Self) -> Option<Self> {
                num_traits::CheckedMul::checked_mul(&self, &rhs)
            }
            fn try_div(self, rhs: Self) -> Option<Self> {
                num_traits::CheckedDiv::checked_div(&self, &rhs)
            }
            fn is_finite_value(self) -> bool {
                true
            }
        }
    )*};
}

ratio_scalar!(i64, i128);
