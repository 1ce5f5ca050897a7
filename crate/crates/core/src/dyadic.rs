//! Exact dyadic rationals `m * 2^e`.
//!
//! All cube geometry on dyadic inputs is carried out in this type so that
//! comparisons such as `rdist(I, J) <= M` are decided without rounding.
//! Mantissas are `i128`; operations panic on overflow, which only happens
//! far outside the scale range the rest of the crate accepts.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::str::FromStr;

use num_rational::Ratio;

use crate::error::LagomError;

/// Exact rational used for ratios such as `rdist` and `ecc`.
pub type Rational = Ratio<i128>;

/// A dyadic rational `mantissa * 2^exponent`, kept normalized (odd mantissa
/// or zero with exponent 0) so that structural equality is value equality.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Dyadic {
    mantissa: i128,
    exponent: i32,
}

impl Dyadic {
    pub const ZERO: Dyadic = Dyadic { mantissa: 0, exponent: 0 };
    pub const ONE: Dyadic = Dyadic { mantissa: 1, exponent: 0 };

    pub fn new(mantissa: i128, exponent: i32) -> Self {
        if mantissa == 0 {
            return Self::ZERO;
        }
        let tz = mantissa.trailing_zeros() as i32;
        Dyadic {
            mantissa: mantissa >> tz,
            exponent: exponent + tz,
        }
    }

    pub fn from_int(v: i64) -> Self {
        Self::new(v as i128, 0)
    }

    /// `2^e`.
    pub fn pow2(e: i32) -> Self {
        Dyadic { mantissa: 1, exponent: e }
    }

    pub fn mantissa(&self) -> i128 {
        self.mantissa
    }

    pub fn exponent(&self) -> i32 {
        self.exponent
    }

    pub fn is_zero(&self) -> bool {
        self.mantissa == 0
    }

    pub fn signum(&self) -> i32 {
        self.mantissa.signum() as i32
    }

    pub fn abs(self) -> Self {
        Dyadic {
            mantissa: self.mantissa.abs(),
            exponent: self.exponent,
        }
    }

    /// Multiply by `2^e` exactly.
    pub fn scale_pow2(self, e: i32) -> Self {
        if self.is_zero() {
            self
        } else {
            Dyadic {
                mantissa: self.mantissa,
                exponent: self.exponent + e,
            }
        }
    }

    pub fn half(self) -> Self {
        self.scale_pow2(-1)
    }

    pub fn max(self, other: Self) -> Self {
        if self >= other {
            self
        } else {
            other
        }
    }

    pub fn min(self, other: Self) -> Self {
        if self <= other {
            self
        } else {
            other
        }
    }

    /// Nearest `f64`; exact whenever the mantissa fits in 53 bits.
    pub fn to_f64(self) -> f64 {
        (self.mantissa as f64) * (2.0f64).powi(self.exponent)
    }

    /// Exact conversion of a finite `f64`.
    pub fn from_f64(v: f64) -> Option<Self> {
        if !v.is_finite() {
            return None;
        }
        if v == 0.0 {
            return Some(Self::ZERO);
        }
        let bits = v.to_bits();
        let sign = if bits >> 63 == 0 { 1i128 } else { -1 };
        let raw_exp = ((bits >> 52) & 0x7ff) as i32;
        let frac = bits & ((1u64 << 52) - 1);
        let (m, e) = if raw_exp == 0 {
            (frac as i128, -1074)
        } else {
            ((frac | (1u64 << 52)) as i128, raw_exp - 1075)
        };
        Some(Self::new(sign * m, e))
    }

    /// Exact value as a rational; requires the exponent to be representable.
    pub fn to_rational(self) -> Rational {
        if self.exponent >= 0 {
            Rational::from_integer(shl_checked(self.mantissa, self.exponent as u32))
        } else {
            Rational::new(self.mantissa, shl_checked(1, (-self.exponent) as u32))
        }
    }

    /// Exact quotient `self / other` as a rational.
    pub fn ratio(self, other: Self) -> Rational {
        assert!(!other.is_zero(), "division by zero dyadic");
        let e = self.exponent - other.exponent;
        let (num, den) = if e >= 0 {
            (shl_checked(self.mantissa, e as u32), other.mantissa)
        } else {
            (self.mantissa, shl_checked(other.mantissa, (-e) as u32))
        };
        Rational::new(num, den)
    }

    /// Largest integer `<= self`.
    pub fn floor(self) -> i128 {
        if self.exponent >= 0 {
            shl_checked(self.mantissa, self.exponent as u32)
        } else {
            let sh = (-self.exponent) as u32;
            if sh >= 127 {
                if self.mantissa < 0 {
                    -1
                } else {
                    0
                }
            } else {
                self.mantissa >> sh
            }
        }
    }

    fn align(a: Self, b: Self) -> (i128, i128, i32) {
        if a.is_zero() {
            return (0, b.mantissa, b.exponent);
        }
        if b.is_zero() {
            return (a.mantissa, 0, a.exponent);
        }
        let e = a.exponent.min(b.exponent);
        (
            shl_checked(a.mantissa, (a.exponent - e) as u32),
            shl_checked(b.mantissa, (b.exponent - e) as u32),
            e,
        )
    }
}

fn shl_checked(m: i128, sh: u32) -> i128 {
    if m == 0 {
        return 0;
    }
    assert!(
        sh < 127 && m.unsigned_abs().leading_zeros() > sh + 1,
        "dyadic mantissa overflow"
    );
    m << sh
}

impl Default for Dyadic {
    fn default() -> Self {
        Self::ZERO
    }
}

impl From<i64> for Dyadic {
    fn from(v: i64) -> Self {
        Self::from_int(v)
    }
}

impl Add for Dyadic {
    type Output = Dyadic;
    fn add(self, rhs: Dyadic) -> Dyadic {
        let (a, b, e) = Dyadic::align(self, rhs);
        Dyadic::new(a.checked_add(b).expect("dyadic mantissa overflow"), e)
    }
}

impl Sub for Dyadic {
    type Output = Dyadic;
    fn sub(self, rhs: Dyadic) -> Dyadic {
        self + (-rhs)
    }
}

impl Neg for Dyadic {
    type Output = Dyadic;
    fn neg(self) -> Dyadic {
        Dyadic {
            mantissa: -self.mantissa,
            exponent: self.exponent,
        }
    }
}

impl Mul for Dyadic {
    type Output = Dyadic;
    fn mul(self, rhs: Dyadic) -> Dyadic {
        let m = self
            .mantissa
            .checked_mul(rhs.mantissa)
            .expect("dyadic mantissa overflow");
        Dyadic::new(m, self.exponent + rhs.exponent)
    }
}

impl Ord for Dyadic {
    fn cmp(&self, other: &Self) -> Ordering {
        let (a, b, _) = Dyadic::align(*self, *other);
        a.cmp(&b)
    }
}

impl PartialOrd for Dyadic {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Dyadic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}*2^{}", self.mantissa, self.exponent)
    }
}

impl FromStr for Dyadic {
    type Err = LagomError;

    /// Accepts `m*2^e` or a plain integer.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let bad = || LagomError::Parse(format!("invalid dyadic rational `{s}`"));
        match s.split_once("*2^") {
            Some((m, e)) => {
                let m: i128 = m.trim().parse().map_err(|_| bad())?;
                let e: i32 = e.trim().parse().map_err(|_| bad())?;
                Ok(Dyadic::new(m, e))
            }
            None => {
                let m: i128 = s.parse().map_err(|_| bad())?;
                Ok(Dyadic::new(m, 0))
            }
        }
    }
}

/// Convert an exact rational to `f64`.
pub fn rational_to_f64(r: &Rational) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn normalization_makes_equality_structural() {
        assert_eq!(Dyadic::new(4, -3), Dyadic::new(1, -1));
        assert_eq!(Dyadic::new(0, 7), Dyadic::ZERO);
        assert_eq!(Dyadic::new(6, 0).to_string(), "3*2^1");
    }

    #[test]
    fn parse_and_print() {
        let d: Dyadic = "5*2^-3".parse().unwrap();
        assert_eq!(d.to_f64(), 0.625);
        assert_eq!(d.to_string().parse::<Dyadic>().unwrap(), d);
        assert_eq!("12".parse::<Dyadic>().unwrap(), Dyadic::from_int(12));
        assert!("x*2^1".parse::<Dyadic>().is_err());
    }

    #[test]
    fn floor_handles_negatives() {
        assert_eq!(Dyadic::new(-3, -1).floor(), -2);
        assert_eq!(Dyadic::new(3, -1).floor(), 1);
        assert_eq!(Dyadic::new(3, 2).floor(), 12);
    }

    #[test]
    fn from_f64_is_exact() {
        for v in [0.1, -3.75, 1e-300, 12345.5, 0.0] {
            assert_eq!(Dyadic::from_f64(v).unwrap().to_f64(), v);
        }
    }

    proptest! {
        #[test]
        fn arithmetic_matches_rationals(a in -1_000_000i64..1_000_000, ea in -30i32..30,
                                       b in -1_000_000i64..1_000_000, eb in -30i32..30) {
            let x = Dyadic::new(a as i128, ea);
            let y = Dyadic::new(b as i128, eb);
            prop_assert_eq!((x + y).to_rational(), x.to_rational() + y.to_rational());
            prop_assert_eq!((x - y).to_rational(), x.to_rational() - y.to_rational());
            prop_assert_eq!((x * y).to_rational(), x.to_rational() * y.to_rational());
            prop_assert_eq!(x.cmp(&y), x.to_rational().cmp(&y.to_rational()));
            if !y.is_zero() {
                prop_assert_eq!(x.ratio(y), x.to_rational() / y.to_rational());
            }
        }
    }
}
