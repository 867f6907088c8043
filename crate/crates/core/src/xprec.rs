//! Extended-precision real numbers.
//!
//! A thin value type over [`astro_float::BigFloat`]. Binary operations round
//! to the larger of the two operand precisions, so a computation started at
//! `p` bits stays at `p` bits unless explicitly widened or narrowed.

use std::cell::RefCell;
use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use astro_float::{BigFloat, Consts, Radix, RoundingMode};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;

const RM: RoundingMode = RoundingMode::ToEven;

thread_local! {
    static CONSTS: RefCell<Consts> = RefCell::new(Consts::new().expect("constant cache"));
}

fn with_consts<T>(f: impl FnOnce(&mut Consts) -> T) -> T {
    CONSTS.with(|c| f(&mut c.borrow_mut()))
}

#[derive(Clone)]
pub struct XReal(BigFloat);

impl XReal {
    pub fn zero(prec: usize) -> Self {
        XReal(BigFloat::from_f64(0.0, prec))
    }

    pub fn one(prec: usize) -> Self {
        XReal(BigFloat::from_f64(1.0, prec))
    }

    /// Exact conversion: every finite `f64` is representable at `prec >= 53`.
    pub fn from_f64(v: f64, prec: usize) -> Self {
        XReal(BigFloat::from_f64(v, prec.max(64)))
    }

    pub fn from_i64(v: i64, prec: usize) -> Self {
        XReal(BigFloat::from_i64(v, prec))
    }

    fn from_bigint(v: &BigInt, prec: usize) -> Self {
        // Parse at a precision wide enough to hold the integer exactly.
        let bits = v.bits() as usize + 64;
        let s = v.to_string();
        let wide = with_consts(|cc| BigFloat::parse(&s, Radix::Dec, bits.max(prec), RM, cc));
        XReal(wide)
    }

    /// Correctly rounded (to within one rounding of the final division)
    /// conversion of an exact rational.
    pub fn from_ratio(r: &BigRational, prec: usize) -> Self {
        let n = Self::from_bigint(r.numer(), prec);
        let d = Self::from_bigint(r.denom(), prec);
        XReal(n.0.div(&d.0, prec, RM))
    }

    /// Parses a decimal string such as `"-1.25e-3"`.
    pub fn parse(s: &str, prec: usize) -> Option<Self> {
        let v = with_consts(|cc| BigFloat::parse(s.trim(), Radix::Dec, prec, RM, cc));
        if v.is_nan() || v.is_inf() {
            None
        } else {
            Some(XReal(v))
        }
    }

    pub fn prec(&self) -> usize {
        self.0.mantissa_max_bit_len().unwrap_or(64)
    }

    /// Rounds to `prec` bits.
    pub fn with_prec(&self, prec: usize) -> Self {
        let mut v = self.0.clone();
        // Setting precision only fails for NaN/Inf, which never leave this module.
        let _ = v.set_precision(prec, RM);
        XReal(v)
    }

    pub fn to_f64(&self) -> f64 {
        if self.0.is_zero() {
            return 0.0;
        }
        self.to_string().parse::<f64>().unwrap_or(f64::NAN)
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_negative(&self) -> bool {
        !self.0.is_zero() && self.0.is_negative()
    }

    pub fn is_positive(&self) -> bool {
        !self.0.is_zero() && self.0.is_positive()
    }

    pub fn abs(&self) -> Self {
        XReal(self.0.abs())
    }

    pub fn sqrt(&self) -> Self {
        XReal(self.0.sqrt(self.prec(), RM))
    }

    pub fn exp(&self) -> Self {
        let p = self.prec();
        XReal(with_consts(|cc| self.0.exp(p, RM, cc)))
    }

    pub fn ln(&self) -> Self {
        let p = self.prec();
        XReal(with_consts(|cc| self.0.ln(p, RM, cc)))
    }

    pub fn powi(&self, n: u32) -> Self {
        if n == 0 {
            return XReal::one(self.prec());
        }
        XReal(self.0.powi(n as usize, self.prec(), RM))
    }

    pub fn recip(&self) -> Self {
        XReal(self.0.reciprocal(self.prec(), RM))
    }

    /// Multiplies by `2^k`.
    pub fn ldexp(&self, k: i32) -> Self {
        let two = BigFloat::from_f64(2.0, 64);
        let f = if k >= 0 {
            two.powi(k as usize, 64, RM)
        } else {
            two.powi((-k) as usize, 64, RM).reciprocal(64, RM)
        };
        XReal(self.0.mul(&f, self.prec(), RM))
    }

    pub fn max<'a>(&'a self, other: &'a Self) -> &'a Self {
        if other > self {
            other
        } else {
            self
        }
    }

    /// Full-precision decimal rendering; parses back to the same value at the
    /// same precision.
    pub fn to_decimal(&self) -> String {
        self.to_string()
    }
}

fn prec2(a: &XReal, b: &XReal) -> usize {
    a.prec().max(b.prec())
}

impl<'a> Add<&'a XReal> for &'a XReal {
    type Output = XReal;
    fn add(self, rhs: &XReal) -> XReal {
        XReal(self.0.add(&rhs.0, prec2(self, rhs), RM))
    }
}

impl<'a> Sub<&'a XReal> for &'a XReal {
    type Output = XReal;
    fn sub(self, rhs: &XReal) -> XReal {
        XReal(self.0.sub(&rhs.0, prec2(self, rhs), RM))
    }
}

impl<'a> Mul<&'a XReal> for &'a XReal {
    type Output = XReal;
    fn mul(self, rhs: &XReal) -> XReal {
        XReal(self.0.mul(&rhs.0, prec2(self, rhs), RM))
    }
}

impl<'a> Div<&'a XReal> for &'a XReal {
    type Output = XReal;
    fn div(self, rhs: &XReal) -> XReal {
        XReal(self.0.div(&rhs.0, prec2(self, rhs), RM))
    }
}

impl Add for XReal {
    type Output = XReal;
    fn add(self, rhs: XReal) -> XReal {
        &self + &rhs
    }
}

impl Sub for XReal {
    type Output = XReal;
    fn sub(self, rhs: XReal) -> XReal {
        &self - &rhs
    }
}

impl Mul for XReal {
    type Output = XReal;
    fn mul(self, rhs: XReal) -> XReal {
        &self * &rhs
    }
}

impl Div for XReal {
    type Output = XReal;
    fn div(self, rhs: XReal) -> XReal {
        &self / &rhs
    }
}

impl Neg for XReal {
    type Output = XReal;
    fn neg(self) -> XReal {
        XReal(self.0.neg())
    }
}

impl Neg for &XReal {
    type Output = XReal;
    fn neg(self) -> XReal {
        XReal(self.0.clone().neg())
    }
}

impl PartialEq for XReal {
    fn eq(&self, other: &Self) -> bool {
        self.0.cmp(&other.0) == Some(0)
    }
}

impl PartialOrd for XReal {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        self.0.cmp(&other.0).map(|c| c.cmp(&0))
    }
}

impl fmt::Display for XReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_zero() {
            return write!(f, "0");
        }
        write!(f, "{}", self.0)
    }
}

impl fmt::Debug for XReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "XReal({})", self)
    }
}

/// Exact conversion of a finite `f64` to a rational.
pub fn f64_to_ratio(v: f64) -> Option<BigRational> {
    BigRational::from_float(v)
}

/// Nearest `f64` to an exact rational.
pub fn ratio_to_f64(r: &BigRational) -> f64 {
    if r.is_zero() {
        return 0.0;
    }
    XReal::from_ratio(r, 128).to_f64()
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;

    #[test]
    fn rational_conversion_is_exact_to_working_precision() {
        let third = BigRational::new(BigInt::from(1), BigInt::from(3));
        let x = XReal::from_ratio(&third, 256);
        let back = &x * &XReal::from_i64(3, 256);
        let err = (&back - &XReal::one(256)).abs();
        assert!(err < XReal::one(256).ldexp(-250));
    }

    #[test]
    fn decimal_round_trip_preserves_value() {
        let x = XReal::from_i64(2, 384).sqrt();
        let y = XReal::parse(&x.to_decimal(), 384).unwrap();
        let rel = ((&x - &y) / x.clone()).abs();
        assert!(rel < XReal::one(384).ldexp(-370), "{rel}");
    }

    #[test]
    fn exp_and_ln_agree_with_f64() {
        let x = XReal::from_f64(0.75, 192);
        assert!((x.exp().to_f64() - 0.75f64.exp()).abs() < 1e-15);
        assert!((x.ln().to_f64() - 0.75f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn ordering_and_sign() {
        let a = XReal::from_f64(-1.5, 128);
        let b = XReal::from_f64(2.0, 128);
        assert!(a < b);
        assert!(a.is_negative() && b.is_positive());
        assert_eq!(a.abs().to_f64(), 1.5);
        assert_eq!(b.ldexp(-3).to_f64(), 0.25);
    }
}
