//! Exact rational parsing and formatting for spec files.
//!
//! Accepted forms: integers (`"3"`), fractions (`"1/3"`, `"-2/7"`) and
//! decimals with an optional exponent (`"0.3"`, `"1.5e-3"`). Decimal input is
//! converted exactly, never through binary floating point.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde_json::Value;

use crate::error::{Error, Result};

pub fn parse_rational(text: &str) -> Result<BigRational> {
    let s = text.trim();
    if s.is_empty() {
        return Err(Error::Parse("empty number".into()));
    }
    if let Some((n, d)) = s.split_once('/') {
        let n: BigInt = n
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("bad numerator in {s:?}")))?;
        let d: BigInt = d
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("bad denominator in {s:?}")))?;
        if d.is_zero() {
            return Err(Error::Parse(format!("zero denominator in {s:?}")));
        }
        return Ok(BigRational::new(n, d));
    }
    parse_decimal(s)
}

fn parse_decimal(s: &str) -> Result<BigRational> {
    let bad = || Error::Parse(format!("not a number: {s:?}"));
    let (mantissa, exponent) = match s.find(['e', 'E']) {
        Some(i) => {
            let e: i64 = s[i + 1..].parse().map_err(|_| bad())?;
            (&s[..i], e)
        }
        None => (s, 0),
    };
    let (neg, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(bad());
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return Err(bad());
    }
    let all: String = format!("{int_part}{frac_part}");
    let mut num: BigInt = if all.is_empty() { BigInt::zero() } else { all.parse().map_err(|_| bad())? };
    if neg {
        num = -num;
    }
    let scale = exponent - frac_part.len() as i64;
    if scale.unsigned_abs() > 10_000 {
        return Err(Error::Parse(format!("exponent out of range in {s:?}")));
    }
    let ten = BigInt::from(10);
    let p = num_traits::pow(ten, scale.unsigned_abs() as usize);
    Ok(if scale >= 0 {
        BigRational::from_integer(num * p)
    } else {
        BigRational::new(num, p)
    })
}

/// Reads a rational from a JSON number (using its literal text) or string.
pub fn rational_from_json(v: &Value) -> Result<BigRational> {
    match v {
        Value::Number(n) => parse_rational(&n.to_string()),
        Value::String(s) => parse_rational(s),
        other => Err(Error::Parse(format!("expected number or rational string, got {other}"))),
    }
}

/// Canonical text form: `"p"` for integers, `"p/q"` otherwise.
pub fn format_rational(r: &BigRational) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Decimal rendering: the exact expansion when it terminates, otherwise
/// rounded to `digits` significant digits. Values below `1e-20` in magnitude
/// use scientific notation.
pub fn format_decimal(r: &BigRational, digits: usize) -> String {
    if r.is_zero() {
        return "0".into();
    }
    let digits = digits.max(1);
    let neg = r.is_negative();
    let a = r.abs();
    let ten = BigInt::from(10);
    // Decimal exponent k with 10^k <= a < 10^{k+1}.
    let mut k = a.numer().to_string().len() as i64 - a.denom().to_string().len() as i64;
    let pow10 = |e: i64| -> BigRational {
        let p = num_traits::pow(ten.clone(), e.unsigned_abs() as usize);
        if e >= 0 {
            BigRational::from_integer(p)
        } else {
            BigRational::new(BigInt::one(), p)
        }
    };
    while a < pow10(k) {
        k -= 1;
    }
    while a >= pow10(k + 1) {
        k += 1;
    }
    // Round to `digits` significant digits (half away from zero); this is
    // exact whenever the expansion terminates within that many digits.
    let shift = digits as i64 - 1 - k;
    let scaled = &a * pow10(shift);
    let half = BigRational::new(BigInt::one(), BigInt::from(2));
    let mut mant = (scaled + half).floor().to_integer();
    if mant.to_string().len() > digits {
        mant /= &ten;
        k += 1;
    }
    let mut s = mant.to_string();
    let sign = if neg { "-" } else { "" };
    if k < -20 {
        let (head, tail) = s.split_at(1);
        let tail = tail.trim_end_matches('0');
        return if tail.is_empty() {
            format!("{sign}{head}e{k}")
        } else {
            format!("{sign}{head}.{tail}e{k}")
        };
    }
    // Plain notation: mantissa digits times 10^(k - digits + 1).
    let point = k + 1; // digits before the decimal point
    if point <= 0 {
        s = format!("0.{}{}", "0".repeat((-point) as usize), s);
    } else if point as usize >= s.len() {
        s.push_str(&"0".repeat(point as usize - s.len()));
    } else {
        s.insert(point as usize, '.');
    }
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    format!("{sign}{s}")
}
