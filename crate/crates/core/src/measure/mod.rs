//! Degenerate self-similar probability measures on `[0, 1]`.
//!
//! A measure is described by a partition `0 = α₁ < … < α_{n+1} = 1`, levels
//! `β₁ … β_n`, and a single nonzero contraction weight `d` attached to the
//! interval with (1-based) index `m`, optionally orientation-reversed. The
//! primitive of the measure is the unique fixed point of the similarity
//! operator; it is piecewise constant and its jumps are the atoms of the
//! measure, accumulating at one singular point.
//!
//! All arithmetic here is exact (rational).

mod atoms;
mod step;

pub use atoms::{atoms, cdf, cdf_exact, level0_jumps, Atom, AtomList};
pub use step::{apply_similarity, PiecewiseConstant};

use std::fmt;

use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::ratio::{format_rational, parse_rational, rational_from_json};

/// Default number of scaling levels enumerated when truncating the measure.
pub const DEFAULT_DEPTH: usize = 40;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MeasureSpec {
    alpha: Vec<BigRational>,
    beta: Vec<BigRational>,
    d: BigRational,
    m: usize,
    reversed: bool,
}

impl MeasureSpec {
    /// Builds a spec, checking the structural invariants. `m` is 1-based and
    /// `reversed` is the orientation bit `e`.
    pub fn new(
        alpha: Vec<BigRational>,
        beta: Vec<BigRational>,
        d: BigRational,
        m: usize,
        reversed: bool,
    ) -> Result<Self> {
        let bad = |msg: String| Err(Error::MalformedMeasure(msg));
        if alpha.len() < 3 {
            return bad(format!("need at least 3 partition points (n >= 2), got {}", alpha.len()));
        }
        if !alpha[0].is_zero() {
            return bad("partition must start at 0".into());
        }
        if !alpha[alpha.len() - 1].is_one() {
            return bad("partition must end at 1".into());
        }
        if let Some(w) = alpha.windows(2).position(|w| w[0] >= w[1]) {
            return bad(format!("partition not strictly increasing at index {}", w + 1));
        }
        let n = alpha.len() - 1;
        if beta.len() != n {
            return bad(format!("beta has {} entries, expected n = {n}", beta.len()));
        }
        if m == 0 || m > n {
            return bad(format!("m = {m} outside 1..={n}"));
        }
        if d.abs() >= BigRational::one() {
            return bad(format!("|d| = {} is not < 1", format_rational(&d.abs())));
        }
        Ok(MeasureSpec { alpha, beta, d, m, reversed })
    }

    /// Convenience constructor from `f64` inputs (converted exactly).
    pub fn from_f64(alpha: &[f64], beta: &[f64], d: f64, m: usize, reversed: bool) -> Result<Self> {
        let conv = |v: f64| {
            BigRational::from_float(v).ok_or_else(|| Error::MalformedMeasure(format!("non-finite value {v}")))
        };
        MeasureSpec::new(
            alpha.iter().map(|&v| conv(v)).collect::<Result<_>>()?,
            beta.iter().map(|&v| conv(v)).collect::<Result<_>>()?,
            conv(d)?,
            m,
            reversed,
        )
    }

    /// Builds a spec from rational strings (`"1/3"`, `"0.3"`, ...).
    pub fn from_strs(alpha: &[&str], beta: &[&str], d: &str, m: usize, reversed: bool) -> Result<Self> {
        MeasureSpec::new(
            alpha.iter().map(|s| parse_rational(s)).collect::<Result<_>>()?,
            beta.iter().map(|s| parse_rational(s)).collect::<Result<_>>()?,
            parse_rational(d)?,
            m,
            reversed,
        )
    }

    /// The measure drawn in the classic three-interval example:
    /// `α = (0, 0.3, 0.8, 1)`, `β = (0, 1/3, 1)`, `m = 2`, `d = 1/3`, `e = 0`.
    pub fn figure() -> Self {
        MeasureSpec::from_strs(&["0", "0.3", "0.8", "1"], &["0", "1/3", "1"], "1/3", 2, false)
            .expect("figure spec is well formed")
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let v: Value = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Self::from_json(&v)
    }

    pub fn from_json(v: &Value) -> Result<Self> {
        let field = |k: &str| v.get(k).ok_or_else(|| Error::Parse(format!("missing key {k:?}")));
        let list = |k: &str| -> Result<Vec<BigRational>> {
            field(k)?
                .as_array()
                .ok_or_else(|| Error::Parse(format!("{k:?} must be an array")))?
                .iter()
                .map(rational_from_json)
                .collect()
        };
        let alpha = list("alpha")?;
        let beta = list("beta")?;
        let d = rational_from_json(field("d")?)?;
        let m = field("m")?
            .as_u64()
            .ok_or_else(|| Error::Parse("\"m\" must be a positive integer".into()))? as usize;
        let reversed = match field("e")?.as_u64() {
            Some(0) => false,
            Some(1) => true,
            _ => return Err(Error::Parse("\"e\" must be 0 or 1".into())),
        };
        MeasureSpec::new(alpha, beta, d, m, reversed)
    }

    /// Canonical JSON: rationals as reduced `"p/q"` strings.
    pub fn to_json(&self) -> Value {
        json!({
            "alpha": self.alpha.iter().map(format_rational).collect::<Vec<_>>(),
            "beta": self.beta.iter().map(format_rational).collect::<Vec<_>>(),
            "d": format_rational(&self.d),
            "m": self.m,
            "e": u8::from(self.reversed),
        })
    }

    /// SHA-256 of the canonical JSON encoding, hex encoded.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().to_string().as_bytes()))
    }

    /// Number of partition intervals `n`.
    pub fn n(&self) -> usize {
        self.alpha.len() - 1
    }

    pub fn alpha(&self) -> &[BigRational] {
        &self.alpha
    }

    pub fn beta(&self) -> &[BigRational] {
        &self.beta
    }

    pub fn d(&self) -> &BigRational {
        &self.d
    }

    /// 1-based index of the interval carrying the contraction.
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn reversed(&self) -> bool {
        self.reversed
    }

    /// Length `a_k` of interval `k` (1-based).
    pub fn interval_len(&self, k: usize) -> BigRational {
        &self.alpha[k] - &self.alpha[k - 1]
    }

    /// Length of the contracted interval, `a_m`.
    pub fn scale(&self) -> BigRational {
        self.interval_len(self.m)
    }

    /// Mass ratio between consecutive scaling levels, `ρ = (-1)^e · d`.
    pub fn rho(&self) -> BigRational {
        if self.reversed {
            -self.d.clone()
        } else {
            self.d.clone()
        }
    }

    /// The affine map `S_m` from `[0, 1]` onto the contracted interval.
    pub fn contract(&self, t: &BigRational) -> BigRational {
        let a = self.scale();
        if self.reversed {
            &self.alpha[self.m] - a * t
        } else {
            a * t + &self.alpha[self.m - 1]
        }
    }

    /// Inverse of [`contract`](Self::contract).
    pub fn expand(&self, t: &BigRational) -> BigRational {
        let a = self.scale();
        if self.reversed {
            (&self.alpha[self.m] - t) / a
        } else {
            (t - &self.alpha[self.m - 1]) / a
        }
    }
}

impl fmt::Display for MeasureSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_json())
    }
}

/// Which probability-measure condition a violation refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Criterion {
    /// `f(0) = 0` and `f(1) = 1`.
    Boundary = 1,
    /// `0 < (-1)^e d < 1`.
    Contraction = 2,
    /// Levels strictly increasing.
    Monotone = 3,
    /// Monotonicity across the ends of the contracted interval.
    Crossing = 4,
    /// Every partition point carries a strictly positive jump.
    Nondegeneracy = 5,
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Criterion::Nondegeneracy => write!(f, "nondegeneracy"),
            c => write!(f, "criterion {}", *c as u8),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub criterion: Criterion,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ValidationReport {
    pub valid: bool,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    fn from_violations(mut violations: Vec<Violation>) -> Self {
        violations.sort_by_key(|v| v.criterion);
        ValidationReport { valid: violations.is_empty(), violations }
    }

    pub fn has(&self, c: Criterion) -> bool {
        self.violations.iter().any(|v| v.criterion == c)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.valid {
            return write!(f, "valid");
        }
        writeln!(f, "invalid")?;
        for v in &self.violations {
            writeln!(f, "{}: {}", v.criterion, v.detail)?;
        }
        Ok(())
    }
}

/// Checks whether the spec defines a probability measure, with exact
/// equality tests.
pub fn validate(spec: &MeasureSpec) -> ValidationReport {
    validate_with_tolerance(spec, None)
}

/// As [`validate`], but the two equalities of criterion 1 (and the
/// zero-jump test) accept an absolute slack `tol` when given. Useful for specs
/// built from binary floating-point inputs.
pub fn validate_with_tolerance(spec: &MeasureSpec, tol: Option<f64>) -> ValidationReport {
    let tol = tol
        .and_then(BigRational::from_float)
        .map(|t| t.abs())
        .unwrap_or_else(BigRational::zero);
    let n = spec.n();
    let m = spec.m;
    let beta = &spec.beta;
    let one = BigRational::one();
    let zero = BigRational::zero();
    let e = if spec.reversed { one.clone() } else { zero.clone() };
    let d_at = |k: usize| if k == m { spec.d.clone() } else { zero.clone() };
    let e_at = |k: usize| if k == m { e.clone() } else { zero.clone() };
    let mut out = Vec::new();
    let mut push = |criterion, detail: String| out.push(Violation { criterion, detail });

    // 1: d₁e₁ + β₁ = 0 and d_n(1 − e_n) + β_n = 1
    let left = d_at(1) * e_at(1) + &beta[0];
    if (&left - &zero).abs() > tol {
        push(Criterion::Boundary, format!("d₁e₁ + β₁ = {} ≠ 0", format_rational(&left)));
    }
    let right = d_at(n) * (&one - e_at(n)) + &beta[n - 1];
    if (&right - &one).abs() > tol {
        push(Criterion::Boundary, format!("d_n(1 − e_n) + β_n = {} ≠ 1", format_rational(&right)));
    }

    // 2: 0 < ρ < 1
    let rho = spec.rho();
    if !(rho > zero && rho < one) {
        push(Criterion::Contraction, format!("(-1)^e·d = {} not in (0, 1)", format_rational(&rho)));
    }

    // 3: strictly increasing levels
    for k in 0..n - 1 {
        if beta[k] >= beta[k + 1] {
            push(
                Criterion::Monotone,
                format!(
                    "β_{} = {} is not < β_{} = {}",
                    k + 1,
                    format_rational(&beta[k]),
                    k + 2,
                    format_rational(&beta[k + 1])
                ),
            );
        }
    }

    // 4: β_{m−1} < d·β_n + β_m < β_{m+1}, one-sided at the ends
    let c = &spec.d * &beta[n - 1] + &beta[m - 1];
    if m > 1 && beta[m - 2] >= c {
        push(
            Criterion::Crossing,
            format!("β_{} = {} is not < d·β_n + β_m = {}", m - 1, format_rational(&beta[m - 2]), format_rational(&c)),
        );
    }
    if m < n && c >= beta[m] {
        push(
            Criterion::Crossing,
            format!("d·β_n + β_m = {} is not < β_{} = {}", format_rational(&c), m + 1, format_rational(&beta[m])),
        );
    }

    for (k, (loc, jump)) in level0_jumps(spec).into_iter().enumerate() {
        if jump <= tol {
            push(
                Criterion::Nondegeneracy,
                format!("jump {} at α_{} = {} is not positive", format_rational(&jump), k + 2, format_rational(&loc)),
            );
        }
    }

    ValidationReport::from_violations(out)
}

/// The point where the atoms accumulate:
/// `α_{m+e} / (1 − (−1)^e a_m)`.
pub fn singular_point(spec: &MeasureSpec) -> BigRational {
    let a = spec.scale();
    let e = usize::from(spec.reversed);
    let numer = spec.alpha[spec.m + e - 1].clone();
    let denom = if spec.reversed { BigRational::one() + a } else { BigRational::one() - a };
    numer / denom
}

#[cfg(test)]
pub(crate) fn ratio(n: i64, d: i64) -> BigRational {
    BigRational::new(n.into(), d.into())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn figure_with(beta: &[&str], d: &str, reversed: bool) -> MeasureSpec {
        MeasureSpec::from_strs(&["0", "0.3", "0.8", "1"], beta, d, 2, reversed).unwrap()
    }

    #[test]
    fn figure_is_valid() {
        let r = validate(&MeasureSpec::figure());
        assert!(r.valid, "{r}");
        assert!(r.violations.is_empty());
    }

    #[test]
    fn flat_levels_fail_monotonicity() {
        let r = validate(&figure_with(&["0", "0", "1"], "1/3", false));
        assert!(!r.valid);
        assert!(r.has(Criterion::Monotone));
    }

    #[test]
    fn negative_weight_without_reversal_fails_contraction() {
        let r = validate(&figure_with(&["0", "1/3", "1"], "-1/3", false));
        assert!(r.has(Criterion::Contraction));
    }

    #[test]
    fn mirrored_figure_is_valid() {
        let r = validate(&figure_with(&["0", "2/3", "1"], "-1/3", true));
        assert!(r.valid, "{r}");
    }

    #[test]
    fn boundary_violation_is_reported() {
        let r = validate(&figure_with(&["0", "1/3", "0.9"], "1/3", false));
        assert!(r.has(Criterion::Boundary));
    }

    #[test]
    fn crossing_violation_is_reported() {
        // d + β₂ = 1 hits β₃ exactly: the jump at 0.8 vanishes.
        let r = validate(&figure_with(&["0", "2/3", "1"], "1/3", false));
        assert!(r.has(Criterion::Crossing));
        assert!(r.has(Criterion::Nondegeneracy));
    }

    #[test]
    fn structural_errors_are_not_violations() {
        let bad_alpha = MeasureSpec::from_strs(&["0", "0.8", "0.3", "1"], &["0", "1/3", "1"], "1/3", 2, false);
        assert!(matches!(bad_alpha, Err(Error::MalformedMeasure(_))));
        let bad_d = MeasureSpec::from_strs(&["0", "0.3", "0.8", "1"], &["0", "1/3", "1"], "1", 2, false);
        assert!(matches!(bad_d, Err(Error::MalformedMeasure(_))));
        let short = MeasureSpec::from_strs(&["0", "1"], &["0"], "1/3", 1, false);
        assert!(matches!(short, Err(Error::MalformedMeasure(_))));
    }

    #[test]
    fn singular_point_values() {
        assert_eq!(singular_point(&MeasureSpec::figure()), ratio(3, 5));
        let mirrored = figure_with(&["0", "2/3", "1"], "-1/3", true);
        assert_eq!(singular_point(&mirrored), ratio(8, 15));
        let first = MeasureSpec::from_strs(&["0", "0.4", "1"], &["0", "1"], "1/2", 1, false).unwrap();
        assert_eq!(singular_point(&first), BigRational::zero());
    }

    #[test]
    fn tolerance_accepts_float_inputs() {
        let spec = MeasureSpec::from_f64(&[0.0, 0.3, 0.8, 1.0], &[0.0, 1.0 / 3.0, 1.0], 1.0 / 3.0, 2, false).unwrap();
        assert!(validate_with_tolerance(&spec, Some(1e-12)).valid);
    }

    #[test]
    fn json_round_trip_and_digest() {
        let text = r#"{"alpha": [0, 0.3, "4/5", 1], "beta": [0, "1/3", 1], "d": "1/3", "m": 2, "e": 0}"#;
        let spec = MeasureSpec::from_json_str(text).unwrap();
        assert_eq!(spec, MeasureSpec::figure());
        let again = MeasureSpec::from_json(&spec.to_json()).unwrap();
        assert_eq!(again.digest(), spec.digest());
        assert!(MeasureSpec::from_json_str(r#"{"alpha": [0, 1]}"#).is_err());
    }
}
