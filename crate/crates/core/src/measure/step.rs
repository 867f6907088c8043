use num_rational::BigRational;
use num_traits::{One, Zero};

use super::{AtomList, MeasureSpec};
use crate::error::{Error, Result};

/// A left-continuous step function on `[0, 1]`.
///
/// `values[i]` is the constant on the open interval
/// `]breakpoints[i], breakpoints[i + 1][`; at an interior breakpoint the
/// function takes the value from its left, and at `0` the first value.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PiecewiseConstant {
    breakpoints: Vec<BigRational>,
    values: Vec<BigRational>,
}

impl PiecewiseConstant {
    pub fn new(breakpoints: Vec<BigRational>, values: Vec<BigRational>) -> Result<Self> {
        let bad = |msg: &str| Err(Error::OutOfRange(format!("step function: {msg}")));
        if breakpoints.len() < 2 {
            return bad("need at least the breakpoints 0 and 1");
        }
        if !breakpoints[0].is_zero() || !breakpoints[breakpoints.len() - 1].is_one() {
            return bad("breakpoints must start at 0 and end at 1");
        }
        if breakpoints.windows(2).any(|w| w[0] >= w[1]) {
            return bad("breakpoints must be strictly increasing");
        }
        if values.len() + 1 != breakpoints.len() {
            return bad("need exactly one value per interval");
        }
        Ok(PiecewiseConstant { breakpoints, values })
    }

    pub fn constant(v: BigRational) -> Self {
        PiecewiseConstant {
            breakpoints: vec![BigRational::zero(), BigRational::one()],
            values: vec![v],
        }
    }

    pub fn zero() -> Self {
        Self::constant(BigRational::zero())
    }

    /// The truncated primitive `t ↦ Σ_{x_i < t} w_i` of an atom list.
    pub fn from_atoms(atoms: &AtomList) -> Self {
        let mut breakpoints = vec![BigRational::zero()];
        let mut values = vec![BigRational::zero()];
        let mut acc = BigRational::zero();
        for a in atoms.iter() {
            acc += &a.weight;
            breakpoints.push(a.location.clone());
            values.push(acc.clone());
        }
        breakpoints.push(BigRational::one());
        PiecewiseConstant { breakpoints, values }
    }

    pub fn breakpoints(&self) -> &[BigRational] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[BigRational] {
        &self.values
    }

    /// Value at `t ∈ [0, 1]` under the left-continuous convention.
    pub fn eval(&self, t: &BigRational) -> BigRational {
        // Index of the first breakpoint >= t; the interval to its left owns t.
        let i = self.breakpoints.partition_point(|b| b < t);
        self.values[i.saturating_sub(1).min(self.values.len() - 1)].clone()
    }

    /// `sup_t |f(t) − g(t)|`. Both functions are constant between
    /// consecutive points of the merged breakpoint set and left-continuous,
    /// so probing each merged open interval is exhaustive.
    pub fn sup_distance(&self, other: &PiecewiseConstant) -> BigRational {
        let mut merged: Vec<BigRational> =
            self.breakpoints.iter().chain(other.breakpoints.iter()).cloned().collect();
        merged.sort();
        merged.dedup();
        let two = BigRational::from_integer(2.into());
        merged
            .windows(2)
            .map(|w| {
                let mid = (&w[0] + &w[1]) / &two;
                let diff = self.eval(&mid) - other.eval(&mid);
                if diff < BigRational::zero() {
                    -diff
                } else {
                    diff
                }
            })
            .max()
            .unwrap_or_else(BigRational::zero)
    }
}

/// One application of the similarity operator: the constant `β_k` on each
/// interval `k ≠ m`, and `d·f(S_m⁻¹(t)) + β_m` on the contracted interval.
pub fn apply_similarity(spec: &MeasureSpec, f: &PiecewiseConstant) -> PiecewiseConstant {
    let alpha = spec.alpha();
    let beta = spec.beta();
    let m = spec.m();
    let mut breakpoints = Vec::with_capacity(alpha.len() + f.breakpoints.len());
    let mut values = Vec::with_capacity(beta.len() + f.values.len());
    for k in 1..=spec.n() {
        breakpoints.push(alpha[k - 1].clone());
        if k != m {
            values.push(beta[k - 1].clone());
            continue;
        }
        let inner = &f.breakpoints[1..f.breakpoints.len() - 1];
        let scaled = f.values.iter().map(|v| spec.d() * v + &beta[m - 1]);
        if spec.reversed() {
            breakpoints.extend(inner.iter().rev().map(|b| spec.contract(b)));
            values.extend(scaled.rev());
        } else {
            breakpoints.extend(inner.iter().map(|b| spec.contract(b)));
            values.extend(scaled);
        }
    }
    breakpoints.push(BigRational::one());
    PiecewiseConstant { breakpoints, values }
}
