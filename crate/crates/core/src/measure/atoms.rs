use std::collections::BTreeMap;
use std::io::Write;

use num_rational::BigRational;
use num_traits::{One, Zero};

use super::{validate, MeasureSpec};
use crate::error::{Error, Result};
use crate::ratio::{format_decimal, format_rational};
use crate::xprec::ratio_to_f64;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Atom {
    pub location: BigRational,
    pub weight: BigRational,
    /// Scaling level `j` at which the atom first appears.
    pub level: usize,
}

/// Finite truncation of the measure: every atom of scaling levels `0..=J`
/// plus the exact mass `ρ^{J+1}` left out.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AtomList {
    atoms: Vec<Atom>,
    depth: usize,
    tail_mass: BigRational,
}

impl AtomList {
    /// Builds a list directly from `(location, weight)` pairs, e.g. for
    /// hand-made measures in tests. Locations must be distinct; the list is
    /// sorted and all atoms are tagged as level 0.
    pub fn from_pairs(pairs: Vec<(BigRational, BigRational)>, tail_mass: BigRational) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (loc, w) in pairs {
            if loc < BigRational::zero() || loc > BigRational::one() {
                return Err(Error::OutOfRange(format!("atom location {} outside [0, 1]", format_rational(&loc))));
            }
            if w <= BigRational::zero() {
                return Err(Error::OutOfRange(format!("atom weight {} is not positive", format_rational(&w))));
            }
            if map.insert(loc.clone(), w).is_some() {
                return Err(Error::OutOfRange(format!("duplicate atom at {}", format_rational(&loc))));
            }
        }
        let atoms = map.into_iter().map(|(location, weight)| Atom { location, weight, level: 0 }).collect();
        Ok(AtomList { atoms, depth: 0, tail_mass })
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Atom> {
        self.atoms.iter()
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn tail_mass(&self) -> &BigRational {
        &self.tail_mass
    }

    pub fn total_weight(&self) -> BigRational {
        self.atoms.iter().fold(BigRational::zero(), |acc, a| acc + &a.weight)
    }

    pub fn locations_f64(&self) -> Vec<f64> {
        self.atoms.iter().map(|a| ratio_to_f64(&a.location)).collect()
    }

    pub fn weights_f64(&self) -> Vec<f64> {
        self.atoms.iter().map(|a| ratio_to_f64(&a.weight)).collect()
    }

    /// `Σ_{x_i < t} w_i`, exactly.
    pub fn cdf(&self, t: &BigRational) -> BigRational {
        self.atoms
            .iter()
            .take_while(|a| &a.location < t)
            .fold(BigRational::zero(), |acc, a| acc + &a.weight)
    }

    /// CSV with header `index,location,weight,level,location_exact,weight_exact`.
    /// Decimal columns carry 40 significant digits; the exact columns are
    /// reduced fractions.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "index,location,weight,level,location_exact,weight_exact")?;
        for (i, a) in self.atoms.iter().enumerate() {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                i + 1,
                format_decimal(&a.location, 40),
                format_decimal(&a.weight, 40),
                a.level,
                format_rational(&a.location),
                format_rational(&a.weight)
            )?;
        }
        Ok(())
    }
}

/// Jumps of the fixed point at the partition points `α₂ … α_n`, computed
/// from the one-sided limits of the similarity operator's image. Does not
/// require the spec to be valid (a non-positive jump is itself a violation).
pub fn level0_jumps(spec: &MeasureSpec) -> Vec<(BigRational, BigRational)> {
    let alpha = spec.alpha();
    let beta = spec.beta();
    let m = spec.m();
    let d = spec.d();
    let e = if spec.reversed() { BigRational::one() } else { BigRational::zero() };
    (2..=spec.n())
        .map(|k| {
            let jump = if k == m {
                &beta[m - 1] + d * &e - &beta[m - 2]
            } else if k == m + 1 {
                &beta[m] - (&beta[m - 1] + d * (BigRational::one() - &e))
            } else {
                &beta[k - 1] - &beta[k - 2]
            };
            (alpha[k - 1].clone(), jump)
        })
        .collect()
}

/// Enumerates the atoms of scaling levels `0..=depth`.
pub fn atoms(spec: &MeasureSpec, depth: usize) -> Result<AtomList> {
    let report = validate(spec);
    if !report.valid {
        return Err(Error::InvalidMeasure(report.to_string().trim_end().to_string()));
    }
    let rho = spec.rho();
    let mut merged: BTreeMap<BigRational, (BigRational, usize)> = BTreeMap::new();
    let mut level: Vec<(BigRational, BigRational)> = level0_jumps(spec);
    for j in 0..=depth {
        for (loc, w) in &level {
            merged
                .entry(loc.clone())
                .and_modify(|(acc, _)| *acc += w)
                .or_insert_with(|| (w.clone(), j));
        }
        if j < depth {
            level = level.iter().map(|(loc, w)| (spec.contract(loc), w * &rho)).collect();
        }
    }
    let atoms = merged
        .into_iter()
        .map(|(location, (weight, level))| Atom { location, weight, level })
        .collect();
    let tail_mass = num_traits::pow(rho, depth + 1);
    Ok(AtomList { atoms, depth, tail_mass })
}

/// Exact truncated primitive `f(t) = Σ_{x_i < t} w_i` at the given depth.
pub fn cdf_exact(spec: &MeasureSpec, t: &BigRational, depth: usize) -> Result<BigRational> {
    if t < &BigRational::zero() || t > &BigRational::one() {
        return Err(Error::OutOfRange(format!("t = {} outside [0, 1]", format_rational(t))));
    }
    Ok(atoms(spec, depth)?.cdf(t))
}

/// Floating-point front end to [`cdf_exact`]; `t` is converted exactly.
pub fn cdf(spec: &MeasureSpec, t: f64, depth: usize) -> Result<f64> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::OutOfRange(format!("t = {t} outside [0, 1]")));
    }
    let t = BigRational::from_float(t).expect("finite");
    Ok(ratio_to_f64(&cdf_exact(spec, &t, depth)?))
}
