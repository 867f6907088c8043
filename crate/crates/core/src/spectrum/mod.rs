//! Eigenvalues of the covariance operator with respect to an atomic measure.
//!
//! For `μ = Σ w_i δ_{t_i}` the operator `y ↦ ∫ G(·, s) y(s) μ(ds)` has the
//! same nonzero eigenvalues as the symmetric matrix `√(w_i w_j)·G(t_i, t_j)`,
//! so the spectrum of a truncated self-similar measure is computed exactly
//! up to the truncation itself, whose effect is bounded by the tail mass.

mod fit;
mod jacobi;

pub use fit::{compare_asymptotics, default_window, fit_counting_slope, least_squares, SlopeFit, MIN_FIT_POINTS};
pub use jacobi::MAX_SWEEPS;

use std::io::Write;

use num_traits::{One, ToPrimitive};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::kernel::{symbolic_kernel, KernelSpec};
use crate::measure::{atoms, AtomList, MeasureSpec};
use crate::xprec::{ratio_to_f64, XReal};

/// Default working precision for eigenvalue computations.
pub const DEFAULT_PRECISION_BITS: usize = 384;
/// Extra bits carried while assembling matrix entries.
pub const GUARD_BITS: usize = 64;
/// Safety factor in the truncation trust bound.
pub const TRUST_FACTOR: f64 = 4.0;
/// Grid size used to bound `max_t G(t, t)`.
const DIAGONAL_GRID: usize = 1001;

/// Where a matrix or spectrum came from.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Source {
    pub measure_digest: String,
    pub kernel_digest: String,
    pub depth: usize,
}

/// Truncation data attached to a Gram matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Truncation {
    /// Mass left out of the atom list.
    pub tail_mass: f64,
    /// Upper bound for `G(t, t)` on `[0, 1]`.
    pub max_diagonal: f64,
}

/// Symmetric matrix stored as its upper triangle (row by row).
#[derive(Clone, Debug)]
pub struct SymMatrix {
    order: usize,
    upper: Vec<XReal>,
    precision_bits: usize,
    source: Source,
    truncation: Option<Truncation>,
}

impl SymMatrix {
    /// Builds a matrix from `entry(i, j)`, `i ≤ j`, rounded to `precision_bits`.
    pub fn from_fn(order: usize, precision_bits: usize, mut entry: impl FnMut(usize, usize) -> XReal) -> Self {
        let mut upper = Vec::with_capacity(order * (order + 1) / 2);
        for i in 0..order {
            for j in i..order {
                upper.push(entry(i, j).with_prec(precision_bits));
            }
        }
        SymMatrix { order, upper, precision_bits, source: Source::default(), truncation: None }
    }

    /// From `f64` rows; only the upper triangle is read.
    pub fn from_rows(rows: &[Vec<f64>], precision_bits: usize) -> Self {
        Self::from_fn(rows.len(), precision_bits, |i, j| XReal::from_f64(rows[i][j], precision_bits))
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn precision_bits(&self) -> usize {
        self.precision_bits
    }

    pub fn source(&self) -> &Source {
        &self.source
    }

    pub fn truncation(&self) -> Option<&Truncation> {
        self.truncation.as_ref()
    }

    pub(crate) fn upper(&self) -> &[XReal] {
        &self.upper
    }

    pub fn get(&self, i: usize, j: usize) -> &XReal {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        &self.upper[i * self.order - i * (i + 1) / 2 + j]
    }

    pub fn to_f64_rows(&self) -> Vec<Vec<f64>> {
        (0..self.order).map(|i| (0..self.order).map(|j| self.get(i, j).to_f64()).collect()).collect()
    }

    pub fn with_measure_digest(mut self, digest: String) -> Self {
        self.source.measure_digest = digest;
        self
    }
}

/// `max_t G(t, t)` over a uniform grid and the given extra points.
fn max_diagonal(k: &KernelSpec, extra: &[f64]) -> Result<f64> {
    let poly = symbolic_kernel(k, 128)?;
    let pts: Vec<XReal> = (0..DIAGONAL_GRID)
        .map(|i| i as f64 / (DIAGONAL_GRID - 1) as f64)
        .chain(extra.iter().copied())
        .map(|t| XReal::from_f64(t, 128))
        .collect();
    let cache = poly.point_cache(&pts);
    Ok((0..pts.len()).map(|i| cache.eval_pair(&poly, i, i).to_f64()).fold(0.0, f64::max))
}

/// Weighted kernel matrix `√(w_i w_j)·G(t_i, t_j)` at `precision_bits`.
/// Entries are evaluated from the exact exponential-polynomial form of the
/// kernel with guard bits and rounded once.
pub fn gram_matrix(atoms: &AtomList, k: &KernelSpec, precision_bits: usize) -> Result<SymMatrix> {
    if atoms.is_empty() {
        return Err(Error::OutOfRange("gram matrix of an empty atom list".into()));
    }
    let wide = precision_bits + GUARD_BITS;
    let poly = symbolic_kernel(k, wide)?;
    // Atom lists are sorted by location, so (i ≤ j) ⇒ (t_i ≤ t_j), the
    // half-plane on which the symbolic form is valid.
    let pts: Vec<XReal> = atoms.iter().map(|a| XReal::from_ratio(&a.location, wide)).collect();
    let sw: Vec<XReal> = atoms.iter().map(|a| XReal::from_ratio(&a.weight, wide).sqrt()).collect();
    let cache = poly.point_cache(&pts);
    let mut m = SymMatrix::from_fn(atoms.len(), precision_bits, |i, j| {
        &(&cache.eval_pair(&poly, i, j) * &sw[i]) * &sw[j]
    });
    m.source = Source { measure_digest: String::new(), kernel_digest: k.digest(), depth: atoms.depth() };
    m.truncation = Some(Truncation {
        tail_mass: ratio_to_f64(atoms.tail_mass()),
        max_diagonal: max_diagonal(k, &atoms.locations_f64())?,
    });
    Ok(m)
}

/// Positive eigenvalues in strictly descending order, with a trust
/// threshold derived from the truncation bound.
#[derive(Clone, Debug)]
pub struct Spectrum {
    eigenvalues: Vec<XReal>,
    precision_bits: usize,
    source: Source,
    trust_threshold: f64,
    sweeps: usize,
}

impl Spectrum {
    /// Sorts descending, keeps positive values and removes exact duplicates.
    pub fn new(mut values: Vec<XReal>, precision_bits: usize, source: Source, trust_threshold: f64) -> Self {
        values.retain(XReal::is_positive);
        values.sort_by(|a, b| b.partial_cmp(a).expect("finite eigenvalues"));
        values.dedup();
        Spectrum { eigenvalues: values, precision_bits, source, trust_threshold, sweeps: 0 }
    }

    /// Spectrum from plain numbers (synthetic tests, small-ball inputs).
    pub fn from_f64(values: &[f64], trust_threshold: f64) -> Self {
        let v = values.iter().map(|&x| XReal::from_f64(x, 64)).collect();
        Spectrum::new(v, 64, Source::default(), trust_threshold)
    }

    pub fn eigenvalues(&self) -> &[XReal] {
        &self.eigenvalues
    }

    pub fn eigenvalues_f64(&self) -> Vec<f64> {
        self.eigenvalues.iter().map(XReal::to_f64).collect()
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues.first().map_or(0.0, XReal::to_f64)
    }

    pub fn precision_bits(&self) -> usize {
        self.precision_bits
    }

    pub fn source(&self) -> &Source {
        &self.source
    }

    pub fn trust_threshold(&self) -> f64 {
        self.trust_threshold
    }

    /// Jacobi sweeps used to compute the spectrum (0 if not computed here).
    pub fn sweeps(&self) -> usize {
        self.sweeps
    }

    /// Number of leading eigenvalues at or above the trust threshold.
    pub fn trusted_len(&self) -> usize {
        self.eigenvalues.iter().take_while(|l| l.to_f64() >= self.trust_threshold).count()
    }

    pub fn trusted(&self) -> &[XReal] {
        &self.eigenvalues[..self.trusted_len()]
    }

    pub fn untrusted(&self) -> &[XReal] {
        &self.eigenvalues[self.trusted_len()..]
    }

    /// CSV with header `index,lambda` (1-based index, full-precision decimals).
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "index,lambda")?;
        for (i, l) in self.eigenvalues.iter().enumerate() {
            writeln!(w, "{},{}", i + 1, l.to_decimal())?;
        }
        Ok(())
    }

    /// Metadata recorded next to the CSV export.
    pub fn meta(&self) -> Value {
        json!({
            "measure_digest": self.source.measure_digest,
            "kernel_digest": self.source.kernel_digest,
            "depth": self.source.depth,
            "precision_bits": self.precision_bits,
            "trust_threshold": format!("{:e}", self.trust_threshold),
            "count": self.eigenvalues.len(),
            "sweeps": self.sweeps,
        })
    }

    /// Reads back a CSV export and its metadata.
    pub fn read(csv: &str, meta: &Value) -> Result<Self> {
        let field = |key: &str| meta.get(key).ok_or_else(|| Error::Parse(format!("metadata lacks {key:?}")));
        let text = |key: &str| -> Result<String> {
            field(key)?.as_str().map(str::to_string).ok_or_else(|| Error::Parse(format!("{key:?} is not a string")))
        };
        let int = |key: &str| -> Result<usize> {
            field(key)?
                .as_u64()
                .map(|v| v as usize)
                .ok_or_else(|| Error::Parse(format!("{key:?} is not an integer")))
        };
        let precision_bits = int("precision_bits")?;
        let trust_threshold: f64 =
            text("trust_threshold")?.parse().map_err(|e| Error::Parse(format!("trust_threshold: {e}")))?;
        let source = Source { measure_digest: text("measure_digest")?, kernel_digest: text("kernel_digest")?, depth: int("depth")? };
        let mut lines = csv.lines();
        if lines.next().map(str::trim) != Some("index,lambda") {
            return Err(Error::Parse("eigenvalue CSV must start with the header index,lambda".into()));
        }
        let mut values = Vec::new();
        for (n, line) in lines.enumerate() {
            let (_, v) = line.split_once(',').ok_or_else(|| Error::Parse(format!("line {}: expected two fields", n + 2)))?;
            values.push(XReal::parse(v, precision_bits).ok_or_else(|| Error::Parse(format!("line {}: bad number {v:?}", n + 2)))?);
        }
        let mut sp = Spectrum::new(values, precision_bits, source, trust_threshold);
        sp.sweeps = int("sweeps").unwrap_or(0);
        Ok(sp)
    }
}

/// All eigenvalues of `m` by cyclic Jacobi at the matrix's precision.
pub fn eigenvalues(m: &SymMatrix) -> Result<Spectrum> {
    let (values, sweeps) = jacobi::jacobi(m)?;
    let trust = m.truncation.as_ref().map_or(0.0, |t| TRUST_FACTOR * t.tail_mass * t.max_diagonal);
    let mut sp = Spectrum::new(values, m.precision_bits, m.source.clone(), trust);
    sp.sweeps = sweeps;
    Ok(sp)
}

/// Atoms → Gram matrix → eigenvalues in one call.
pub fn compute_spectrum(spec: &MeasureSpec, k: &KernelSpec, depth: usize, precision_bits: usize) -> Result<Spectrum> {
    let list = atoms(spec, depth)?;
    let m = gram_matrix(&list, k, precision_bits)?.with_measure_digest(spec.digest());
    eigenvalues(&m)
}

/// `N(λ) = #{j : λ_j > λ}`.
pub fn counting_function(sp: &Spectrum, lambda: f64) -> Result<usize> {
    if !(lambda > 0.0) {
        return Err(Error::OutOfRange(format!("lambda = {lambda} must be positive")));
    }
    if lambda < sp.trust_threshold {
        return Err(Error::Untrusted { lambda, threshold: sp.trust_threshold });
    }
    let l = XReal::from_f64(lambda, sp.precision_bits.max(64));
    Ok(sp.eigenvalues.iter().take_while(|v| **v > l).count())
}

/// Predicted counting slope `(n−1)/ln q` and the ratio
/// `q = 1/(ρ·a_m^{2ℓ−1})`.
pub fn theoretical_slope(spec: &MeasureSpec, ell: usize) -> (f64, f64) {
    assert!(ell >= 1, "operator order starts at 1");
    let q = num_traits::one::<num_rational::BigRational>()
        / (spec.rho() * num_traits::pow(spec.scale(), 2 * ell - 1));
    assert!(q > num_rational::BigRational::one(), "q > 1 for a valid measure");
    let qf = q.to_f64().unwrap_or(f64::INFINITY);
    ((spec.n() - 1) as f64 / qf.ln(), qf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::AtomList;
    use num_rational::BigRational;

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    #[test]
    fn single_atom_matrix() {
        let list = AtomList::from_pairs(vec![(q(1, 2), q(1, 1))], q(0, 1)).unwrap();
        let m = gram_matrix(&list, &KernelSpec::wiener(), 128).unwrap();
        assert_eq!(m.order(), 1);
        assert_eq!(m.get(0, 0).to_f64(), 0.5);
        let sp = eigenvalues(&m).unwrap();
        assert_eq!(sp.eigenvalues_f64(), vec![0.5]);
    }

    #[test]
    fn two_atom_matrix_and_roots() {
        let list = AtomList::from_pairs(vec![(q(3, 10), q(1, 2)), (q(4, 5), q(1, 2))], q(0, 1)).unwrap();
        let m = gram_matrix(&list, &KernelSpec::wiener(), 192).unwrap();
        let rows = m.to_f64_rows();
        assert!((rows[0][0] - 0.15).abs() < 1e-16 && (rows[0][1] - 0.15).abs() < 1e-16);
        assert!((rows[1][1] - 0.40).abs() < 1e-16 && rows[1][0] == rows[0][1]);
        let sp = eigenvalues(&m).unwrap();
        let disc = 0.1525f64.sqrt();
        let expected = [(0.55 + disc) / 2.0, (0.55 - disc) / 2.0];
        for (l, e) in sp.eigenvalues_f64().iter().zip(expected) {
            assert!((l - e).abs() < 1e-15, "{l} vs {e}");
        }
        assert!((expected[0] - 0.470256).abs() < 1e-6 && (expected[1] - 0.079744).abs() < 1e-6);
    }

    #[test]
    fn counting_uses_strict_inequality() {
        let sp = Spectrum::from_f64(&[0.5, 0.1, 0.02], 1e-3);
        assert_eq!(counting_function(&sp, 0.05).unwrap(), 2);
        assert_eq!(counting_function(&sp, 0.6).unwrap(), 0);
        assert_eq!(counting_function(&sp, 0.1).unwrap(), 1);
        assert!(matches!(counting_function(&sp, 1e-4), Err(Error::Untrusted { .. })));
    }

    #[test]
    fn figure_slopes() {
        let (s1, q1) = theoretical_slope(&MeasureSpec::figure(), 1);
        assert!((q1 - 6.0).abs() < 1e-12 && (s1 - 2.0 / 6f64.ln()).abs() < 1e-15);
        let (s2, q2) = theoretical_slope(&MeasureSpec::figure(), 2);
        assert!((q2 - 24.0).abs() < 1e-12 && (s2 - 2.0 / 24f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn deduplicates_and_drops_non_positive() {
        let sp = Spectrum::from_f64(&[0.1, 0.5, 0.1, 0.0, -1e-30], 0.0);
        assert_eq!(sp.eigenvalues_f64(), vec![0.5, 0.1]);
    }

    #[test]
    fn csv_round_trip() {
        let m = SymMatrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 3.0]], 256);
        let sp = eigenvalues(&m).unwrap();
        let mut buf = Vec::new();
        sp.write_csv(&mut buf).unwrap();
        let back = Spectrum::read(std::str::from_utf8(&buf).unwrap(), &sp.meta()).unwrap();
        assert_eq!(back.eigenvalues(), sp.eigenvalues());
        assert_eq!(back.precision_bits(), 256);
    }
}
