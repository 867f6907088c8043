//! Cyclic Jacobi eigenvalue iteration in extended precision.
//!
//! Each rotation annihilates one off-diagonal entry using Rutishauser's
//! update formulas, which keep the diagonal accurate for graded matrices
//! whose eigenvalues span many decades.

use super::SymMatrix;
use crate::error::{Error, Result};
use crate::xprec::XReal;

/// Sweep budget before giving up.
pub const MAX_SWEEPS: usize = 50;

/// Eigenvalues (unsorted) plus the number of sweeps used.
pub(super) fn jacobi(m: &SymMatrix) -> Result<(Vec<XReal>, usize)> {
    let n = m.order();
    let prec = m.precision_bits();
    let mut a: Vec<XReal> = m.upper().to_vec();
    let idx = |i: usize, j: usize| -> usize {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        i * n - i * (i + 1) / 2 + j
    };
    let norm = frobenius(&a, n, true).sqrt();
    // Off-diagonal Frobenius mass must fall below 2^{−p+8}·‖A‖_F.
    let target = norm.ldexp(8 - prec as i32);
    let one = XReal::one(prec);
    let two = XReal::from_i64(2, prec);
    for sweep in 0..=MAX_SWEEPS {
        let off = frobenius(&a, n, false).sqrt();
        if off <= target || n < 2 {
            let diag = (0..n).map(|i| a[idx(i, i)].clone()).collect();
            return Ok((diag, sweep));
        }
        if sweep == MAX_SWEEPS {
            let ratio = if norm.is_zero() { 0.0 } else { (&off / &norm).to_f64() };
            return Err(Error::NoConvergence { sweeps: sweep, residual: ratio });
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = a[idx(p, q)].clone();
                if apq.is_zero() {
                    continue;
                }
                let theta = &(&a[idx(q, q)] - &a[idx(p, p)]) / &(&two * &apq);
                let root = (&(&theta * &theta) + &one).sqrt();
                let mut t = (&theta.abs() + &root).recip();
                if theta.is_negative() {
                    t = -t;
                }
                let c = (&(&t * &t) + &one).sqrt().recip();
                let s = &t * &c;
                let tau = &s / &(&one + &c);
                let shift = &t * &apq;
                a[idx(p, p)] = &a[idx(p, p)] - &shift;
                a[idx(q, q)] = &a[idx(q, q)] + &shift;
                a[idx(p, q)] = XReal::zero(prec);
                for k in 0..n {
                    if k == p || k == q {
                        continue;
                    }
                    let (ip, iq) = (idx(k, p), idx(k, q));
                    let g = a[ip].clone();
                    let h = a[iq].clone();
                    a[ip] = &g - &(&s * &(&h + &(&g * &tau)));
                    a[iq] = &h + &(&s * &(&g - &(&h * &tau)));
                }
            }
        }
    }
    unreachable!("the loop returns by the sweep budget")
}

/// Squared Frobenius norm of the full matrix (`diag = true`) or of its
/// off-diagonal part, from the stored upper triangle.
fn frobenius(a: &[XReal], n: usize, diag: bool) -> XReal {
    let prec = a.first().map_or(64, XReal::prec);
    let mut d = XReal::zero(prec);
    let mut off = XReal::zero(prec);
    let mut k = 0;
    for i in 0..n {
        for j in i..n {
            let sq = &a[k] * &a[k];
            if i == j {
                d = &d + &sq;
            } else {
                off = &off + &sq;
            }
            k += 1;
        }
    }
    let off2 = &off + &off;
    if diag {
        &d + &off2
    } else {
        off2
    }
}
