//! Gauss–Legendre quadrature for integrated covariances.
//!
//! An `𝔰`-times integrated process is a linear functional of its base path,
//! `X_𝔰(t) = ∫_0^1 h_𝔰(t, v) X(v) dv`, where `h_1(t, v) = 1{0 ≤ v < t}` for a
//! lower endpoint 0 and `−1{t < v ≤ 1}` for endpoint 1, and
//! `h_k(t, v) = ∫_{β_k}^t h_{k−1}(t₁, v) dt₁`. Each `h_k(·, v)` is a piecewise
//! polynomial with a single break at `v`, so the recursion is integrated
//! exactly by low-order rules. The covariance is then the double integral
//! `∫∫ h_𝔰(t, x) h_𝔰(u, y) G(x, y) dx dy`, split into panels at `t`, `u` and
//! the diagonal kink of `G`.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use super::{closed, KernelSpec};
use crate::error::{Error, Result};

/// Nodes per panel for the primary estimate; the error estimate doubles it.
pub const PANEL_NODES: usize = 32;
/// Relative accuracy target.
pub const REL_TOL: f64 = 1e-12;

type Rule = (Vec<f64>, Vec<f64>);

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[−1, 1]`.
pub fn gauss_legendre(n: usize) -> std::sync::Arc<Rule> {
    static CACHE: OnceLock<Mutex<HashMap<usize, std::sync::Arc<Rule>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("rule cache");
    guard.entry(n).or_insert_with(|| std::sync::Arc::new(compute_rule(n))).clone()
}

fn compute_rule(n: usize) -> Rule {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Tricomi's initial guess, then Newton on P_n.
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { z } else { p1 };
            let pnm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pnm1) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// `∫_a^b f` with the `n`-point rule.
fn integrate(n: usize, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let rule = gauss_legendre(n);
    let (mid, half) = ((a + b) / 2.0, (b - a) / 2.0);
    rule.0.iter().zip(&rule.1).map(|(x, w)| w * f(mid + half * x)).sum::<f64>() * half
}

/// Integral over `[0, 1]` split at the given interior points.
fn integrate_panels(n: usize, breaks: &[f64], mut f: impl FnMut(f64) -> f64) -> f64 {
    let mut pts: Vec<f64> = std::iter::once(0.0)
        .chain(breaks.iter().copied().filter(|&b| b > 0.0 && b < 1.0))
        .chain(std::iter::once(1.0))
        .collect();
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts.windows(2).map(|w| integrate(n, w[0], w[1], &mut f)).sum()
}

/// Integration weight `h_k(t, v)` for endpoints `ends[..k]` (innermost first).
fn weight(ends: &[bool], t: f64, v: f64) -> f64 {
    let Some((&last, inner)) = ends.split_last() else {
        unreachable!("at least one integration")
    };
    if inner.is_empty() {
        return if !last {
            if v < t { 1.0 } else { 0.0 }
        } else if v > t {
            -1.0
        } else {
            0.0
        };
    }
    // Oriented ∫_β^t of a piecewise polynomial of degree < k with a break at v.
    let k = ends.len();
    let a = if last { 1.0 } else { 0.0 };
    let (lo, hi, orient) = if t < a { (t, a, -1.0) } else { (a, t, 1.0) };
    let mut total = 0.0;
    let split = [lo, v.clamp(lo, hi), hi];
    for w in split.windows(2) {
        total += integrate(k, w[0], w[1], |x| weight(inner, x, v));
    }
    orient * total
}

pub(super) fn integrated_covariance(k: &KernelSpec, t: f64, u: f64) -> Result<f64> {
    let base = k.base_spec();
    let ends = k.endpoints();
    let g = |x: f64, y: f64| closed::covariance(&base, x, y).expect("base kernel on the unit square");
    // Returns the estimate and a bound on |integrand| over the unit square.
    let estimate = |n: usize| -> (f64, f64) {
        let (mut peak_h, mut peak_inner) = (0.0f64, 0.0f64);
        let v = integrate_panels(n, &[t, u], |x| {
            let hx = weight(ends, t, x);
            if hx == 0.0 {
                return 0.0;
            }
            peak_h = peak_h.max(hx.abs());
            let inner = integrate_panels(n, &[u, x], |y| {
                let hy = weight(ends, u, y);
                if hy == 0.0 {
                    0.0
                } else {
                    let v = hy * g(x, y);
                    peak_inner = peak_inner.max(v.abs());
                    v
                }
            });
            hx * inner
        });
        (v, peak_h * peak_inner)
    };
    let (coarse, _) = estimate(PANEL_NODES);
    let (fine, scale) = estimate(2 * PANEL_NODES);
    let error = (fine - coarse).abs();
    // The integrand's magnitude guards against a purely relative test on
    // results that cancel to zero (e.g. at a pinned endpoint).
    let tolerance = REL_TOL * fine.abs().max(1e-3 * scale);
    if error > tolerance && error > 1e-300 {
        return Err(Error::Quadrature { estimate: fine, error, tolerance });
    }
    Ok(fine)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rule_integrates_polynomials_exactly() {
        let v = integrate(5, 0.0, 2.0, |x| x.powi(9));
        assert!((v - 2f64.powi(10) / 10.0).abs() < 1e-12);
        let r = gauss_legendre(32);
        assert!((r.1.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn integration_weights() {
        assert_eq!(weight(&[false], 0.5, 0.2), 1.0);
        assert_eq!(weight(&[true], 0.5, 0.7), -1.0);
        // h_2 with endpoints (0, 0): t − v for v < t.
        assert!((weight(&[false, false], 0.8, 0.3) - 0.5).abs() < 1e-15);
        // endpoints (0, 1): ∫_1^t 1{v < t₁} dt₁ = −(1 − max(v, t)).
        assert!((weight(&[false, true], 0.4, 0.2) + 0.6).abs() < 1e-15);
        assert!((weight(&[false, true], 0.4, 0.7) + 0.3).abs() < 1e-15);
    }
}
