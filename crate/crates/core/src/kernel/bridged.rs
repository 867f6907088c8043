//! The integrated Wiener process conditioned on `W_j(1) = 0` for
//! `j = 0..=𝔰`, as an exact rational polynomial in `(x, y)`, `x ≤ y`.
//!
//! With `W_0 = W` and `W_j(t) = ∫_0^t W_{j−1}`, everything is linear in the
//! white noise: `W_a(x) = ∫_0^x (x−v)^a/a! dW(v)`. Conditioning a Gaussian
//! vector subtracts the regression on the constraints:
//! `K(x, y) = Cov(W_𝔰(x), W_𝔰(y)) − c(x)ᵀ Σ⁻¹ c(y)`.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

/// Monomial `x^i y^j` ↦ coefficient.
pub type Poly2 = BTreeMap<(u32, u32), BigRational>;

fn fact(n: usize) -> BigRational {
    BigRational::from_integer((1..=n).fold(BigInt::one(), |acc, i| acc * BigInt::from(i)))
}

fn binom(n: usize, k: usize) -> BigRational {
    fact(n) / (fact(k) * fact(n - k))
}

fn add_term(p: &mut Poly2, key: (u32, u32), c: BigRational) {
    if c.is_zero() {
        return;
    }
    let e = p.entry(key).or_insert_with(BigRational::zero);
    *e += c;
    if e.is_zero() {
        p.remove(&key);
    }
}

/// `Cov(W_a(x), W_b(y))` for `x ≤ y` as a polynomial in `(x, y)`.
fn cross_cov(a: usize, b: usize) -> Poly2 {
    let mut p = Poly2::new();
    for k in 0..=b {
        let sign = if k % 2 == 0 { BigRational::one() } else { -BigRational::one() };
        let c = sign * binom(b, k) * fact(k) / (fact(a + k + 1) * fact(b));
        add_term(&mut p, ((a + k + 1) as u32, (b - k) as u32), c);
    }
    p
}

/// Inverse of a small rational matrix by Gauss–Jordan elimination.
fn invert(mut m: Vec<Vec<BigRational>>) -> Vec<Vec<BigRational>> {
    let n = m.len();
    let mut inv: Vec<Vec<BigRational>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { BigRational::one() } else { BigRational::zero() }).collect())
        .collect();
    for col in 0..n {
        let piv = (col..n).find(|&r| !m[r][col].is_zero()).expect("constraint covariance is nonsingular");
        m.swap(col, piv);
        inv.swap(col, piv);
        let p = m[col][col].clone();
        for j in 0..n {
            m[col][j] = &m[col][j] / &p;
            inv[col][j] = &inv[col][j] / &p;
        }
        for r in 0..n {
            if r != col && !m[r][col].is_zero() {
                let f = m[r][col].clone();
                for j in 0..n {
                    let a = &m[col][j] * &f;
                    m[r][j] -= a;
                    let b = &inv[col][j] * &f;
                    inv[r][j] -= b;
                }
            }
        }
    }
    inv
}

/// Exact covariance polynomial `L(x, y)`, valid for `x ≤ y`.
pub fn polynomial(s: usize) -> Poly2 {
    let mut out = cross_cov(s, s);
    // c_j(x) = Cov(W_𝔰(x), W_j(1)), a polynomial in x alone (x ≤ 1).
    let c: Vec<BTreeMap<u32, BigRational>> = (0..=s)
        .map(|j| {
            let mut cj = BTreeMap::new();
            for ((px, _), v) in cross_cov(s, j) {
                *cj.entry(px).or_insert_with(BigRational::zero) += v;
            }
            cj
        })
        .collect();
    let sigma: Vec<Vec<BigRational>> = (0..=s)
        .map(|i| (0..=s).map(|j| BigRational::one() / (BigRational::from_integer((i + j + 1).into()) * fact(i) * fact(j))).collect())
        .collect();
    let inv = invert(sigma);
    for i in 0..=s {
        for j in 0..=s {
            for (px, a) in &c[i] {
                for (py, b) in &c[j] {
                    add_term(&mut out, (*px, *py), -(a * &inv[i][j] * b));
                }
            }
        }
    }
    out
}

pub(super) fn covariance_f64(s: usize, x: f64, y: f64) -> f64 {
    let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
    polynomial(s)
        .iter()
        .map(|(&(i, j), c)| c.to_f64().unwrap_or(f64::NAN) * lo.powi(i as i32) * hi.powi(j as i32))
        .sum()
}
