//! Exponential polynomials in up to three variables with a shared rate:
//! finite sums of `c · Π x_i^{p_i} · exp(r · Σ k_i x_i)` with integer `k_i`.
//!
//! Every catalog kernel restricted to the half-plane `x ≤ y` is of this form,
//! and the family is closed under the operations needed to integrate and
//! center a covariance: antiderivatives, substitution of a bound and variable
//! renaming. Coefficients are carried in extended precision so the Gram
//! matrix can be assembled at any working precision.

use std::collections::BTreeMap;

use num_rational::BigRational;

use crate::xprec::XReal;

/// Number of variable slots.
pub const SLOTS: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
struct Key {
    pow: [u32; SLOTS],
    k: [i32; SLOTS],
}

/// Value substituted for a variable.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Bound {
    Zero,
    One,
    Var(usize),
}

#[derive(Clone, Debug)]
pub struct ExpPoly {
    rate: XReal,
    prec: usize,
    terms: BTreeMap<Key, XReal>,
}

impl ExpPoly {
    pub fn zero(rate: XReal, prec: usize) -> Self {
        ExpPoly { rate: rate.with_prec(prec), prec, terms: BTreeMap::new() }
    }

    pub fn prec(&self) -> usize {
        self.prec
    }

    pub fn rate(&self) -> &XReal {
        &self.rate
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Adds `c · x^pow · exp(r·k·x)`.
    pub fn push(&mut self, c: XReal, pow: [u32; SLOTS], k: [i32; SLOTS]) {
        if c.is_zero() {
            return;
        }
        let key = Key { pow, k };
        let c = c.with_prec(self.prec);
        match self.terms.get_mut(&key) {
            Some(acc) => {
                let sum = &*acc + &c;
                if sum.is_zero() {
                    self.terms.remove(&key);
                } else {
                    *acc = sum;
                }
            }
            None => {
                self.terms.insert(key, c);
            }
        }
    }

    pub fn push_ratio(&mut self, c: &BigRational, pow: [u32; SLOTS], k: [i32; SLOTS]) {
        let c = XReal::from_ratio(c, self.prec);
        self.push(c, pow, k);
    }

    pub fn push_f64(&mut self, c: f64, pow: [u32; SLOTS], k: [i32; SLOTS]) {
        let c = XReal::from_f64(c, self.prec);
        self.push(c, pow, k);
    }

    fn empty_like(&self) -> Self {
        ExpPoly { rate: self.rate.clone(), prec: self.prec, terms: BTreeMap::new() }
    }

    pub fn add(&self, other: &ExpPoly) -> ExpPoly {
        let mut out = self.clone();
        for (key, c) in &other.terms {
            out.push(c.clone(), key.pow, key.k);
        }
        out
    }

    pub fn sub(&self, other: &ExpPoly) -> ExpPoly {
        self.add(&other.scale(&XReal::from_i64(-1, self.prec)))
    }

    pub fn scale(&self, s: &XReal) -> ExpPoly {
        let mut out = self.empty_like();
        for (key, c) in &self.terms {
            out.push(c * s, key.pow, key.k);
        }
        out
    }

    /// `exp(r·m)` at working precision.
    fn exp_rate(&self, m: i32) -> XReal {
        (&self.rate * &XReal::from_i64(m as i64, self.prec)).exp()
    }

    /// An antiderivative with respect to slot `var`.
    pub fn antiderivative(&self, var: usize) -> ExpPoly {
        let mut out = self.empty_like();
        for (key, c) in &self.terms {
            let p = key.pow[var];
            let kk = key.k[var];
            if kk == 0 {
                let mut pow = key.pow;
                pow[var] += 1;
                out.push(c / &XReal::from_i64(p as i64 + 1, self.prec), pow, key.k);
                continue;
            }
            // ∫ x^p e^{λx} dx = e^{λx} Σ_j (−1)^j p!/(p−j)! x^{p−j} / λ^{j+1}
            let lambda = &self.rate * &XReal::from_i64(kk as i64, self.prec);
            let inv = lambda.recip();
            let mut factor = c * &inv; // c · (falling factorial) / λ^{j+1}, with sign
            for j in 0..=p {
                let mut pow = key.pow;
                pow[var] = p - j;
                out.push(factor.clone(), pow, key.k);
                if j < p {
                    let ff = XReal::from_i64(-((p - j) as i64), self.prec);
                    factor = &(&factor * &ff) * &inv;
                }
            }
        }
        out
    }

    /// Substitutes `bound` for slot `var`.
    pub fn subst(&self, var: usize, bound: Bound) -> ExpPoly {
        let mut out = self.empty_like();
        let mut exp_cache: BTreeMap<i32, XReal> = BTreeMap::new();
        for (key, c) in &self.terms {
            let mut pow = key.pow;
            let mut k = key.k;
            let (p, kk) = (pow[var], k[var]);
            pow[var] = 0;
            k[var] = 0;
            match bound {
                Bound::Zero => {
                    if p == 0 {
                        out.push(c.clone(), pow, k);
                    }
                }
                Bound::One => {
                    let c = if kk == 0 {
                        c.clone()
                    } else {
                        let e = exp_cache.entry(kk).or_insert_with(|| self.exp_rate(kk)).clone();
                        c * &e
                    };
                    out.push(c, pow, k);
                }
                Bound::Var(j) => {
                    assert_ne!(j, var, "substituting a variable for itself");
                    pow[j] += p;
                    k[j] += kk;
                    out.push(c.clone(), pow, k);
                }
            }
        }
        out
    }

    /// `∫_{lo}^{hi} · d(slot var)`.
    pub fn integrate(&self, var: usize, lo: Bound, hi: Bound) -> ExpPoly {
        let a = self.antiderivative(var);
        a.subst(var, hi).sub(&a.subst(var, lo))
    }

    /// Moves slot `s` to slot `perm[s]`; `perm` must be a permutation.
    pub fn remap(&self, perm: [usize; SLOTS]) -> ExpPoly {
        let mut out = self.empty_like();
        for (key, c) in &self.terms {
            let mut pow = [0; SLOTS];
            let mut k = [0; SLOTS];
            for s in 0..SLOTS {
                pow[perm[s]] = key.pow[s];
                k[perm[s]] = key.k[s];
            }
            out.push(c.clone(), pow, k);
        }
        out
    }

    /// Highest power and exponent range per slot, used to size caches.
    fn extents(&self) -> (u32, i32, i32) {
        let mut maxp = 0;
        let (mut kmin, mut kmax) = (0, 0);
        for key in self.terms.keys() {
            for s in 0..SLOTS {
                maxp = maxp.max(key.pow[s]);
                kmin = kmin.min(key.k[s]);
                kmax = kmax.max(key.k[s]);
            }
        }
        (maxp, kmin, kmax)
    }

    /// Evaluates at `(x0, x1)`; slot 2 must be unused.
    pub fn eval(&self, x0: &XReal, x1: &XReal) -> XReal {
        let pts = PointCache::build(self, &[x0.clone(), x1.clone()]);
        pts.eval_pair(self, 0, 1)
    }

    pub fn eval_f64(&self, x0: f64, x1: f64) -> f64 {
        self.eval(&XReal::from_f64(x0, self.prec), &XReal::from_f64(x1, self.prec)).to_f64()
    }

    /// Pre-computes powers and exponentials at a set of points so a full
    /// matrix of evaluations only needs multiplications.
    pub fn point_cache(&self, points: &[XReal]) -> PointCache {
        PointCache::build(self, points)
    }

    /// True when slot 2 is unused (a function of two variables).
    pub fn is_bivariate(&self) -> bool {
        self.terms.keys().all(|k| k.pow[2] == 0 && k.k[2] == 0)
    }
}

pub struct PointCache {
    kmin: i32,
    pows: Vec<Vec<XReal>>,
    exps: Vec<Vec<XReal>>,
}

impl PointCache {
    fn build(poly: &ExpPoly, points: &[XReal]) -> Self {
        let (maxp, kmin, kmax) = poly.extents();
        let prec = poly.prec;
        let mut pows = Vec::with_capacity(points.len());
        let mut exps = Vec::with_capacity(points.len());
        for x in points {
            let x = x.with_prec(prec);
            let mut pw = vec![XReal::one(prec)];
            for p in 1..=maxp as usize {
                let next = &pw[p - 1] * &x;
                pw.push(next);
            }
            let e1 = (&poly.rate * &x).exp();
            let einv = e1.recip();
            let mut ex = Vec::with_capacity((kmax - kmin + 1) as usize);
            for m in kmin..=kmax {
                let base = if m >= 0 { &e1 } else { &einv };
                ex.push(base.powi(m.unsigned_abs()));
            }
            pows.push(pw);
            exps.push(ex);
        }
        PointCache { kmin, pows, exps }
    }

    /// Evaluates `poly(points[i], points[j])`.
    pub fn eval_pair(&self, poly: &ExpPoly, i: usize, j: usize) -> XReal {
        let mut acc = XReal::zero(poly.prec);
        for (key, c) in &poly.terms {
            let mut t = c * &self.pows[i][key.pow[0] as usize];
            t = &t * &self.pows[j][key.pow[1] as usize];
            if key.k[0] != 0 {
                t = &t * &self.exps[i][(key.k[0] - self.kmin) as usize];
            }
            if key.k[1] != 0 {
                t = &t * &self.exps[j][(key.k[1] - self.kmin) as usize];
            }
            acc = &acc + &t;
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const P: usize = 192;

    fn x(v: f64) -> XReal {
        XReal::from_f64(v, P)
    }

    #[test]
    fn polynomial_integration() {
        // ∫_0^1 x² dx = 1/3
        let mut p = ExpPoly::zero(XReal::zero(P), P);
        p.push_f64(1.0, [2, 0, 0], [0, 0, 0]);
        let v = p.integrate(0, Bound::Zero, Bound::One).eval(&x(0.0), &x(0.0));
        assert!((v.to_f64() - 1.0 / 3.0).abs() < 1e-30);
    }

    #[test]
    fn exponential_moment() {
        // ∫_0^1 x e^{2x} dx = (e² + 1)/4
        let mut p = ExpPoly::zero(XReal::from_i64(2, P), P);
        p.push_f64(1.0, [1, 0, 0], [1, 0, 0]);
        let v = p.integrate(0, Bound::Zero, Bound::One).eval(&x(0.0), &x(0.0)).to_f64();
        assert!((v - (2f64.exp() + 1.0) / 4.0).abs() < 1e-14);
    }

    #[test]
    fn variable_bounds_and_remap() {
        // ∫_{x}^{y} e^{t} dt = e^y − e^x, with t in slot 2.
        let mut p = ExpPoly::zero(XReal::one(P), P);
        p.push_f64(1.0, [0, 0, 0], [0, 0, 1]);
        let q = p.integrate(2, Bound::Var(0), Bound::Var(1));
        let v = q.eval_f64(0.25, 0.75);
        assert!((v - (0.75f64.exp() - 0.25f64.exp())).abs() < 1e-14);
        let swapped = q.remap([1, 0, 2]).eval_f64(0.75, 0.25);
        assert!((swapped - v).abs() < 1e-14);
    }

    #[test]
    fn cancellation_removes_terms() {
        let mut p = ExpPoly::zero(XReal::zero(P), P);
        p.push_f64(1.5, [1, 1, 0], [0, 0, 0]);
        let z = p.sub(&p);
        assert!(z.is_empty());
    }

    #[test]
    fn point_cache_matches_direct_evaluation() {
        let mut p = ExpPoly::zero(XReal::from_f64(0.5, P), P);
        p.push_f64(0.3, [2, 1, 0], [1, -2, 0]);
        p.push_f64(-1.0, [0, 3, 0], [0, 0, 0]);
        let pts = [x(0.2), x(0.9)];
        let cache = p.point_cache(&pts);
        let a = cache.eval_pair(&p, 0, 1).to_f64();
        let direct = 0.3 * 0.04 * 0.9 * (0.5 * (0.2 - 1.8f64)).exp() - 0.729;
        assert!((a - direct).abs() < 1e-15);
    }
}
