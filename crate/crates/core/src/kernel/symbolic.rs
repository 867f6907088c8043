//! Exact construction of catalog kernels as exponential polynomials.
//!
//! A covariance `G` is represented by `L(x, y) = G(x, y)` on the half-plane
//! `x ≤ y` (slots 0 and 1); symmetry supplies the rest. Integration from an
//! endpoint and centering are performed symbolically, so the only rounding is
//! in the coefficients (carried at the requested precision).

use num_rational::BigRational;
use num_traits::One;

use super::expoly::{Bound, ExpPoly};
use super::{bridged, KernelSpec, Process};
use crate::error::Result;
use crate::xprec::XReal;

fn q(n: i64, d: i64) -> BigRational {
    BigRational::new(n.into(), d.into())
}

/// Builds `L(x, y)` (valid for `x ≤ y`) at `prec` bits.
pub fn symbolic_kernel(k: &KernelSpec, prec: usize) -> Result<ExpPoly> {
    let mut l = base(k, prec);
    match k.process() {
        Process::CenteredIntegratedWiener | Process::CenteredIntegratedBridge => {
            for _ in 0..k.integrations() {
                l = center(&integrate_once(&l, false));
            }
        }
        p if !p.is_self_contained() => {
            for &beta in k.endpoints() {
                l = integrate_once(&l, beta);
            }
        }
        _ => {}
    }
    Ok(l)
}

fn base(k: &KernelSpec, prec: usize) -> ExpPoly {
    let param = k.param().map(|p| XReal::from_ratio(p, prec));
    let zero_rate = || ExpPoly::zero(XReal::zero(prec), prec);
    let one = XReal::one(prec);
    let x = |v: f64| XReal::from_f64(v, prec);
    match k.process() {
        Process::Wiener => {
            let mut l = zero_rate();
            l.push(one, [1, 0, 0], [0; 3]);
            l
        }
        Process::BrownianBridge => bridge(prec),
        Process::CenteredWiener => center(&{
            let mut l = zero_rate();
            l.push(one, [1, 0, 0], [0; 3]);
            l
        }),
        Process::CenteredBridge => center(&bridge(prec)),
        Process::CenteredIntegratedWiener => {
            let mut l = zero_rate();
            l.push(one, [1, 0, 0], [0; 3]);
            center(&l)
        }
        Process::CenteredIntegratedBridge => center(&bridge(prec)),
        Process::ElongatedBridge => {
            let u = param.expect("validated");
            let two = XReal::from_i64(2, prec);
            let c = &(&two * &u) - &(&u * &u);
            let mut l = zero_rate();
            l.push(one, [1, 0, 0], [0; 3]);
            l.push(-c, [1, 1, 0], [0; 3]);
            l
        }
        Process::Slepian => {
            // c − (y − x)
            let c = param.expect("validated");
            let mut l = zero_rate();
            l.push(c, [0, 0, 0], [0; 3]);
            l.push(x(-1.0), [0, 1, 0], [0; 3]);
            l.push(one, [1, 0, 0], [0; 3]);
            l
        }
        Process::OuStationary => {
            let a = param.expect("validated");
            let c = (&XReal::from_i64(2, prec) * &a).recip();
            let mut l = ExpPoly::zero(a, prec);
            l.push(c, [0; 3], [1, -1, 0]);
            l
        }
        Process::OuZero => {
            let a = param.expect("validated");
            let c = (&XReal::from_i64(2, prec) * &a).recip();
            let mut l = ExpPoly::zero(a, prec);
            l.push(c.clone(), [0; 3], [1, -1, 0]);
            l.push(-c, [0; 3], [-1, -1, 0]);
            l
        }
        Process::Bogolyubov => {
            // (e^{α(y−x)} + e^{α} e^{−α(y−x)}) / (2α(e^α − 1))
            let a = param.expect("validated");
            let ea = a.exp();
            let denom = &(&XReal::from_i64(2, prec) * &a) * &(&ea - &one);
            let c = denom.recip();
            let mut l = ExpPoly::zero(a, prec);
            l.push(c.clone(), [0; 3], [-1, 1, 0]);
            l.push(&c * &ea, [0; 3], [1, -1, 0]);
            l
        }
        Process::Matern => matern(k.integrations(), prec),
        Process::BridgedIntegratedWiener => {
            let mut l = zero_rate();
            for ((i, j), c) in bridged::polynomial(k.integrations()) {
                l.push_ratio(&c, [i, j, 0], [0; 3]);
            }
            l
        }
    }
}

fn bridge(prec: usize) -> ExpPoly {
    let mut l = ExpPoly::zero(XReal::zero(prec), prec);
    l.push(XReal::one(prec), [1, 0, 0], [0; 3]);
    l.push(XReal::from_i64(-1, prec), [1, 1, 0], [0; 3]);
    l
}

fn fact(n: usize) -> BigRational {
    (1..=n).fold(BigRational::one(), |acc, i| acc * q(i as i64, 1))
}

fn binom(n: usize, k: usize) -> BigRational {
    fact(n) / (fact(k) * fact(n - k))
}

fn matern(s: usize, prec: usize) -> ExpPoly {
    // e^{x−y}/(2^{2s+1} s!) Σ_k (s+k)!/(k!(s−k)!) 2^{s−k} (y−x)^{s−k}
    let mut l = ExpPoly::zero(XReal::one(prec), prec);
    let norm = BigRational::one() / (q(2, 1).pow(2 * s as i32 + 1) * fact(s));
    for k in 0..=s {
        let m = s - k;
        let a = &norm * fact(s + k) / (fact(k) * fact(m)) * q(2, 1).pow(m as i32);
        for i in 0..=m {
            // (y − x)^m = Σ_i C(m,i) y^i (−x)^{m−i}
            let sign = if (m - i).is_multiple_of(2) { q(1, 1) } else { q(-1, 1) };
            l.push_ratio(&(&a * binom(m, i) * sign), [(m - i) as u32, i as u32, 0], [1, -1, 0]);
        }
    }
    l
}

/// One integration from endpoint 0 (`beta = false`) or 1 (`beta = true`):
/// `∫_β^t ∫_β^u G(x, y) dy dx` as a new `L(t, u)`, `t ≤ u`.
fn integrate_once(l: &ExpPoly, beta: bool) -> ExpPoly {
    // For x ≤ t ≤ u: ∫_0^u G(x, y) dy = ∫_0^x L(y, x) dy + ∫_x^u L(x, y) dy.
    let a = l.remap([2, 0, 1]).integrate(2, Bound::Zero, Bound::Var(0));
    let b = l.remap([0, 2, 1]).integrate(2, Bound::Var(0), Bound::Var(1));
    let ant = a.add(&b).antiderivative(0);
    let f = ant.sub(&ant.subst(0, Bound::Zero));
    if !beta {
        return f;
    }
    // ∫_1^t ∫_1^u G = F(t,u) − F(t,1) − F(u,1) + F(1,1), with F symmetric.
    let f_t1 = f.subst(1, Bound::One);
    let f_u1 = f_t1.remap([1, 0, 2]);
    let f_11 = f_t1.subst(0, Bound::One);
    f.sub(&f_t1).sub(&f_u1).add(&f_11)
}

/// Covariance of `X(t) − ∫_0^1 X`.
fn center(l: &ExpPoly) -> ExpPoly {
    let a = l.remap([2, 0, 1]).integrate(2, Bound::Zero, Bound::Var(0));
    let b = l.remap([0, 2, 1]).integrate(2, Bound::Var(0), Bound::One);
    let m = a.add(&b);
    let total = m.integrate(0, Bound::Zero, Bound::One);
    l.sub(&m).sub(&m.remap([1, 0, 2])).add(&total)
}
