//! Closed-form covariances in double precision.

use super::{bridged, symbolic, KernelSpec, Process};
use crate::error::Result;

/// Working precision for the symbolic route when only an `f64` is wanted.
const F64_SYMBOLIC_BITS: usize = 128;

pub(super) fn covariance(k: &KernelSpec, s: f64, t: f64) -> Result<f64> {
    let a = k.param_f64().unwrap_or(0.0);
    let (lo, hi) = if s <= t { (s, t) } else { (t, s) };
    let tau = hi - lo;
    Ok(match k.process() {
        Process::Wiener => lo,
        Process::BrownianBridge => lo - s * t,
        Process::CenteredWiener => lo - s + s * s / 2.0 - t + t * t / 2.0 + 1.0 / 3.0,
        Process::CenteredBridge => lo - s * t - (s - s * s) / 2.0 - (t - t * t) / 2.0 + 1.0 / 12.0,
        Process::ElongatedBridge => lo - (2.0 * a - a * a) * s * t,
        Process::Slepian => a - tau,
        Process::OuStationary => (-a * tau).exp() / (2.0 * a),
        // exp(−α|s−t|) − exp(−α(s+t)) = exp(−ατ)·(1 − exp(−2α·lo)), written
        // to stay accurate near s = t = 0.
        Process::OuZero => (-a * tau).exp() * -(-2.0 * a * lo).exp_m1() / (2.0 * a),
        Process::Bogolyubov => ((a * tau).exp() + (a - a * tau).exp()) / (2.0 * a * a.exp_m1()),
        Process::Matern => matern(k.integrations(), tau),
        Process::BridgedIntegratedWiener => bridged::covariance_f64(k.integrations(), s, t),
        Process::CenteredIntegratedWiener | Process::CenteredIntegratedBridge => {
            symbolic::symbolic_kernel(k, F64_SYMBOLIC_BITS)?.eval_f64(lo, hi)
        }
    })
}

/// Matérn covariance of smoothness order `s + 1` at lag `tau`:
/// `e^{−τ}/(2^{2s+1} s!) · Σ_k (s+k)!/(k!(s−k)!) (2τ)^{s−k}`.
pub(super) fn matern(s: usize, tau: f64) -> f64 {
    let tau = tau.abs();
    let mut sum = 0.0;
    for k in 0..=s {
        sum += factorial(s + k) / (factorial(k) * factorial(s - k)) * (2.0 * tau).powi((s - k) as i32);
    }
    (-tau).exp() * sum / (2f64.powi(2 * s as i32 + 1) * factorial(s))
}

pub(super) fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

fn binomial(n: usize, k: usize) -> f64 {
    factorial(n) / (factorial(k) * factorial(n - k))
}

/// `∫_0^{min(t,u)} (t−v)^𝔰 (u−v)^𝔰 dv / (𝔰!)²`, expanded around `min(t,u)`.
pub(super) fn integrated_wiener(s: usize, t: f64, u: f64) -> f64 {
    let (lo, hi) = if t <= u { (t, u) } else { (u, t) };
    let gap = hi - lo;
    // w = lo − v: ∫_0^lo w^𝔰 (gap + w)^𝔰 dw
    let mut sum = 0.0;
    for k in 0..=s {
        let p = (s + k + 1) as i32;
        sum += binomial(s, k) * gap.powi((s - k) as i32) * lo.powi(p) / p as f64;
    }
    sum / factorial(s).powi(2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matern_first_orders() {
        // Order 1 is the stationary OU kernel with α = 1.
        assert!((matern(0, 0.3) - 0.5 * (-0.3f64).exp()).abs() < 1e-16);
        // Order 2: e^{−τ}(1 + τ)/4.
        assert!((matern(1, 0.3) - (-0.3f64).exp() * 1.3 / 4.0).abs() < 1e-16);
    }

    #[test]
    fn twice_integrated_wiener_variance() {
        // ∫_0^1 (1−v)^4 dv / 4 = 1/20
        assert!((integrated_wiener(2, 1.0, 1.0) - 0.05).abs() < 1e-16);
    }
}
