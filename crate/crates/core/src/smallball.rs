//! Small-ball probabilities `P{‖X‖²_μ ≤ ε²}` from a spectrum.
//!
//! By the Karhunen–Loève expansion `‖X‖²_μ` is distributed as
//! `S = Σ λ_j ξ_j²` with independent standard normals `ξ_j`. Three routes
//! estimate `ln P{S ≤ ε²}`: direct sampling, a second-order
//! Lugannani–Rice saddlepoint approximation on the exponentially tilted
//! law, and the logarithmic asymptotics `−C·ln²(1/ε)`.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use libm::erfc;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernel::{operator_order, KernelSpec};
use crate::measure::{validate, MeasureSpec};
use crate::rng::NormalStream;
use crate::spectrum::{theoretical_slope, Spectrum};

/// Samples per parallel work unit.
const SAMPLE_CHUNK: usize = 4096;
/// Relative tolerance of the saddlepoint root.
const ROOT_TOL: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Mc,
    Saddlepoint,
    Asymptotic,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Mc, Method::Saddlepoint, Method::Asymptotic];

    pub fn name(self) -> &'static str {
        match self {
            Method::Mc => "mc",
            Method::Saddlepoint => "saddlepoint",
            Method::Asymptotic => "asymptotic",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s.trim())
            .ok_or_else(|| Error::Parse(format!("unknown method {s:?} (expected mc, saddlepoint or asymptotic)")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SmallBallEstimate {
    pub eps: f64,
    /// Natural logarithm of the probability.
    pub log_prob: f64,
    pub method: Method,
    /// Standard error of `log_prob` (Monte Carlo only).
    pub stderr: Option<f64>,
    pub n_samples: Option<usize>,
    pub seed: Option<u64>,
    /// Bound on the change of `log_prob` caused by dropping untrusted
    /// eigenvalues (saddlepoint only).
    pub truncation_shift: Option<f64>,
}

impl SmallBallEstimate {
    fn plain(eps: f64, log_prob: f64, method: Method) -> Self {
        SmallBallEstimate { eps, log_prob, method, stderr: None, n_samples: None, seed: None, truncation_shift: None }
    }
}

/// Writes estimates as CSV with header `eps,log_prob,method,stderr,n_samples,seed`.
/// `eps` is written as the caller's decimal text; absent fields are empty.
pub fn write_estimates_csv<W: Write>(mut w: W, rows: &[(String, SmallBallEstimate)]) -> Result<()> {
    writeln!(w, "eps,log_prob,method,stderr,n_samples,seed")?;
    let opt = |v: Option<String>| v.unwrap_or_default();
    for (eps, e) in rows {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            eps,
            e.log_prob,
            e.method,
            opt(e.stderr.map(|s| s.to_string())),
            opt(e.n_samples.map(|s| s.to_string())),
            opt(e.seed.map(|s| s.to_string()))
        )?;
    }
    Ok(())
}

/// Draws of `Σ λ_j ξ_j²` over the trusted eigenvalues.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticSamples {
    pub samples: Vec<f64>,
    /// `Σ` of the omitted (untrusted) eigenvalues: the expected contribution
    /// of the dropped terms.
    pub tail_bound: f64,
}

/// `n_samples` independent draws of the truncated quadratic form. Sample `i`
/// uses normal stream `(seed, i)`.
pub fn sample_quadratic_form(sp: &Spectrum, n_samples: usize, seed: u64) -> QuadraticSamples {
    let (lambdas, dropped) = split_trusted(sp);
    QuadraticSamples { samples: sample_values(&lambdas, n_samples, seed), tail_bound: dropped }
}

/// Draws of `Σ λ_j ξ_j²` for an explicit list of coefficients (repeated
/// values are kept as separate terms).
pub fn sample_values(lambdas: &[f64], n_samples: usize, seed: u64) -> Vec<f64> {
    (0..n_samples)
        .step_by(SAMPLE_CHUNK)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|start| {
            (start..(start + SAMPLE_CHUNK).min(n_samples))
                .map(|i| {
                    let mut rng = NormalStream::new(seed, i as u64);
                    lambdas
                        .iter()
                        .map(|l| {
                            let z = rng.next_normal();
                            l * z * z
                        })
                        .sum::<f64>()
                })
                .collect::<Vec<f64>>()
        })
        .collect::<Vec<_>>()
        .concat()
}

/// Trusted eigenvalues as `f64` and the summed untrusted remainder.
fn split_trusted(sp: &Spectrum) -> (Vec<f64>, f64) {
    let lambdas = sp.trusted().iter().map(|l| l.to_f64()).collect();
    let dropped = sp.untrusted().iter().map(|l| l.to_f64()).sum();
    (lambdas, dropped)
}

/// Fraction of samples with `S ≤ ε²`. The reported standard error is that of
/// `ln p̂` (delta method): `√(p̂(1−p̂)/n)/p̂`.
pub fn estimate_small_ball_mc(sp: &Spectrum, eps: f64, n_samples: usize, seed: u64) -> Result<SmallBallEstimate> {
    estimate_small_ball_mc_values(&split_trusted(sp).0, eps, n_samples, seed)
}

/// [`estimate_small_ball_mc`] for an explicit coefficient list.
pub fn estimate_small_ball_mc_values(lambdas: &[f64], eps: f64, n_samples: usize, seed: u64) -> Result<SmallBallEstimate> {
    if !(eps > 0.0) {
        return Err(Error::OutOfRange(format!("eps = {eps} must be positive")));
    }
    if n_samples == 0 {
        return Err(Error::OutOfRange("n_samples must be positive".into()));
    }
    if lambdas.is_empty() {
        return Err(Error::SmallBall("no trusted eigenvalues to sample from".into()));
    }
    let r = eps * eps;
    let hits = sample_values(lambdas, n_samples, seed)
        .iter().filter(|&&s| s <= r).count();
    if hits == 0 {
        return Err(Error::SmallBall(format!(
            "no Monte Carlo sample fell below eps = {eps:e} in {n_samples} draws; use the saddlepoint method"
        )));
    }
    let n = n_samples as f64;
    let p = hits as f64 / n;
    Ok(SmallBallEstimate {
        eps,
        log_prob: p.ln(),
        method: Method::Mc,
        stderr: Some((p * (1.0 - p) / n).sqrt() / p),
        n_samples: Some(n_samples),
        seed: Some(seed),
        truncation_shift: None,
    })
}

/// `Φ(x)/φ(x)` for `x ≤ 0`, accurate far into the left tail.
fn mills(x: f64) -> f64 {
    if x > -5.0 {
        let phi = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
        return 0.5 * erfc(-x / std::f64::consts::SQRT_2) / phi;
    }
    // Φ(x)/φ(x) = 1/(t + 1/(t + 2/(t + 3/(t + …)))) with t = −x.
    let t = -x;
    let mut acc = t;
    for k in (1..=200).rev() {
        acc = t + k as f64 / acc;
    }
    1.0 / acc
}

/// Cumulant-generating quantities of `S` tilted by `−θ`.
struct Tilt {
    /// `Σ λ/(1+2θλ)` (the tilted mean).
    mean: f64,
    /// `½ Σ ln(1+2θλ)`.
    half_log: f64,
    k2: f64,
    k3: f64,
    k4: f64,
}

fn tilt(lambdas: &[f64], theta: f64) -> Tilt {
    let mut t = Tilt { mean: 0.0, half_log: 0.0, k2: 0.0, k3: 0.0, k4: 0.0 };
    for &l in lambdas {
        let a = 2.0 * theta * l;
        let g = l / (1.0 + a);
        t.mean += g;
        t.half_log += 0.5 * a.ln_1p();
        t.k2 += 2.0 * g * g;
        t.k3 += 8.0 * g * g * g;
        t.k4 += 48.0 * g * g * g * g;
    }
    t
}

/// Solves `Σ λ/(1+2θλ) = r` for `θ ≥ 0` by safeguarded Newton iteration.
fn solve_tilt(lambdas: &[f64], r: f64) -> Result<f64> {
    let (mut lo, mut hi) = (0.0, lambdas.len() as f64 / (2.0 * r));
    let mut theta = hi / 2.0;
    for _ in 0..500 {
        let t = tilt(lambdas, theta);
        let f = t.mean - r;
        if f > 0.0 {
            lo = theta;
        } else {
            hi = theta;
        }
        // d/dθ Σ λ/(1+2θλ) = −Σ 2λ²/(1+2θλ)² = −k2
        let newton = theta + f / t.k2;
        let next = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if (next - theta).abs() <= ROOT_TOL * next.abs() || hi - lo <= ROOT_TOL * hi {
            return Ok(next);
        }
        theta = next;
    }
    Err(Error::SmallBall(format!("saddlepoint root for r = {r:e} did not converge")))
}

/// Second-order Lugannani–Rice approximation of `ln P{S ≤ ε²}` using the
/// trusted eigenvalues.
pub fn log_small_ball_saddlepoint(sp: &Spectrum, eps: f64) -> Result<SmallBallEstimate> {
    let (lambdas, dropped) = split_trusted(sp);
    let (log_prob, theta) = saddlepoint(&lambdas, eps)?;
    let mut est = SmallBallEstimate::plain(eps, log_prob, Method::Saddlepoint);
    est.truncation_shift = Some(theta * dropped);
    Ok(est)
}

/// [`log_small_ball_saddlepoint`] for an explicit coefficient list (repeated
/// values are kept).
pub fn log_small_ball_saddlepoint_values(lambdas: &[f64], eps: f64) -> Result<SmallBallEstimate> {
    let (log_prob, _) = saddlepoint(lambdas, eps)?;
    Ok(SmallBallEstimate::plain(eps, log_prob, Method::Saddlepoint))
}

/// `(ln P, θ*)`.
fn saddlepoint(lambdas: &[f64], eps: f64) -> Result<(f64, f64)> {
    if !(eps > 0.0) {
        return Err(Error::OutOfRange(format!("eps = {eps} must be positive")));
    }
    if lambdas.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::OutOfRange("quadratic-form coefficients must be positive".into()));
    }
    if lambdas.is_empty() {
        return Err(Error::SmallBall("no trusted eigenvalues to build the quadratic form from".into()));
    }
    let total: f64 = lambdas.iter().sum();
    let r = eps * eps;
    if r >= total {
        return Err(Error::SmallBall(format!(
            "eps² = {r:e} is not in the left tail (E S = {total:e}); the saddlepoint route covers P{{S ≤ ε²}} below the mean"
        )));
    }
    let theta = solve_tilt(lambdas, r)?;
    let t = tilt(lambdas, theta);
    let w = -(2.0 * (t.half_log - theta * r)).max(0.0).sqrt();
    let u = -theta * t.k2.sqrt();
    let k3 = t.k3 / t.k2.powf(1.5);
    let k4 = t.k4 / (t.k2 * t.k2);
    let bracket = mills(w) + 1.0 / w - 1.0 / u - (1.0 / u) * (k4 / 8.0 - 5.0 * k3 * k3 / 24.0) + 1.0 / u.powi(3)
        + k3 / (2.0 * u * u)
        - 1.0 / w.powi(3);
    if !(bracket > 0.0) || !w.is_finite() || w == 0.0 {
        return Err(Error::SmallBall(format!("saddlepoint approximation breaks down at eps = {eps:e}")));
    }
    let log_phi = -0.5 * w * w - 0.5 * (2.0 * std::f64::consts::PI).ln();
    Ok((log_phi + bracket.ln(), theta))
}

/// Constants of the logarithmic asymptotics `ln P ∼ −C·ln²(1/ε)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AsymptoticParams {
    pub c: f64,
    pub q: f64,
    pub n: usize,
    pub ell: usize,
}

pub fn asymptotic_params(spec: &MeasureSpec, k: &KernelSpec) -> Result<AsymptoticParams> {
    let report = validate(spec);
    if !report.valid {
        return Err(Error::InvalidMeasure(report.to_string().trim_end().to_string()));
    }
    let ell = operator_order(k);
    let (c, q) = theoretical_slope(spec, ell);
    Ok(AsymptoticParams { c, q, n: spec.n(), ell })
}

/// `−(1/2)∫_{1/u}^1 φ(z) dz/z` for `φ(λ) = C·ln(1/λ)`, i.e. `−(C/4)·ln² u`,
/// where `u > e` solves `φ(1/u)/(2u) = r`, i.e. `C·ln u = 2ru`.
pub fn asymptotic_integral(c: f64, r: f64) -> Result<f64> {
    if !(c > 0.0 && r > 0.0) {
        return Err(Error::OutOfRange(format!("need C > 0 and r > 0 (C = {c}, r = {r})")));
    }
    // C·ln(u)/(2u) peaks at u = e with value C/(2e).
    if r >= c / (2.0 * std::f64::consts::E) {
        return Err(Error::SmallBall(format!("r = {r:e} too large: C·ln(u)/(2u) = r has no solution with u > e")));
    }
    // v = ln u solves v = ln(C·v/(2r)); the map is a contraction for v > 1.
    let k = (c / (2.0 * r)).ln();
    let mut v = k.max(1.0);
    for _ in 0..200 {
        let next = k + v.ln();
        if (next - v).abs() <= 1e-15 * next {
            v = next;
            break;
        }
        v = next;
    }
    Ok(-0.25 * c * v * v)
}

/// `−C·ln²(1/ε)` with `C = (n−1)/ln(1/(ρ·a_m^{2ℓ−1}))`.
pub fn asymptotic_log_small_ball(spec: &MeasureSpec, k: &KernelSpec, eps: f64) -> Result<SmallBallEstimate> {
    if !(eps > 0.0) {
        return Err(Error::OutOfRange(format!("eps = {eps} must be positive")));
    }
    let p = asymptotic_params(spec, k)?;
    let l = (1.0 / eps).ln();
    Ok(SmallBallEstimate::plain(eps, -p.c * l * l, Method::Asymptotic))
}

/// Least-squares fit `ln P ≈ a·L² + b·L + c` with `L = ln(1/ε)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LogSquareFit {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub points_used: usize,
}

/// Fits the quadratic-in-`ln(1/ε)` model to `(ε, ln P)` pairs. The leading
/// coefficient `a` estimates `−C` of `ln P ∼ −C·ln²(1/ε)`.
pub fn fit_log_square(points: &[(f64, f64)]) -> Result<LogSquareFit> {
    if points.iter().any(|&(e, lp)| !(e > 0.0) || !lp.is_finite()) {
        return Err(Error::OutOfRange("log-square fit needs positive eps and finite ln P".into()));
    }
    let n = points.len();
    if n < 3 {
        return Err(Error::Fit(format!("log-square fit needs at least three points, got {n}")));
    }
    let x = DMatrix::from_fn(n, 3, |i, j| (1.0 / points[i].0).ln().powi(2 - j as i32));
    let y = DVector::from_iterator(n, points.iter().map(|p| p.1));
    let svd = x.svd(true, true);
    let rank = svd.rank(1e-12 * svd.singular_values.max());
    if rank < 3 {
        return Err(Error::Fit(format!("log-square fit needs three distinct eps values (design rank {rank})")));
    }
    let sol = svd.solve(&y, 0.0).map_err(|e| Error::Fit(e.to_string()))?;
    Ok(LogSquareFit { a: sol[0], b: sol[1], c: sol[2], points_used: n })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mills_ratio_matches_reference_values() {
        // Φ(x)/φ(x) to 15 digits on both sides of the branch switch.
        for (x, r) in [
            (0.0, (std::f64::consts::PI / 2.0).sqrt()),
            (-2.0, 0.421369229288054473),
            (-4.999999, 0.192808140674798699),
            (-5.0, 0.192808104715315765),
            (-8.0, 0.123131963257932296),
            (-30.0, 0.0332964190724972134),
        ] {
            assert!((mills(x) - r).abs() < 1e-12 * r.max(1e-1) + 1e-16, "x = {x}: {} vs {r}", mills(x));
        }
    }

    #[test]
    fn tilt_root_solves_the_mean_equation() {
        let l = [1.0, 0.3, 0.01];
        let theta = solve_tilt(&l, 0.05).unwrap();
        assert!((tilt(&l, theta).mean - 0.05).abs() < 1e-14);
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("laplace".parse::<Method>().is_err());
    }

    #[test]
    fn log_square_fit_recovers_an_exact_quadratic() {
        let pts: Vec<(f64, f64)> = [1e-1, 1e-3, 1e-5, 1e-8]
            .iter()
            .map(|&e: &f64| {
                let l = (1.0 / e).ln();
                (e, -0.7 * l * l + 0.3 * l - 2.0)
            })
            .collect();
        let f = fit_log_square(&pts).unwrap();
        assert!((f.a + 0.7).abs() < 1e-10 && (f.b - 0.3).abs() < 1e-9 && (f.c + 2.0).abs() < 1e-8);
        assert!(fit_log_square(&pts[..2]).is_err());
        assert!(fit_log_square(&[]).is_err());
        assert!(fit_log_square(&[(0.1, -1.0), (0.1, -1.0), (0.1, -1.0)]).is_err());
    }
}
