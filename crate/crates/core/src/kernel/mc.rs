//! Monte Carlo covariance oracle.
//!
//! Paths are simulated on a uniform lattice of `[0, 1]` by constructions that
//! do not reuse the closed-form covariances being tested:
//!
//! * Wiener-derived processes from independent Gaussian increments, with
//!   bridging, centering and elongation applied pathwise;
//! * Ornstein–Uhlenbeck and Matérn processes from their exact linear-SDE
//!   transitions (state dimension `𝔰 + 1` for Matérn);
//! * the Bogolyubov (periodic) process by circulant embedding with an FFT;
//! * integrations and centerings by the cumulative trapezoid rule;
//! * the bridged integrated Wiener process by regressing the path on the
//!   simulated constraint values `W_j(1)` (an empirical conditioning).
//!
//! Path `i` draws its normals from stream `(seed, i)`, so the result does not
//! depend on chunking or the number of worker threads.

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix};
use rayon::prelude::*;
use rustfft::{num_complex::Complex, Fft, FftPlanner};

use super::{closed, CovMatrix, KernelSpec, Process};
use crate::error::{Error, Result};
use crate::rng::NormalStream;

#[derive(Clone, Debug)]
pub struct McOptions {
    /// Lattice steps on `[0, 1]`; grid points must be lattice points.
    pub steps: usize,
    /// Paths per work unit.
    pub chunk: usize,
    /// Worker threads (`None`: the global rayon pool).
    pub threads: Option<usize>,
}

impl Default for McOptions {
    fn default() -> Self {
        McOptions { steps: 200, chunk: 2048, threads: None }
    }
}

/// Empirical covariance of `n_paths` simulated paths on `grid`.
pub fn mc_covariance_oracle(k: &KernelSpec, grid: &[f64], n_paths: usize, seed: u64) -> Result<CovMatrix> {
    mc_covariance_oracle_with(k, grid, n_paths, seed, &McOptions::default())
}

pub fn mc_covariance_oracle_with(
    k: &KernelSpec,
    grid: &[f64],
    n_paths: usize,
    seed: u64,
    opts: &McOptions,
) -> Result<CovMatrix> {
    if n_paths < 2 {
        return Err(Error::OutOfRange(format!("n_paths = {n_paths}, need at least 2")));
    }
    let steps = opts.steps.max(1);
    let idx = grid
        .iter()
        .map(|&g| {
            let x = g * steps as f64;
            let i = x.round();
            if !(0.0..=1.0).contains(&g) || (x - i).abs() > 1e-9 {
                Err(Error::OutOfRange(format!("grid point {g} is not on the {steps}-step simulation lattice")))
            } else {
                Ok(i as usize)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let sim = Simulator::new(k, steps)?;
    let width = sim.feature_width(idx.len());
    let run = || -> Vec<Vec<f64>> {
        let chunks: Vec<(usize, usize)> =
            (0..n_paths).step_by(opts.chunk.max(1)).map(|s| (s, (s + opts.chunk.max(1)).min(n_paths))).collect();
        chunks
            .into_par_iter()
            .map(|(a, b)| {
                let mut rows = Vec::with_capacity((b - a) * width);
                let mut path = vec![0.0; steps + 1];
                let mut scratch = Scratch::new(steps);
                for p in a..b {
                    let mut rng = NormalStream::new(seed, p as u64);
                    sim.features(&mut rng, &idx, &mut path, &mut scratch, &mut rows);
                }
                rows
            })
            .collect()
    };
    let rows: Vec<f64> = match opts.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t.max(1))
            .build()
            .map_err(|e| Error::OutOfRange(format!("thread pool: {e}")))?
            .install(run),
        None => run(),
    }
    .concat();
    let values = sim.finish(rows, idx.len(), n_paths)?;
    Ok(second_moments(grid, &values, idx.len(), n_paths))
}

/// `mean(X_i X_j)` and its standard error for zero-mean samples.
fn second_moments(grid: &[f64], values: &[f64], m: usize, n: usize) -> CovMatrix {
    let mut sum = vec![0.0; m * m];
    let mut sum_sq = vec![0.0; m * m];
    for row in values.chunks_exact(m) {
        for i in 0..m {
            for j in i..m {
                let v = row[i] * row[j];
                sum[i * m + j] += v;
                sum_sq[i * m + j] += v * v;
            }
        }
    }
    let nf = n as f64;
    let mut cov = vec![0.0; m * m];
    let mut se = vec![0.0; m * m];
    for i in 0..m {
        for j in i..m {
            let mean = sum[i * m + j] / nf;
            let var = ((sum_sq[i * m + j] / nf - mean * mean) * nf / (nf - 1.0)).max(0.0);
            let s = (var / nf).sqrt();
            for (a, b) in [(i, j), (j, i)] {
                cov[a * m + b] = mean;
                se[a * m + b] = s;
            }
        }
    }
    CovMatrix::new(grid.to_vec(), cov, Some(se))
}

struct Scratch {
    aux: Vec<f64>,
    fft: Vec<Complex<f64>>,
}

impl Scratch {
    fn new(steps: usize) -> Self {
        Scratch { aux: vec![0.0; steps + 1], fft: vec![Complex::new(0.0, 0.0); steps] }
    }
}

enum Base {
    Wiener,
    Bridge,
    Elongated(f64),
    Slepian(f64),
    Ou { alpha: f64, stationary: bool },
    Periodic { sqrt_eig: Vec<f64>, fft: Arc<dyn Fft<f64>> },
    /// Row-major `d × d` transition, transition-noise and stationary factors.
    StateSpace { d: usize, phi: Vec<f64>, q_chol: Vec<f64>, p_chol: Vec<f64> },
}

#[derive(Clone, Copy)]
enum Post {
    /// Integrations with endpoints (innermost first).
    None,
    /// Centering, then integrations with endpoints.
    Center,
    /// Alternate integration from 0 and centering, `n` times, after centering.
    CenterIntegrate(usize),
    /// Keep `W_0 … W_𝔰`; the last is regressed on the values at 1.
    Bridged(usize),
}

struct Simulator<'a> {
    base: Base,
    post: Post,
    endpoints: &'a [bool],
    h: f64,
    steps: usize,
}

impl<'a> Simulator<'a> {
    fn new(k: &'a KernelSpec, steps: usize) -> Result<Self> {
        let a = k.param_f64().unwrap_or(0.0);
        let h = 1.0 / steps as f64;
        let mut post = Post::None;
        let base = match k.process() {
            Process::Wiener => Base::Wiener,
            Process::BrownianBridge => Base::Bridge,
            Process::CenteredWiener => {
                post = Post::Center;
                Base::Wiener
            }
            Process::CenteredBridge => {
                post = Post::Center;
                Base::Bridge
            }
            Process::CenteredIntegratedWiener => {
                post = Post::CenterIntegrate(k.integrations());
                Base::Wiener
            }
            Process::CenteredIntegratedBridge => {
                post = Post::CenterIntegrate(k.integrations());
                Base::Bridge
            }
            Process::BridgedIntegratedWiener => {
                post = Post::Bridged(k.integrations());
                Base::Wiener
            }
            Process::ElongatedBridge => Base::Elongated(a),
            Process::Slepian => Base::Slepian(a),
            Process::OuStationary => Base::Ou { alpha: a, stationary: true },
            Process::OuZero => Base::Ou { alpha: a, stationary: false },
            Process::Bogolyubov => {
                // Circulant eigenvalues from the spectral density 1/(α² + ω²)
                // of the periodic process, aliased onto `steps` frequencies:
                // λ_k = sinh(αh) / (2α (cosh(αh) − cos(2πk/N))).
                let n = steps as f64;
                let sqrt_eig = (0..steps)
                    .map(|j| {
                        let w = 2.0 * std::f64::consts::PI * j as f64 / n;
                        let lam = (a * h).sinh() / (2.0 * a * ((a * h).cosh() - w.cos()));
                        (lam / n).sqrt()
                    })
                    .collect::<Vec<_>>();
                let fft = FftPlanner::new().plan_fft_forward(steps);
                Base::Periodic { sqrt_eig, fft }
            }
            Process::Matern => matern_state_space(k.integrations(), h)?,
        };
        Ok(Simulator { base, post, endpoints: k.endpoints(), h, steps })
    }

    fn feature_width(&self, m: usize) -> usize {
        match self.post {
            Post::Bridged(s) => m + s + 1,
            _ => m,
        }
    }

    fn base_path(&self, rng: &mut NormalStream, x: &mut [f64], scratch: &mut Scratch) {
        let n = self.steps;
        let sh = self.h.sqrt();
        let wiener = |rng: &mut NormalStream, x: &mut [f64]| {
            x[0] = 0.0;
            for i in 0..n {
                x[i + 1] = x[i] + sh * rng.next_normal();
            }
        };
        match &self.base {
            Base::Wiener => wiener(rng, x),
            Base::Bridge | Base::Elongated(_) => {
                wiener(rng, x);
                let u = if let Base::Elongated(u) = self.base { u } else { 1.0 };
                let end = x[n];
                for (i, v) in x.iter_mut().enumerate() {
                    *v -= u * (i as f64 * self.h) * end;
                }
            }
            Base::Slepian(c) => {
                // W(t + c) − W(t) = W(1) + √(c−1)·ξ + W'(t) − W(t), W' independent.
                wiener(rng, x);
                let shift = x[n] + (c - 1.0).sqrt() * rng.next_normal();
                let w2 = &mut scratch.aux;
                wiener(rng, w2);
                for i in 0..=n {
                    x[i] = shift + w2[i] - x[i];
                }
            }
            Base::Ou { alpha, stationary } => {
                let phi = (-alpha * self.h).exp();
                let sd = (-(-2.0 * alpha * self.h).exp_m1() / (2.0 * alpha)).sqrt();
                x[0] = if *stationary { rng.next_normal() / (2.0 * alpha).sqrt() } else { 0.0 };
                for i in 0..n {
                    x[i + 1] = phi * x[i] + sd * rng.next_normal();
                }
            }
            Base::Periodic { sqrt_eig, fft } => {
                let buf = &mut scratch.fft;
                for (z, s) in buf.iter_mut().zip(sqrt_eig) {
                    let re = rng.next_normal();
                    let im = rng.next_normal();
                    *z = Complex::new(s * re, s * im);
                }
                fft.process(buf);
                for i in 0..n {
                    x[i] = buf[i].re;
                }
                x[n] = x[0];
            }
            Base::StateSpace { d, phi, q_chol, p_chol } => {
                let d = *d;
                let mut z = vec![0.0; d];
                let mut state = vec![0.0; d];
                let mut next = vec![0.0; d];
                z.iter_mut().for_each(|v| *v = rng.next_normal());
                mat_vec(p_chol, &z, &mut state);
                x[0] = state[0];
                for v in x.iter_mut().skip(1) {
                    z.iter_mut().for_each(|v| *v = rng.next_normal());
                    mat_vec(phi, &state, &mut next);
                    mat_vec_add(q_chol, &z, &mut next);
                    std::mem::swap(&mut state, &mut next);
                    *v = state[0];
                }
            }
        }
    }

    fn features(
        &self,
        rng: &mut NormalStream,
        idx: &[usize],
        x: &mut [f64],
        scratch: &mut Scratch,
        out: &mut Vec<f64>,
    ) {
        self.base_path(rng, x, scratch);
        match self.post {
            Post::None | Post::Center => {
                if matches!(self.post, Post::Center) {
                    center(x, self.h);
                }
                for &beta in self.endpoints {
                    cumulative_trapezoid(x, self.h);
                    if beta {
                        let total = x[self.steps];
                        x.iter_mut().for_each(|v| *v -= total);
                    }
                }
            }
            Post::CenterIntegrate(s) => {
                center(x, self.h);
                for _ in 0..s {
                    cumulative_trapezoid(x, self.h);
                    center(x, self.h);
                }
            }
            Post::Bridged(s) => {
                let mut ends = Vec::with_capacity(s + 1);
                ends.push(x[self.steps]);
                for _ in 0..s {
                    cumulative_trapezoid(x, self.h);
                    ends.push(x[self.steps]);
                }
                out.extend(idx.iter().map(|&i| x[i]));
                out.extend(ends);
                return;
            }
        }
        out.extend(idx.iter().map(|&i| x[i]));
    }

    /// Turns per-path features into grid values (regression for bridging).
    fn finish(&self, rows: Vec<f64>, m: usize, n: usize) -> Result<Vec<f64>> {
        let Post::Bridged(s) = self.post else {
            return Ok(rows);
        };
        let w = m + s + 1;
        let c = s + 1;
        // Sample second moments of the constraints V and cross moments with X.
        let mut svv = DMatrix::<f64>::zeros(c, c);
        let mut svx = DMatrix::<f64>::zeros(c, m);
        for row in rows.chunks_exact(w) {
            let (xs, vs) = row.split_at(m);
            for a in 0..c {
                for b in 0..c {
                    svv[(a, b)] += vs[a] * vs[b];
                }
                for j in 0..m {
                    svx[(a, j)] += vs[a] * xs[j];
                }
            }
        }
        let chol = Cholesky::new(svv).ok_or_else(|| Error::Cholesky("constraint sample covariance".into()))?;
        let coef = chol.solve(&svx); // c × m regression coefficients
        let mut out = Vec::with_capacity(n * m);
        for row in rows.chunks_exact(w) {
            let (xs, vs) = row.split_at(m);
            for j in 0..m {
                let fit: f64 = (0..c).map(|a| coef[(a, j)] * vs[a]).sum();
                out.push(xs[j] - fit);
            }
        }
        Ok(out)
    }
}

fn mat_vec(a: &[f64], x: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    mat_vec_add(a, x, out);
}

fn mat_vec_add(a: &[f64], x: &[f64], out: &mut [f64]) {
    let d = x.len();
    for (i, o) in out.iter_mut().enumerate() {
        *o += a[i * d..(i + 1) * d].iter().zip(x).map(|(p, q)| p * q).sum::<f64>();
    }
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    (0..m.nrows()).flat_map(|i| (0..m.ncols()).map(move |j| m[(i, j)])).collect()
}

fn cumulative_trapezoid(x: &mut [f64], h: f64) {
    let mut acc = 0.0;
    let mut prev = x[0];
    x[0] = 0.0;
    for v in x.iter_mut().skip(1) {
        let cur = *v;
        acc += 0.5 * h * (prev + cur);
        prev = cur;
        *v = acc;
    }
}

fn center(x: &mut [f64], h: f64) {
    let n = x.len() - 1;
    let integral = h * (x[1..n].iter().sum::<f64>() + 0.5 * (x[0] + x[n]));
    x.iter_mut().for_each(|v| *v -= integral);
}

/// Exact one-step transition of the Matérn process of order `s + 1` as a
/// stationary linear SDE `(D + 1)^{s+1} X = noise` on the state
/// `(X, X′, …, X^{(s)})`.
fn matern_state_space(s: usize, h: f64) -> Result<Base> {
    let d = s + 1;
    // Companion matrix of (D + 1)^d.
    let mut f = DMatrix::<f64>::zeros(d, d);
    for i in 0..d - 1 {
        f[(i, i + 1)] = 1.0;
    }
    for j in 0..d {
        f[(d - 1, j)] = -closed::factorial(d) / (closed::factorial(j) * closed::factorial(d - j));
    }
    // Stationary covariance from the derivatives of k(τ) at 0:
    // Cov(X^{(i)}, X^{(j)}) = (−1)^j k^{(i+j)}(0).
    let derivs = matern_derivatives_at_zero(s, 2 * s);
    let p = DMatrix::from_fn(d, d, |i, j| {
        let m = i + j;
        if m % 2 == 1 {
            0.0
        } else if j % 2 == 0 {
            derivs[m]
        } else {
            -derivs[m]
        }
    });
    let phi = (f * h).exp();
    let mut q = &p - &phi * &p * phi.transpose();
    q = (&q + q.transpose()) * 0.5;
    let q_chol = Cholesky::new(q).ok_or_else(|| Error::Cholesky("Matérn transition covariance".into()))?.l();
    let p_chol = Cholesky::new(p).ok_or_else(|| Error::Cholesky("Matérn stationary covariance".into()))?.l();
    Ok(Base::StateSpace { d, phi: row_major(&phi), q_chol: row_major(&q_chol), p_chol: row_major(&p_chol) })
}

/// `k^{(m)}(0+)` for `m = 0..=max` where `k(τ) = e^{−τ} p(τ)`.
fn matern_derivatives_at_zero(s: usize, max: usize) -> Vec<f64> {
    // p as coefficients in τ.
    let norm = 1.0 / (2f64.powi(2 * s as i32 + 1) * closed::factorial(s));
    let mut p = vec![0.0; s + 1];
    for k in 0..=s {
        let m = s - k;
        p[m] += norm * closed::factorial(s + k) / (closed::factorial(k) * closed::factorial(m)) * 2f64.powi(m as i32);
    }
    let mut out = Vec::with_capacity(max + 1);
    for _ in 0..=max {
        out.push(p[0]);
        // d/dτ (e^{−τ} p) = e^{−τ} (p′ − p)
        let mut next = vec![0.0; p.len()];
        for (i, c) in p.iter().enumerate() {
            next[i] -= c;
            if i > 0 {
                next[i - 1] += i as f64 * c;
            }
        }
        p = next;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matern_derivatives() {
        // Order 2: k(τ) = e^{−τ}(1 + τ)/4, k(0) = 1/4, k″(0) = −1/4.
        let d = matern_derivatives_at_zero(1, 2);
        assert!((d[0] - 0.25).abs() < 1e-15);
        assert!(d[1].abs() < 1e-15);
        assert!((d[2] + 0.25).abs() < 1e-15);
    }

    #[test]
    fn off_lattice_grid_is_rejected() {
        let r = mc_covariance_oracle(&KernelSpec::wiener(), &[0.123456], 10, 1);
        assert!(matches!(r, Err(Error::OutOfRange(_))));
        assert!(mc_covariance_oracle(&KernelSpec::wiener(), &[0.5], 1, 1).is_err());
    }

    #[test]
    fn trapezoid_helpers() {
        let mut x: Vec<f64> = (0..=4).map(|i| i as f64 / 4.0).collect();
        cumulative_trapezoid(&mut x, 0.25);
        assert!((x[4] - 0.5).abs() < 1e-15);
        center(&mut x, 0.25);
        let h = 0.25;
        let integral = h * (x[1] + x[2] + x[3] + 0.5 * (x[0] + x[4]));
        assert!(integral.abs() < 1e-15);
    }
}
