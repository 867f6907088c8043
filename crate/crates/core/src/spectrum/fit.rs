//! Counting-function slope fits.

use rustfft::{num_complex::Complex, FftPlanner};
use serde::Serialize;

use super::Spectrum;
use crate::error::{Error, Result};

/// Minimum number of eigenvalues a fit may use.
pub const MIN_FIT_POINTS: usize = 5;

/// Least-squares line `j ≈ slope·ln(1/λ_j) + intercept` through the
/// eigenvalues inside a window.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope.
    pub stderr: f64,
    /// `(λ_hi, λ_lo)`.
    pub window: (f64, f64),
    pub points_used: usize,
    /// `(ln(1/λ_j), j − fitted)` for every point used.
    pub residuals: Vec<(f64, f64)>,
}

impl SlopeFit {
    /// Periodogram `|DFT(r)|²/n` of the residual sequence at frequencies
    /// `1..=n/2` (cycles per fitted point), for spotting a periodic component.
    pub fn periodogram(&self) -> Vec<(usize, f64)> {
        let n = self.residuals.len();
        if n < 2 {
            return Vec::new();
        }
        let mut buf: Vec<Complex<f64>> = self.residuals.iter().map(|&(_, r)| Complex::new(r, 0.0)).collect();
        FftPlanner::new().plan_fft_forward(n).process(&mut buf);
        (1..=n / 2).map(|f| (f, buf[f].norm_sqr() / n as f64)).collect()
    }
}

/// Plain least squares of `y` on `x` with the slope's standard error.
pub fn least_squares(points: &[(f64, f64)]) -> Result<(f64, f64, f64)> {
    let n = points.len() as f64;
    if points.len() < 2 {
        return Err(Error::Fit(format!("{} points cannot determine a line", points.len())));
    }
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if !(sxx > 0.0) {
        return Err(Error::Fit("degenerate regression: all abscissae are equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = points.iter().map(|p| (p.1 - slope * p.0 - intercept).powi(2)).sum();
    let stderr = if points.len() > 2 { (ssr / (n - 2.0) / sxx).sqrt() } else { 0.0 };
    Ok((slope, intercept, stderr))
}

/// `[λ_max·10⁻³, trust·10³]`, returned as `(λ_hi, λ_lo)`.
pub fn default_window(sp: &Spectrum) -> (f64, f64) {
    (sp.max_eigenvalue() * 1e-3, sp.trust_threshold() * 1e3)
}

/// Fits the counting function on `window` (default: [`default_window`]).
pub fn fit_counting_slope(sp: &Spectrum, window: Option<(f64, f64)>) -> Result<SlopeFit> {
    let (hi, lo) = window.unwrap_or_else(|| default_window(sp));
    if !(hi > lo && lo > 0.0) {
        return Err(Error::Fit(format!("empty window (λ_hi = {hi:e}, λ_lo = {lo:e})")));
    }
    if lo < sp.trust_threshold() {
        return Err(Error::Untrusted { lambda: lo, threshold: sp.trust_threshold() });
    }
    let points: Vec<(f64, f64)> = sp
        .eigenvalues()
        .iter()
        .enumerate()
        .filter_map(|(i, l)| {
            let v = l.to_f64();
            (v <= hi && v >= lo).then(|| (-l.ln().to_f64(), (i + 1) as f64))
        })
        .collect();
    if points.len() < MIN_FIT_POINTS {
        return Err(Error::Fit(format!(
            "{} eigenvalues in [{lo:e}, {hi:e}], need at least {MIN_FIT_POINTS}",
            points.len()
        )));
    }
    let (slope, intercept, stderr) = least_squares(&points)?;
    let residuals = points.iter().map(|&(x, y)| (x, y - slope * x - intercept)).collect();
    Ok(SlopeFit { slope, intercept, stderr, window: (hi, lo), points_used: points.len(), residuals })
}

/// Ratio of the fitted slopes of two spectra on a common window (default:
/// the intersection of both default windows).
pub fn compare_asymptotics(sp1: &Spectrum, sp2: &Spectrum, window: Option<(f64, f64)>) -> Result<f64> {
    let window = window.unwrap_or_else(|| {
        let (h1, l1) = default_window(sp1);
        let (h2, l2) = default_window(sp2);
        (h1.min(h2), l1.max(l2))
    });
    let a = fit_counting_slope(sp1, Some(window))?;
    let b = fit_counting_slope(sp2, Some(window))?;
    Ok(a.slope / b.slope)
}
