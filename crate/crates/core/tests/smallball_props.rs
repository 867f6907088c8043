use proptest::prelude::*;

use selfsim::kernel::{KernelSpec, Process};
use selfsim::measure::MeasureSpec;
use selfsim::smallball::{
    asymptotic_integral, asymptotic_log_small_ball, asymptotic_params, estimate_small_ball_mc_values,
    log_small_ball_saddlepoint_values, sample_quadratic_form, sample_values, write_estimates_csv, Method,
};
use selfsim::spectrum::{compute_spectrum, Spectrum};
use selfsim::Error;

fn erf(x: f64) -> f64 {
    1.0 - libm::erfc(x)
}

/// `ln P(ξ² ≤ ε²)` for a single standard normal.
fn chi1_log_cdf(eps: f64) -> f64 {
    erf(eps / std::f64::consts::SQRT_2).ln()
}

#[test]
fn chi_square_samples_have_unit_mean_and_are_reproducible() {
    let s = sample_values(&[1.0], 200_000, 11);
    let mean = s.iter().sum::<f64>() / s.len() as f64;
    // Var ξ² = 2, so the standard error of the mean is √(2/n) ≈ 0.0032.
    assert!((mean - 1.0).abs() < 4.0 * (2.0f64 / 2e5).sqrt(), "mean {mean}");
    assert_eq!(s, sample_values(&[1.0], 200_000, 11));
    assert_ne!(s, sample_values(&[1.0], 200_000, 12));
    // Prefixes agree: sample i depends only on (seed, i).
    assert_eq!(&s[..5000], &sample_values(&[1.0], 5000, 11)[..]);
}

#[test]
fn monte_carlo_matches_the_normal_distribution() {
    for (eps, p) in [(1.0, 0.682_689_492_137_085_9f64), (0.1, 0.079_655_674_554_057_96)] {
        let e = estimate_small_ball_mc_values(&[1.0], eps, 400_000, 5).unwrap();
        assert_eq!(e.method, Method::Mc);
        let se = e.stderr.unwrap();
        assert!((e.log_prob - p.ln()).abs() < 3.0 * se, "eps = {eps}: {} vs {} (se {se})", e.log_prob, p.ln());
        assert_eq!((e.n_samples, e.seed), (Some(400_000), Some(5)));
    }
    let all = estimate_small_ball_mc_values(&[1.0, 0.5], 1e6, 1000, 1).unwrap();
    assert_eq!(all.log_prob, 0.0);
    assert!(matches!(estimate_small_ball_mc_values(&[1.0], 1e-9, 1000, 1), Err(Error::SmallBall(_))));
    assert!(estimate_small_ball_mc_values(&[1.0], 0.0, 1000, 1).is_err());
    assert!(estimate_small_ball_mc_values(&[1.0], 0.1, 0, 1).is_err());
}

#[test]
fn saddlepoint_examples() {
    let e = log_small_ball_saddlepoint_values(&[1.0], 0.01).unwrap();
    assert_eq!(e.method, Method::Saddlepoint);
    assert!((e.log_prob / -4.8314 - 1.0).abs() < 0.02, "{}", e.log_prob);
    assert!((e.log_prob / chi1_log_cdf(0.01) - 1.0).abs() < 0.02);
    // Two equal coefficients 1/2: S is exponential with unit mean.
    let r: f64 = 1e-3;
    let e = log_small_ball_saddlepoint_values(&[0.5, 0.5], r.sqrt()).unwrap();
    let exact = (-(-r).exp_m1()).ln();
    assert!((e.log_prob / exact - 1.0).abs() < 0.02, "{} vs {exact}", e.log_prob);
    assert!(log_small_ball_saddlepoint_values(&[1.0], -1.0).is_err());
    assert!(log_small_ball_saddlepoint_values(&[], 0.1).is_err());
}

#[test]
fn saddlepoint_reports_the_truncation_shift() {
    let sp = Spectrum::from_f64(&[1.0, 0.1, 0.01, 1e-4, 1e-6], 1e-5);
    let e = selfsim::smallball::log_small_ball_saddlepoint(&sp, 0.05).unwrap();
    let shift = e.truncation_shift.unwrap();
    assert!(shift > 0.0 && shift < 1e-2, "{shift}");
    let q = sample_quadratic_form(&sp, 10, 3);
    assert_eq!(q.samples.len(), 10);
    assert!((q.tail_bound - 1e-6).abs() < 1e-20);
}

#[test]
fn asymptotic_integral_properties() {
    // ln P ≈ −63 at C = 1, r = 1e-6: the quadratic coefficient is what matters.
    let v = asymptotic_integral(1.0, 1e-6).unwrap();
    let l = (1e-6f64).ln();
    assert!((v / (-0.25 * l * l) - 1.0).abs() < 0.35, "{v}");
    assert!(v < -50.0 && v > -80.0);
    assert!(matches!(asymptotic_integral(1.0, 0.5), Err(Error::SmallBall(_))));
    assert!(asymptotic_integral(0.0, 1e-3).is_err());
    assert!(asymptotic_integral(1.0, -1e-3).is_err());
}

#[test]
fn asymptotic_formula_examples() {
    let fig = MeasureSpec::figure();
    let w = asymptotic_log_small_ball(&fig, &KernelSpec::wiener(), 1e-3).unwrap();
    assert!((w.log_prob + 53.26).abs() < 0.01, "{}", w.log_prob);
    let k2 = KernelSpec::integrated(Process::Wiener, None, &[0]).unwrap();
    let a = asymptotic_log_small_ball(&fig, &k2, 1e-3).unwrap();
    assert!((a.log_prob + 30.03).abs() < 0.01, "{}", a.log_prob);
    let sq = asymptotic_log_small_ball(&fig, &KernelSpec::wiener(), 1e-6).unwrap();
    assert!((sq.log_prob / w.log_prob - 4.0).abs() < 1e-12);
    let p = asymptotic_params(&fig, &k2).unwrap();
    assert_eq!((p.n, p.ell), (3, 2));
    assert!((p.q - 24.0).abs() < 1e-12);
}

#[test]
fn tail_bound_shrinks_with_depth() {
    let fig = MeasureSpec::figure();
    let k = KernelSpec::wiener();
    let bounds: Vec<f64> = [6, 10, 14]
        .iter()
        .map(|&d| sample_quadratic_form(&compute_spectrum(&fig, &k, d, 128).unwrap(), 1, 0).tail_bound)
        .collect();
    assert!(bounds.windows(2).all(|b| b[1] <= b[0]), "{bounds:?}");
}

#[test]
fn csv_rows_keep_the_callers_eps_text() {
    let e = log_small_ball_saddlepoint_values(&[1.0], 0.1).unwrap();
    let mut out = Vec::new();
    write_estimates_csv(&mut out, &[("0.1".into(), e.clone())]).unwrap();
    let text = String::from_utf8(out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("eps,log_prob,method,stderr,n_samples,seed"));
    assert_eq!(lines.next().unwrap(), format!("0.1,{},saddlepoint,,,", e.log_prob));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn saddlepoint_is_monotone_in_eps(
        lambdas in proptest::collection::vec(1e-4..1.0f64, 1..12),
        e1 in 1e-3..0.5f64,
        factor in 1.01..3.0f64,
    ) {
        let total: f64 = lambdas.iter().sum();
        prop_assume!((e1 * factor).powi(2) < 0.25 * total);
        let a = log_small_ball_saddlepoint_values(&lambdas, e1).unwrap().log_prob;
        let b = log_small_ball_saddlepoint_values(&lambdas, e1 * factor).unwrap().log_prob;
        prop_assert!(a < b && b <= 0.0, "{} !< {}", a, b);
    }

    #[test]
    fn single_term_saddlepoint_tracks_the_exact_cdf(eps in 1e-4..0.3f64) {
        let e = log_small_ball_saddlepoint_values(&[1.0], eps).unwrap().log_prob;
        prop_assert!((e / chi1_log_cdf(eps) - 1.0).abs() < 0.02);
    }

    #[test]
    fn asymptotic_integral_is_linear_in_c_at_fixed_root(c in 0.1..5.0f64, v in 2.0..40.0f64) {
        // Choosing r = C·v/(2e^v) puts the root at ln u = v for every C.
        let r = c * v / (2.0 * v.exp());
        let got = asymptotic_integral(c, r).unwrap();
        prop_assert!((got / (-0.25 * c * v * v) - 1.0).abs() < 1e-9);
    }
}
