use std::sync::OnceLock;

use nalgebra::DMatrix;
use num_rational::BigRational;
use proptest::prelude::*;

use selfsim::kernel::{KernelSpec, Process};
use selfsim::measure::{atoms, AtomList, MeasureSpec};
use selfsim::spectrum::{
    compare_asymptotics, compute_spectrum, counting_function, eigenvalues, fit_counting_slope, gram_matrix,
    least_squares, theoretical_slope, Spectrum, SymMatrix,
};
use selfsim::xprec::XReal;
use selfsim::Error;

fn q(n: i64, d: i64) -> BigRational {
    BigRational::new(n.into(), d.into())
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// Figure measure, wiener kernel, depth 50, 256 bits (shared by several tests).
fn deep_wiener() -> &'static Spectrum {
    static SP: OnceLock<Spectrum> = OnceLock::new();
    SP.get_or_init(|| compute_spectrum(&MeasureSpec::figure(), &KernelSpec::wiener(), 50, 256).unwrap())
}

#[test]
fn gram_matrix_is_exactly_symmetric_and_weighted() {
    let list = atoms(&MeasureSpec::figure(), 3).unwrap();
    let k = KernelSpec::base(Process::Bogolyubov, Some(1.0)).unwrap();
    let m = gram_matrix(&list, &k, 192).unwrap();
    assert_eq!(m.order(), list.len());
    let rows = m.to_f64_rows();
    let locs = list.locations_f64();
    let w = list.weights_f64();
    for i in 0..m.order() {
        assert!(rows[i][i] >= 0.0);
        for j in 0..m.order() {
            assert_eq!(m.get(i, j), m.get(j, i));
            let direct = (w[i] * w[j]).sqrt() * selfsim::kernel::covariance(&k, locs[i], locs[j]).unwrap();
            assert!((rows[i][j] - direct).abs() <= 1e-14 * direct.abs().max(1e-3));
        }
    }
}

#[test]
fn two_by_two_matches_closed_form_roots_in_extended_precision() {
    let p = 256;
    let (a, b, c) = (XReal::from_ratio(&q(3, 20), p), XReal::from_ratio(&q(3, 20), p), XReal::from_ratio(&q(2, 5), p));
    let m = SymMatrix::from_fn(2, p, |i, j| match (i, j) {
        (0, 0) => a.clone(),
        (1, 1) => c.clone(),
        _ => b.clone(),
    });
    let sp = eigenvalues(&m).unwrap();
    let two = XReal::from_i64(2, p);
    let four = XReal::from_i64(4, p);
    let diff = &a - &c;
    let disc = (&(&diff * &diff) + &(&four * &(&b * &b))).sqrt();
    let tr = &a + &c;
    let roots = [&(&tr + &disc) / &two, &(&tr - &disc) / &two];
    let tol = XReal::one(p).ldexp(16 - p as i32);
    for (got, want) in sp.eigenvalues().iter().zip(&roots) {
        let err = &(got - want).abs() / want;
        assert!(err <= tol, "relative error {err} vs {tol}");
    }
}

#[test]
fn identity_like_and_diagonal_inputs() {
    let m = SymMatrix::from_rows(&[vec![0.5]], 128);
    assert_eq!(eigenvalues(&m).unwrap().eigenvalues_f64(), vec![0.5]);
    let d = SymMatrix::from_rows(&[vec![3.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 2.0]], 128);
    let sp = eigenvalues(&d).unwrap();
    assert_eq!(sp.eigenvalues_f64(), vec![3.0, 2.0, 1.0]);
    assert_eq!(sp.sweeps(), 0);
}

#[test]
fn counting_function_examples() {
    let sp = Spectrum::from_f64(&[0.5, 0.1, 0.02], 1e-6);
    assert_eq!(counting_function(&sp, 0.05).unwrap(), 2);
    assert_eq!(counting_function(&sp, 1.0).unwrap(), 0);
    assert_eq!(counting_function(&sp, 0.02).unwrap(), 2);
    assert!(matches!(counting_function(&sp, 1e-7), Err(Error::Untrusted { .. })));
    assert!(counting_function(&sp, 0.0).is_err());
}

#[test]
fn theoretical_slopes() {
    let (s, q1) = theoretical_slope(&MeasureSpec::figure(), 1);
    assert!((s - 1.11622).abs() < 1e-5 && (q1 - 6.0).abs() < 1e-12);
    // n = 2: a single interior atom family.
    let two = MeasureSpec::from_strs(&["0", "1/2", "1"], &["0", "1"], "1/2", 1, false).unwrap();
    let (s2, q2) = theoretical_slope(&two, 1);
    assert!((s2 - 1.0 / q2.ln()).abs() < 1e-15);
    // Mirrored copy: ρ = (−1)^e·d.
    let mirrored = MeasureSpec::from_strs(&["0", "0.3", "0.8", "1"], &["0", "2/3", "1"], "-1/3", 2, true).unwrap();
    assert_eq!(theoretical_slope(&mirrored, 1), theoretical_slope(&MeasureSpec::figure(), 1));
}

#[test]
fn synthetic_geometric_sequences_fit_exactly() {
    let l: Vec<f64> = (1..=60).map(|j| 6f64.powf(-(j as f64) / 2.0)).collect();
    let sp = Spectrum::from_f64(&l, 1e-300);
    let fit = fit_counting_slope(&sp, Some((1.0, 1e-40))).unwrap();
    assert!(rel(fit.slope, 2.0 / 6f64.ln()) < 1e-12, "{}", fit.slope);
    assert_eq!(fit.points_used, 60);
    assert!(fit.stderr < 1e-10);
    let qv = 3.7f64;
    let l: Vec<f64> = (1..=60).map(|j| qv.powi(-j)).collect();
    let fit = fit_counting_slope(&Spectrum::from_f64(&l, 1e-300), Some((1.0, 1e-40))).unwrap();
    assert!(rel(fit.slope, 1.0 / qv.ln()) < 1e-12);
}

#[test]
fn degenerate_fits_are_errors() {
    let sp = Spectrum::from_f64(&[0.1; 10], 1e-9);
    assert!(matches!(fit_counting_slope(&sp, Some((1.0, 1e-3))), Err(Error::Fit(_))));
    assert!(least_squares(&[(1.0, 1.0), (1.0, 2.0), (1.0, 3.0)]).is_err());
    let few = Spectrum::from_f64(&[0.5, 0.25, 0.125, 0.0625], 1e-9);
    assert!(matches!(fit_counting_slope(&few, Some((1.0, 1e-3))), Err(Error::Fit(_))));
    let l: Vec<f64> = (1..=30).map(|j| 2f64.powi(-j)).collect();
    let sp = Spectrum::from_f64(&l, 1e-6);
    assert!(matches!(fit_counting_slope(&sp, Some((1.0, 1e-8))), Err(Error::Untrusted { .. })));
}

#[test]
fn comparing_a_spectrum_with_itself_gives_one() {
    let sp = deep_wiener();
    assert_eq!(compare_asymptotics(sp, sp, None).unwrap(), 1.0);
}

#[test]
fn deep_spectrum_invariants() {
    let sp = deep_wiener();
    let list = atoms(&MeasureSpec::figure(), 50).unwrap();
    assert!(sp.len() <= list.len());
    let v = sp.eigenvalues();
    assert!(v.windows(2).all(|w| w[0] > w[1]), "strictly descending");
    assert!(v.iter().all(XReal::is_positive));
    // ln λ_j is asymptotically linear in j with slope −ln q/(n−1).
    let pts: Vec<(f64, f64)> = (10..=50).map(|j| (j as f64, v[j - 1].ln().to_f64())).collect();
    assert!(v[49].to_f64() > sp.trust_threshold());
    let (slope, _, _) = least_squares(&pts).unwrap();
    let predicted = -6f64.ln() / 2.0;
    assert!(rel(slope, predicted) < 0.05, "decay slope {slope} vs {predicted}");
    let fit = fit_counting_slope(sp, None).unwrap();
    assert!(rel(fit.slope, 2.0 / 6f64.ln()) < 0.05);
    assert!(fit.window.0 > fit.window.1 && fit.points_used >= 5);
    assert_eq!(fit.residuals.len(), fit.points_used);
    assert!(!fit.periodogram().is_empty());
}

#[test]
fn precision_and_truncation_stability() {
    let spec = MeasureSpec::figure();
    let k = KernelSpec::base(Process::BrownianBridge, None).unwrap();
    let lo = compute_spectrum(&spec, &k, 16, 128).unwrap();
    let hi = compute_spectrum(&spec, &k, 16, 256).unwrap();
    let deeper = compute_spectrum(&spec, &k, 17, 128).unwrap();
    let bound = deeper.trust_threshold() * 3.0; // 4·tail·maxG at depth 16
    let tol = 2f64.powi(-64);
    for (j, l) in lo.trusted().iter().enumerate() {
        let a = l.to_f64();
        assert!(rel(a, hi.eigenvalues()[j].to_f64()) < tol, "precision drift at {j}");
        let b = deeper.eigenvalues()[j].to_f64();
        assert!((a - b).abs() <= bound, "truncation drift at {j}: {a:e} vs {b:e} (bound {bound:e})");
    }
}

#[test]
fn two_atom_wiener_matrix_without_tail() {
    // Weights 1/2 at 0.3 and 0.8 give [[0.15, 0.15], [0.15, 0.4]].
    let list = AtomList::from_pairs(vec![(q(3, 10), q(1, 2)), (q(4, 5), q(1, 2))], q(0, 1)).unwrap();
    let sp = eigenvalues(&gram_matrix(&list, &KernelSpec::wiener(), 128).unwrap()).unwrap();
    let e = sp.eigenvalues_f64();
    assert!((e[0] - 0.470256).abs() < 1e-6 && (e[1] - 0.079744).abs() < 1e-6);
    assert_eq!(sp.trust_threshold(), 0.0);
}

fn spd(n: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    proptest::collection::vec(-1.0..1.0f64, n * n).prop_map(move |b| {
        let b = DMatrix::from_row_slice(n, n, &b);
        let a = &b * b.transpose() + DMatrix::identity(n, n) * 1e-3;
        (0..n).map(|i| (0..n).map(|j| a[(i, j)]).collect()).collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn jacobi_matches_a_double_precision_solver(rows in spd(20)) {
        let sp = eigenvalues(&SymMatrix::from_rows(&rows, 256)).unwrap();
        let a = DMatrix::from_fn(20, 20, |i, j| rows[i][j]);
        let mut reference: Vec<f64> = a.symmetric_eigen().eigenvalues.iter().copied().collect();
        reference.sort_by(|x, y| y.total_cmp(x));
        for (got, want) in sp.eigenvalues_f64().iter().zip(&reference).take(10) {
            prop_assert!(rel(*got, *want) < 1e-12, "{} vs {}", got, want);
        }
    }
}
