use approx::assert_relative_eq;
use ibcm::assembly::{ExactField, FieldSolution, NitscheParams, Problem};
use ibcm::cases::{patch_tests, plate, Mode};
use ibcm::shell::Theory;
use ibcm::verify::{error_norms, fit_rate, ConvergenceStudy, ErrorReport, ManufacturedSolution, PolyVector, PolynomialField};
use proptest::prelude::*;
use std::sync::Arc;

fn zero(prob: &Problem) -> FieldSolution {
    FieldSolution { coeffs: prob.patches.iter().map(|p| vec![0.0; p.n_dofs()]).collect() }
}

fn square(exact: Arc<dyn ExactField>) -> Problem {
    patch_tests::square(Theory::Rm, 2, 4, false, NitscheParams::default(), exact).unwrap()
}

#[test]
fn zero_solution_error_is_exact_norm() {
    // ‖u‖² = 3 · 0.01 · (1/2)² on the unit square.
    let ms: Arc<dyn ExactField> = Arc::new(ManufacturedSolution::plate());
    let prob = square(ms.clone());
    let [l2, _, _] = error_norms(&prob, &zero(&prob), ms.as_ref()).unwrap();
    assert_relative_eq!(l2, (0.03f64 / 4.0).sqrt(), max_relative = 1e-10);
    assert_relative_eq!(l2, 0.0866, max_relative = 1e-3);
}

#[test]
fn trimmed_plate_norm_is_below_full_square() {
    let ms = ManufacturedSolution::plate();
    let mut o = plate::Options::new(Theory::Rm, 2, 0.1, 2);
    o.mode = Mode::TrimmedSinglePatch;
    let (prob, _) = plate::manufactured(&o).unwrap();
    let [l2, _, _] = error_norms(&prob, &zero(&prob), &ms).unwrap();
    assert!(l2 > 0.05 && l2 < 0.0866, "{l2}");
}

#[test]
fn ibcm_plate_covers_the_trimmed_domain() {
    // interior plus layer span the same domain as the trimmed single patch
    let ms = ManufacturedSolution::plate();
    let norm = |mode| {
        let mut o = plate::Options::new(Theory::Rm, 3, 0.1, 3);
        o.mode = mode;
        let (prob, _) = plate::manufactured(&o).unwrap();
        error_norms(&prob, &zero(&prob), &ms).unwrap()[0]
    };
    assert_relative_eq!(norm(Mode::Ibcm), norm(Mode::TrimmedSinglePatch), max_relative = 1e-8);
}

#[test]
fn constant_field_has_no_gradient_error() {
    let c = [0.3, -0.4, 1.2];
    let f: Arc<dyn ExactField> = Arc::new(PolynomialField { u: PolyVector { terms: vec![([0, 0], c)] }, theta: PolyVector::default() });
    let prob = square(f.clone());
    let [l2, h1, h2] = error_norms(&prob, &zero(&prob), f.as_ref()).unwrap();
    assert_relative_eq!(l2, 1.3, max_relative = 1e-12);
    assert!(h1.abs() < 1e-14 && h2.abs() < 1e-14);
}

#[test]
fn study_rates_follow_power_law() {
    let reports: Vec<ErrorReport> = (0..4)
        .map(|k| {
            let h = 0.5f64.powi(k);
            ErrorReport { h, dofs: 10 << k, l2: 3.0 * h.powi(4), h1: h.powi(3), h2: Some(h * h), spd: true }
        })
        .collect();
    let s = ConvergenceStudy::from_reports(reports, Some(3));
    assert_relative_eq!(s.rates[0].unwrap(), 4.0, max_relative = 1e-12);
    assert_relative_eq!(s.rates[1].unwrap(), 3.0, max_relative = 1e-12);
    assert_relative_eq!(s.rates[2].unwrap(), 2.0, max_relative = 1e-12);
    assert!(!s.locking);
    let slow: Vec<ErrorReport> = (0..4)
        .map(|k| {
            let h = 0.5f64.powi(k);
            ErrorReport { h, dofs: 10 << k, l2: h * h, h1: h, h2: None, spd: true }
        })
        .collect();
    assert!(ConvergenceStudy::from_reports(slow, Some(3)).locking);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn norms_scale_linearly_with_amplitude(a in 0.01f64..10.0) {
        let base = ManufacturedSolution::plate();
        let scaled = ManufacturedSolution { u_amp: base.u_amp.map(|v| v * a), theta_amp: base.theta_amp.map(|v| v * a), ..base };
        let prob = square(Arc::new(base.clone()));
        let e0 = error_norms(&prob, &zero(&prob), &base).unwrap();
        let e1 = error_norms(&prob, &zero(&prob), &scaled).unwrap();
        for k in 0..3 {
            prop_assert!((e1[k] - a * e0[k]).abs() <= 1e-10 * a * e0[k]);
        }
    }

    #[test]
    fn fitted_rate_recovers_exponent(r in 0.5f64..6.0, c in 0.1f64..100.0) {
        let h = [0.4, 0.2, 0.1, 0.05];
        let e: Vec<f64> = h.iter().map(|h: &f64| c * h.powf(r)).collect();
        prop_assert!((fit_rate(&h, &e).unwrap() - r).abs() < 1e-9);
    }
}
