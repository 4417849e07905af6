//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Criteria listed in `KNOWN_UNMET` are reported as FAIL but do not fail the run; every
//! other failure does.

use ibcm::assembly::{assemble, ExactField, FieldSolution, NitscheParams, Problem, SolveOptions};
use ibcm::cases::{crack, cylinders, mixed, patch_tests, plate, relative_difference, Mode};
use ibcm::cli::{crack_profile, crack_opening};
use ibcm::domain::{classify_elements, TileOptions};
use ibcm::shell::Theory;
use ibcm::verify::{error_norms, folias_reference, ConvergenceStudy, ManufacturedSolution, PolyVector, PolynomialField};
use std::f64::consts::PI;
use std::sync::Arc;

const KNOWN_UNMET: &[u32] = &[8];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn study(theory: Theory, p: usize, tau: f64, mode: Mode, levels: std::ops::RangeInclusive<usize>) -> ConvergenceStudy {
    let locking = (theory == Theory::Rm).then_some(p);
    ConvergenceStudy::run(levels, &ManufacturedSolution::plate(), locking, theory == Theory::Kl, |n| {
        let mut o = plate::Options::new(theory, p, tau, n);
        o.mode = mode;
        plate::manufactured(&o)
    })
    .expect("plate study")
}

fn rate(r: Option<f64>) -> f64 {
    r.unwrap_or(f64::NAN)
}

fn solve(prob: &Problem) -> FieldSolution {
    let (sol, rep, _) = prob.solve(SolveOptions::default()).expect("solve");
    assert!(rep.spd, "stiffness matrix is not SPD");
    sol.expect("solution")
}

fn c1_area() -> Outcome {
    let region = plate::region(Mode::TrimmedSinglePatch).unwrap();
    let b: Vec<f64> = (0..=8).map(|i| i as f64 / 8.0).collect();
    let exact = 1.0 - PI * 0.04;
    let err = |opts: &TileOptions| {
        let cl = classify_elements(&region, [&b, &b], opts).unwrap();
        ((cl.area(opts.degree + 2) - exact) / exact).abs()
    };
    let e3 = err(&TileOptions { degree: 3, ..TileOptions::default() });
    let sweep: Vec<f64> = (1..=5)
        .map(|q| err(&TileOptions { degree: q, max_deviation: f64::INFINITY, min_subdivision: 1, max_depth: 3 }))
        .collect();
    let improving = sweep.windows(2).all(|w| w[1] < w[0]);
    let list: Vec<String> = sweep.iter().map(|e| format!("{e:.1e}")).collect();
    outcome(e3 < 1e-8 && improving, format!("q=3 relative error {e3:.2e}; unrefined q=1..5: {}", list.join(", ")))
}

fn c2_patch_tests() -> Outcome {
    let mut worst_energy: f64 = 0.0;
    let mut worst_error: f64 = 0.0;
    for theory in [Theory::Rm, Theory::Kl] {
        let rigid: Arc<dyn ExactField> = Arc::new(PolynomialField::rigid_plate([0.1, -0.2, 0.3], [0.2, -0.1, 0.3]));
        let prob = patch_tests::corner_cut(theory, 2, 6, rigid).unwrap();
        let sol = solve(&prob);
        let free = Problem { strong_bcs: Vec::new(), exact: None, ..prob.clone() };
        let (sys, dm) = assemble(&free).unwrap();
        assert_eq!(dm.n_free(), dm.n_raw());
        let c: Vec<f64> = sol.coeffs.concat();
        let kc = sys.k.matvec(&c);
        let energy = 0.5 * c.iter().zip(&kc).map(|(a, b)| a * b).sum::<f64>();
        worst_energy = worst_energy.max(energy.abs());

        let linear = PolynomialField::linear([0.1, -0.2, 0.3], [[0.3, 0.1, -0.2], [0.05, -0.4, 0.2]], [0.1, 0.2]);
        let linear: Arc<dyn ExactField> = Arc::new(linear);
        let prob = patch_tests::corner_cut(theory, 2, 6, linear.clone()).unwrap();
        let sol = solve(&prob);
        let [l2, h1, _] = error_norms(&prob, &sol, linear.as_ref()).unwrap();
        worst_error = worst_error.max(l2).max(h1);
    }
    outcome(
        worst_energy <= 1e-10 && worst_error <= 1e-10,
        format!("rigid-motion energy {worst_energy:.2e}; linear-field L2/H1 error {worst_error:.2e} (RM and KL, trimmed + layer)"),
    )
}

/// `‖u_split − u_single‖ / ‖u_single‖` over the unit square; parameters are physical coordinates.
fn split_difference(single: &Problem, ss: &FieldSolution, split: &Problem, sp: &FieldSolution) -> f64 {
    let (mut d, mut n) = (0.0, 0.0);
    for (pi, patch) in split.patches.iter().enumerate() {
        for rule in patch.cells.rules(patch.degree() + 3) {
            for (x, &w) in rule.points.iter().zip(&rule.weights) {
                let a = sp.state(patch, pi, *x, 0).unwrap();
                let b = ss.state(&single.patches[0], 0, *x, 0).unwrap();
                for m in 0..3 {
                    d += w * (a.u.v[m] - b.u.v[m]).powi(2);
                    n += w * b.u.v[m].powi(2);
                }
            }
        }
    }
    (d / n).sqrt()
}

fn c3_conformal_split() -> Outcome {
    let params = NitscheParams { gamma1: 1.0, gamma2: 1.0, beta: 10.0 };
    let u = PolyVector {
        terms: vec![
            ([1, 2], [0.02, -0.01, 0.0]),
            ([3, 0], [-0.01, 0.03, 0.0]),
            ([2, 2], [0.0, 0.0, 0.05]),
            ([3, 1], [0.0, 0.0, -0.02]),
            ([0, 0], [0.001, 0.002, 0.0]),
        ],
    };
    let theta = PolyVector { terms: vec![([2, 1], [0.03, -0.02, 0.0]), ([0, 3], [0.01, 0.01, 0.0])] };
    let poly: Arc<dyn ExactField> = Arc::new(PolynomialField { u, theta });
    let sine: Arc<dyn ExactField> = Arc::new(ManufacturedSolution::plate());
    let mut worst: f64 = 0.0;
    let mut smooth = Vec::new();
    for theory in [Theory::Rm, Theory::Kl] {
        let diff = |exact: &Arc<dyn ExactField>| {
            let a = patch_tests::square(theory, 3, 8, false, params, exact.clone()).unwrap();
            let b = patch_tests::square(theory, 3, 8, true, params, exact.clone()).unwrap();
            let (sa, sb) = (solve(&a), solve(&b));
            split_difference(&a, &sa, &b, &sb)
        };
        worst = worst.max(diff(&poly));
        smooth.push(format!("{theory:?} {:.2e}", diff(&sine)));
    }
    outcome(
        worst < 1e-8,
        format!("polynomial data: split vs single relative L2 difference {worst:.2e}; bi-sine data (discretization level): {}", smooth.join(", ")),
    )
}

fn c4_rm_rates(rm: &[(usize, f64, ConvergenceStudy)]) -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (p, tau, s) in rm {
        let (l2, h1) = (rate(s.rates[0]), rate(s.rates[1]));
        ok &= l2 >= *p as f64 + 0.6 && h1 >= *p as f64 - 0.4 && !s.locking;
        parts.push(format!("p={p} tau={tau}: L2 {l2:.2} H1 {h1:.2}"));
    }
    let locked = study(Theory::Rm, 1, 0.001, Mode::Ibcm, 2..=5);
    ok &= locked.locking;
    parts.push(format!("p=1 tau=0.001: L2 {:.2} locking flag {}", rate(locked.rates[0]), locked.locking));
    outcome(ok, parts.join("; "))
}

fn c5_kl_rates(kl: &ConvergenceStudy) -> Outcome {
    let r = [rate(kl.rates[0]), rate(kl.rates[1]), rate(kl.rates[2])];
    outcome(r[0] >= 3.6 && r[1] >= 2.6 && r[2] >= 1.6, format!("KL p=3 tau=0.01: L2 {:.2} H1 {:.2} H2 {:.2}", r[0], r[1], r[2]))
}

fn c6_spd(ibcm: &[&ConvergenceStudy]) -> Outcome {
    let all_ibcm = ibcm.iter().all(|s| s.reports.iter().all(|r| r.spd));
    let n_ibcm: usize = ibcm.iter().map(|s| s.reports.len()).sum();
    let trimmed = study(Theory::Rm, 3, 0.01, Mode::TrimmedSinglePatch, 2..=5);
    let failed: Vec<String> = trimmed.reports.iter().filter(|r| !r.spd).map(|r| format!("h={}", r.h)).collect();
    outcome(
        all_ibcm && !failed.is_empty(),
        format!("{n_ibcm} IBCM solves SPD: {all_ibcm}; trimmed single patch RM p=3 fails the SPD gate at {}", failed.join(", ")),
    )
}

fn c7_mixed() -> Outcome {
    let (a, _) = mixed::problem(3, 0.001, 5, true).unwrap();
    let (b, _) = mixed::problem(3, 0.001, 5, false).unwrap();
    let d = relative_difference(&a, &solve(&a), &b, &solve(&b)).unwrap();
    outcome(d < 0.01, format!("mixed KL/RM vs pure KL at tau=0.001: relative L2 difference {d:.2e}"))
}

fn c8_crack() -> Outcome {
    let prob = crack::problem(&crack::Options::new(Theory::Rm, 3, 1)).unwrap();
    let sol = solve(&prob);
    let mut worst: f64 = 0.0;
    let mut ratios = Vec::new();
    for (ra, num) in crack_profile(&prob, &sol).unwrap() {
        let reference = folias_reference(ra * crack::HALF_CRACK, crack::HALF_CRACK, crack::RADIUS, crack::THICKNESS, crack::NU).unwrap();
        worst = worst.max((num / reference - 1.0).abs());
        if ((ra * 10.0).round() - ra * 10.0).abs() < 1e-9 {
            ratios.push(format!("{ra:.1}:{:.3}", num / reference));
        }
    }
    let opening = crack_opening(&prob, &sol, 0.0).unwrap();
    outcome(
        worst <= 0.10 && opening > 0.0,
        format!("N11/(p0 tau) vs reference, worst deviation {:.1}% (ratios {}); crack opening {opening:.3e}", worst * 100.0, ratios.join(" ")),
    )
}

fn c9_cylinders() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for theory in [Theory::Rm, Theory::Kl] {
        let prob = cylinders::problem(&cylinders::Options::new(theory, 2, 0)).unwrap();
        let (sol, rep, mut dm) = prob.solve(SolveOptions::default()).unwrap();
        let merged = dm.n_identified();
        let Some(sol) = sol else {
            ok = false;
            parts.push(format!("{theory:?}: not SPD"));
            continue;
        };
        let (la, lb) = (cylinders::LAYER_A, cylinders::LAYER_B);
        let (mut jump, mut umax): (f64, f64) = (0.0, 0.0);
        for k in 0..64 {
            let t = k as f64 / 64.0;
            let a = sol.state(&prob.patches[la], la, [t, 0.0], 0).unwrap();
            let candidates = [t, 1.0 - t].map(|s| sol.state(&prob.patches[lb], lb, [s, 0.0], 0).unwrap());
            let dist = |b: &ibcm::assembly::PointState| (0..3).map(|m| (a.frame.x[m] - b.frame.x[m]).powi(2)).sum::<f64>().sqrt();
            let b = if dist(&candidates[0]) <= dist(&candidates[1]) { candidates[0] } else { candidates[1] };
            assert!(dist(&b) < 1e-6, "layer traces do not meet");
            jump = jump.max((0..3).map(|m| (a.u.v[m] - b.u.v[m]).powi(2)).sum::<f64>().sqrt());
            umax = umax.max((0..3).map(|m| a.u.v[m].powi(2)).sum::<f64>().sqrt());
        }
        let cont = jump <= 1e-10 * umax.max(1e-300);
        ok &= rep.spd && merged > 0 && cont && umax > 0.0;
        parts.push(format!("{theory:?}: SPD {}, {merged} merged dofs, interface jump {jump:.1e} (max |u| {umax:.2e})", rep.spd));
    }
    outcome(ok, parts.join("; "))
}

fn main() {
    let t0 = std::time::Instant::now();
    let rm: Vec<(usize, f64, ConvergenceStudy)> = [(2, 0.1), (2, 0.01), (3, 0.1), (3, 0.01)]
        .into_iter()
        .map(|(p, tau)| (p, tau, study(Theory::Rm, p, tau, Mode::Ibcm, 2..=5)))
        .collect();
    let kl = study(Theory::Kl, 3, 0.01, Mode::Ibcm, 2..=5);
    let mut ibcm: Vec<&ConvergenceStudy> = rm.iter().map(|r| &r.2).collect();
    ibcm.push(&kl);

    let results = [
        (1, "trimmed area", c1_area()),
        (2, "patch tests", c2_patch_tests()),
        (3, "conformal Nitsche split", c3_conformal_split()),
        (4, "RM convergence and locking", c4_rm_rates(&rm)),
        (5, "KL convergence", c5_kl_rates(&kl)),
        (6, "SPD gate", c6_spd(&ibcm)),
        (7, "mixed KL/RM coupling", c7_mixed()),
        (8, "cracked cylinder", c8_crack()),
        (9, "intersecting cylinders", c9_cylinders()),
    ];
    let mut unexpected = Vec::new();
    for (id, name, o) in &results {
        let known = KNOWN_UNMET.contains(id);
        let tag = match (o.pass, known) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known, not met)",
            (false, false) => "FAIL",
        };
        println!("criterion {id} [{name}]: {tag}: {}", o.detail);
        if !o.pass && !known {
            unexpected.push(*id);
        }
    }
    println!("acceptance finished in {:.1} s", t0.elapsed().as_secs_f64());
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
