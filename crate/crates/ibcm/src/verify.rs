//! Manufactured fields, error norms, convergence studies and the Folias crack reference.

use crate::assembly::{ExactField, FieldSolution, Problem, SolveOptions};
use crate::bspline::slot;
use crate::error::{IbcmError, Result};
use crate::geometry::MapJet;
use crate::shell::christoffel;
use serde::Serialize;
use std::f64::consts::PI;
use std::io::Write;

/// `d^k/dx^k sin(a x)`.
fn sin_der(a: f64, x: f64, k: usize) -> f64 {
    a.powi(k as i32) * (a * x + k as f64 * PI / 2.0).sin()
}

/// Product field `A_i sin(π n1 ξ1) sin(π n2 ξ2) e_i`.
fn sine_jet(amp: [f64; 3], n: [f64; 2], xi: [f64; 2]) -> MapJet {
    let (a, b) = (PI * n[0], PI * n[1]);
    let mut p = [[0.0; 3]; 10];
    for o in 0..=3 {
        for j in 0..=o {
            let v = sin_der(a, xi[0], o - j) * sin_der(b, xi[1], j);
            p[slot(o - j, j)] = amp.map(|c| c * v);
        }
    }
    MapJet::from_slots(&p)
}

/// Sine manufactured solution on the unit square.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ManufacturedSolution {
    pub u_amp: [f64; 3],
    /// Rotation amplitudes along `e_1`, `e_2` (Reissner-Mindlin).
    pub theta_amp: [f64; 2],
    pub waves: [f64; 2],
}

impl ManufacturedSolution {
    /// Amplitude 0.1 in every component, two half-waves per direction.
    pub fn plate() -> Self {
        Self { u_amp: [0.1; 3], theta_amp: [0.1; 2], waves: [2.0, 2.0] }
    }
}

impl ExactField for ManufacturedSolution {
    fn displacement(&self, xi: [f64; 2]) -> MapJet {
        sine_jet(self.u_amp, self.waves, xi)
    }
    fn rotation(&self, xi: [f64; 2]) -> MapJet {
        sine_jet([self.theta_amp[0], self.theta_amp[1], 0.0], self.waves, xi)
    }
}

/// Vector polynomial `Σ c_k ξ1^{m_k} ξ2^{n_k}` in the base parameters.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PolyVector {
    pub terms: Vec<([u32; 2], [f64; 3])>,
}

fn falling(m: u32, k: usize) -> f64 {
    (0..k as u32).map(|i| m as f64 - i as f64).product()
}

impl PolyVector {
    pub fn jet(&self, xi: [f64; 2]) -> MapJet {
        let mut p = [[0.0; 3]; 10];
        for (e, c) in &self.terms {
            for o in 0..=3 {
                for j in 0..=o {
                    let i = o - j;
                    if i as u32 > e[0] || j as u32 > e[1] {
                        continue;
                    }
                    let v = falling(e[0], i) * falling(e[1], j) * xi[0].powi((e[0] - i as u32) as i32) * xi[1].powi((e[1] - j as u32) as i32);
                    for m in 0..3 {
                        p[slot(i, j)][m] += c[m] * v;
                    }
                }
            }
        }
        MapJet::from_slots(&p)
    }
}

/// Polynomial displacement and rotation fields, exactly representable in spline spaces of
/// sufficient degree on affine patches.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PolynomialField {
    pub u: PolyVector,
    pub theta: PolyVector,
}

impl PolynomialField {
    /// Rigid motion `c + ω × x` of the plane `x = (ξ1, ξ2, 0)`, with the matching
    /// Reissner-Mindlin rotation `ω × e_3`.
    pub fn rigid_plate(c: [f64; 3], w: [f64; 3]) -> Self {
        let u = PolyVector {
            terms: vec![([0, 0], c), ([1, 0], [0.0, w[2], -w[1]]), ([0, 1], [-w[2], 0.0, w[0]])],
        };
        let theta = PolyVector { terms: vec![([0, 0], [w[1], -w[0], 0.0])] };
        Self { u, theta }
    }

    /// General linear displacement `c + g_1 ξ1 + g_2 ξ2` with a constant in-plane rotation.
    pub fn linear(c: [f64; 3], g: [[f64; 3]; 2], theta: [f64; 2]) -> Self {
        Self {
            u: PolyVector { terms: vec![([0, 0], c), ([1, 0], g[0]), ([0, 1], g[1])] },
            theta: PolyVector { terms: vec![([0, 0], [theta[0], theta[1], 0.0])] },
        }
    }
}

impl ExactField for PolynomialField {
    fn displacement(&self, xi: [f64; 2]) -> MapJet {
        self.u.jet(xi)
    }
    fn rotation(&self, xi: [f64; 2]) -> MapJet {
        self.theta.jet(xi)
    }
}

/// Errors of one discrete solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorReport {
    pub h: f64,
    pub dofs: usize,
    pub l2: f64,
    pub h1: f64,
    /// Covariant Hessian seminorm (Kirchhoff-Love only).
    pub h2: Option<f64>,
    pub spd: bool,
}

/// `(L2, H1, H2)` of `u_h − u_ex` summed over all patches, with `p+3` point rules.
pub fn error_norms(prob: &Problem, sol: &FieldSolution, exact: &dyn ExactField) -> Result<[f64; 3]> {
    let mut acc = [0.0; 3];
    for (pi, patch) in prob.patches.iter().enumerate() {
        let rules = patch.cells.rules(patch.degree() + 3);
        let parts: Vec<Result<[f64; 3]>> = {
            use rayon::prelude::*;
            rules
                .par_iter()
                .map(|r| {
                    let mut s = [0.0; 3];
                    for (x, &w) in r.points.iter().zip(&r.weights) {
                        let st = sol.state(patch, pi, *x, 2)?;
                        let ex = patch.pull(*x, |y| exact.displacement(y))?;
                        let core = &st.frame.core;
                        let chr = christoffel(core);
                        let e = |a: [f64; 3], b: [f64; 3]| [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
                        let v = e(st.u.v, ex.v);
                        let g = [e(st.u.d1[0], ex.d1[0]), e(st.u.d1[1], ex.d1[1])];
                        let mut hs = [[[0.0; 3]; 2]; 2];
                        for al in 0..2 {
                            for be in 0..2 {
                                let mut h = e(st.u.d2[al][be], ex.d2[al][be]);
                                for ga in 0..2 {
                                    for m in 0..3 {
                                        h[m] -= chr[ga][al][be] * g[ga][m];
                                    }
                                }
                                hs[al][be] = h;
                            }
                        }
                        let d3 = |a: &[f64; 3], b: &[f64; 3]| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
                        let inv = &core.inv;
                        let mut h1 = 0.0;
                        let mut h2 = 0.0;
                        for al in 0..2 {
                            for be in 0..2 {
                                h1 += inv[al][be] * d3(&g[al], &g[be]);
                                for ga in 0..2 {
                                    for de in 0..2 {
                                        h2 += inv[al][ga] * inv[be][de] * d3(&hs[al][be], &hs[ga][de]);
                                    }
                                }
                            }
                        }
                        let da = w * core.sqrt_a;
                        s[0] += da * d3(&v, &v);
                        s[1] += da * h1;
                        s[2] += da * h2;
                    }
                    Ok(s)
                })
                .collect()
        };
        for p in parts {
            let p = p?;
            for k in 0..3 {
                acc[k] += p[k];
            }
        }
    }
    Ok(acc.map(|v| v.max(0.0).sqrt()))
}

/// Least-squares slope of `log e` against `log h`.
pub fn fit_rate(h: &[f64], e: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = h.iter().zip(e).filter(|(h, e)| **h > 0.0 && **e > 0.0).map(|(h, e)| (h.ln(), e.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return None;
    }
    Some(pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / sxx)
}

/// Errors over a refinement sequence with fitted rates.
#[derive(Debug, Clone, Default, Serialize)]
pub struct ConvergenceStudy {
    pub reports: Vec<ErrorReport>,
    /// `[L2, H1, H2]` slopes over the last three SPD-successful levels.
    pub rates: [Option<f64>; 3],
    /// Reissner-Mindlin shear locking: L2 rate over all levels below `p + 1/2`.
    pub locking: bool,
}

const RATE_WINDOW: usize = 3;

impl ConvergenceStudy {
    pub fn from_reports(reports: Vec<ErrorReport>, locking_degree: Option<usize>) -> Self {
        let ok: Vec<&ErrorReport> = reports.iter().filter(|r| r.spd).collect();
        let tail = &ok[ok.len().saturating_sub(RATE_WINDOW)..];
        let h: Vec<f64> = tail.iter().map(|r| r.h).collect();
        let rate = |f: &dyn Fn(&ErrorReport) -> Option<f64>| -> Option<f64> {
            let e: Option<Vec<f64>> = tail.iter().map(|r| f(r)).collect();
            fit_rate(&h, &e?)
        };
        let rates = [rate(&|r| Some(r.l2)), rate(&|r| Some(r.h1)), rate(&|r| r.h2)];
        let locking = match locking_degree {
            Some(p) if ok.len() >= 2 => {
                let h: Vec<f64> = ok.iter().map(|r| r.h).collect();
                let e: Vec<f64> = ok.iter().map(|r| r.l2).collect();
                fit_rate(&h, &e).is_some_and(|c| c < p as f64 + 0.5)
            }
            _ => false,
        };
        Self { reports, rates, locking }
    }

    /// Runs `build(level)` for each level; SPD failures are recorded and excluded from the fits.
    pub fn run(
        levels: impl IntoIterator<Item = usize>,
        exact: &dyn ExactField,
        locking_degree: Option<usize>,
        kl: bool,
        mut build: impl FnMut(usize) -> Result<(Problem, f64)>,
    ) -> Result<Self> {
        let mut reports = Vec::new();
        for level in levels {
            let (prob, h) = build(level)?;
            let (sol, spd, dm) = prob.solve(SolveOptions::default())?;
            let r = match sol {
                Some(sol) => {
                    let [l2, h1, h2] = error_norms(&prob, &sol, exact)?;
                    ErrorReport { h, dofs: dm.n_free(), l2, h1, h2: kl.then_some(h2), spd: true }
                }
                None => ErrorReport { h, dofs: dm.n_free(), l2: f64::NAN, h1: f64::NAN, h2: None, spd: false },
            };
            log::info!("level {level}: h = {h:.4e}, dofs = {}, L2 = {:.4e}, spd = {}", r.dofs, r.l2, spd.spd);
            reports.push(r);
        }
        Ok(Self::from_reports(reports, locking_degree))
    }

    /// CSV with columns `h, dofs, L2, H1, H2, rate, spd`; the rate column holds the
    /// L2 slope from the previous SPD-successful level.
    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let io = |e: csv::Error| IbcmError::InvalidInput(format!("csv output: {e}"));
        out.write_record(["h", "dofs", "L2", "H1", "H2", "rate", "spd"]).map_err(io)?;
        let mut prev: Option<&ErrorReport> = None;
        for r in &self.reports {
            let rate = match prev {
                Some(p) if r.spd => fit_rate(&[p.h, r.h], &[p.l2, r.l2]),
                _ => None,
            };
            let f = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:.10e}"));
            out.write_record([
                format!("{:.10e}", r.h),
                r.dofs.to_string(),
                f(r.spd.then_some(r.l2)),
                f(r.spd.then_some(r.h1)),
                f(r.h2),
                f(rate),
                r.spd.to_string(),
            ])
            .map_err(io)?;
            if r.spd {
                prev = Some(r);
            }
        }
        out.flush().map_err(|e| IbcmError::InvalidInput(format!("csv output: {e}")))?;
        Ok(())
    }
}

/// `λ` of an axial crack of half length `a` in a cylinder of radius `r_cyl` and thickness `tau`.
pub fn folias_lambda(a: f64, r_cyl: f64, tau: f64, nu: f64) -> f64 {
    (12.0 * (1.0 - nu * nu) * a.powi(4) / (r_cyl * r_cyl * tau * tau)).powf(0.25)
}

/// Crack-tip hoop membrane force `N^{11} / (p_0 τ)` at distance `r` ahead of the tip.
pub fn folias_reference(r: f64, a: f64, r_cyl: f64, tau: f64, nu: f64) -> Result<f64> {
    if (nu - 1.0 / 3.0).abs() > 1e-12 {
        return Err(IbcmError::Unsupported(format!("the crack-tip expansion is given for nu = 1/3, got {nu}")));
    }
    if !(r > 0.0 && a > 0.0 && r_cyl > 0.0 && tau > 0.0) {
        return Err(IbcmError::InvalidInput("crack reference needs positive r, a, R, tau".into()));
    }
    let l = folias_lambda(a, r_cyl, tau, nu);
    Ok((a / (2.0 * r)).sqrt() * (1.0 + (0.37 - 0.30 * l.ln()) * l * l) * r_cyl / tau)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn folias_lambda_example() {
        let l4 = folias_lambda(5.0, 20.0, 1.0, 1.0 / 3.0).powi(4);
        assert_relative_eq!(l4, 50.0 / 3.0, max_relative = 1e-12);
        assert_relative_eq!(folias_lambda(5.0, 20.0, 1.0, 1.0 / 3.0), 2.020_5, epsilon = 1e-4);
    }

    #[test]
    fn folias_scales_with_inverse_root_distance() {
        let a = folias_reference(0.5, 5.0, 20.0, 1.0, 1.0 / 3.0).unwrap();
        let b = folias_reference(2.0, 5.0, 20.0, 1.0, 1.0 / 3.0).unwrap();
        assert_relative_eq!(a / b, 2.0, max_relative = 1e-12);
        assert!(folias_reference(1.0, 5.0, 20.0, 1.0, 0.3).is_err());
    }

    #[test]
    fn folias_is_finite_for_moderate_lambda() {
        for k in 1..=30 {
            let l = k as f64 * 0.1;
            // choose a such that λ = l
            let a = (l.powi(4) * 400.0 / (12.0 * (8.0 / 9.0))).powf(0.25);
            let v = folias_reference(1.0, a, 20.0, 1.0, 1.0 / 3.0).unwrap();
            assert!(v.is_finite());
        }
    }

    #[test]
    fn rate_of_exact_power_law() {
        let h = [0.5, 0.25, 0.125];
        let e: Vec<f64> = h.iter().map(|h: &f64| 3.0 * h.powi(4)).collect();
        assert_relative_eq!(fit_rate(&h, &e).unwrap(), 4.0, epsilon = 1e-12);
        assert!(fit_rate(&[0.5], &[1.0]).is_none());
    }

    #[test]
    fn sine_jet_matches_finite_differences() {
        let m = ManufacturedSolution::plate();
        let x = [0.31, 0.67];
        let j = m.displacement(x);
        let h = 1e-5;
        let f = |a: f64, b: f64| m.displacement([a, b]).d2[0][1][0];
        let fd = (f(x[0] + h, x[1]) - f(x[0] - h, x[1])) / (2.0 * h);
        assert_relative_eq!(j.d3[0][0][1][0], fd, max_relative = 1e-6);
    }

    #[test]
    fn poly_jet_derivatives() {
        let p = PolyVector { terms: vec![([3, 2], [1.0, 0.0, 2.0])] };
        let j = p.jet([2.0, 3.0]);
        assert_relative_eq!(j.v[0], 72.0);
        assert_relative_eq!(j.d1[0][2], 2.0 * 3.0 * 4.0 * 9.0);
        assert_relative_eq!(j.d3[0][0][1][0], 6.0 * 2.0 * 2.0 * 3.0);
        assert_eq!(j.d3[1][1][1][0], 0.0);
    }

    #[test]
    fn locking_flag_from_overall_rate() {
        let rep = |h: f64, l2: f64| ErrorReport { h, dofs: 1, l2, h1: l2, h2: None, spd: true };
        let good = ConvergenceStudy::from_reports(vec![rep(0.5, 1.0), rep(0.25, 0.25)], Some(1));
        assert!(!good.locking);
        let bad = ConvergenceStudy::from_reports(vec![rep(0.5, 1.0), rep(0.25, 0.7)], Some(1));
        assert!(bad.locking);
    }

    #[test]
    fn csv_has_expected_columns() {
        let rep = |h: f64, l2: f64, spd| ErrorReport { h, dofs: 10, l2, h1: l2, h2: Some(l2), spd };
        let s = ConvergenceStudy::from_reports(vec![rep(0.5, 1.0, true), rep(0.25, 0.1, false), rep(0.125, 0.01, true)], None);
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "h,dofs,L2,H1,H2,rate,spd");
        assert_eq!(lines.len(), 4);
        assert!(lines[2].ends_with("false"));
    }
}
