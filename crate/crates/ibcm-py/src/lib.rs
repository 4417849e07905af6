//! Python bindings: case builders, solves, error norms and the Folias reference.

use ibcm::assembly::{FieldSolution, Problem, SolveOptions, SpdReport};
use ibcm::cases::{crack, cylinders, mixed, plate, relative_difference, CaseId, Mode};
use ibcm::cli::{self, RunConfig};
use ibcm::domain::{classify_elements, TileOptions};
use ibcm::shell::Theory;
use ibcm::verify;
use ibcm::IbcmError;
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: IbcmError) -> PyErr {
    match e {
        IbcmError::Io(m) => PyOSError::new_err(m),
        IbcmError::NumericalFailure(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn parse_theory(s: &str) -> PyResult<Theory> {
    s.parse().map_err(|e: String| PyValueError::new_err(e))
}

fn parse_mode(s: &str) -> PyResult<Mode> {
    s.parse().map_err(to_py)
}

/// Outcome of a factorization: SPD flag, size, residual and optional condition estimate.
#[pyclass(name = "SpdReport", frozen, get_all, skip_from_py_object)]
#[derive(Clone)]
struct PySpdReport {
    spd: bool,
    n: usize,
    residual: f64,
    condition: Option<f64>,
}

impl From<SpdReport> for PySpdReport {
    fn from(r: SpdReport) -> Self {
        Self { spd: r.spd, n: r.n, residual: r.residual, condition: r.condition }
    }
}

#[pymethods]
impl PySpdReport {
    fn __repr__(&self) -> String {
        format!("SpdReport(spd={}, n={}, residual={:.3e})", self.spd, self.n, self.residual)
    }
}

/// A discretized shell problem and, once solved, its solution.
#[pyclass(name = "Analysis")]
struct Analysis {
    problem: Problem,
    h: f64,
    solution: Option<FieldSolution>,
    report: Option<SpdReport>,
}

impl Analysis {
    fn new(problem: Problem, h: f64) -> Self {
        Self { problem, h, solution: None, report: None }
    }

    fn solved(&self) -> PyResult<&FieldSolution> {
        match (&self.solution, &self.report) {
            (Some(s), _) => Ok(s),
            (None, Some(_)) => Err(PyRuntimeError::new_err("stiffness matrix is not SPD")),
            (None, None) => Err(PyRuntimeError::new_err("call solve() first")),
        }
    }

    fn patch_index(&self, patch: usize) -> PyResult<usize> {
        if patch < self.problem.patches.len() {
            Ok(patch)
        } else {
            Err(PyValueError::new_err(format!("patch {patch} out of range")))
        }
    }
}

#[pymethods]
impl Analysis {
    /// Characteristic element size.
    #[getter]
    fn h(&self) -> f64 {
        self.h
    }

    #[getter]
    fn patch_names(&self) -> Vec<String> {
        self.problem.patches.iter().map(|p| p.name.clone()).collect()
    }

    /// Assembles, checks positive definiteness and solves.
    #[pyo3(signature = (condition = false))]
    fn solve(&mut self, py: Python<'_>, condition: bool) -> PyResult<PySpdReport> {
        let prob = &self.problem;
        let (sol, rep, _) = py
            .detach(|| prob.solve(SolveOptions { jacobi: true, condition }))
            .map_err(to_py)?;
        self.solution = sol;
        self.report = Some(rep.clone());
        Ok(rep.into())
    }

    /// `(L2, H1, H2)` errors against the attached exact field.
    fn error_norms(&self, py: Python<'_>) -> PyResult<(f64, f64, f64)> {
        let sol = self.solved()?;
        let exact = self.problem.exact.clone().ok_or_else(|| PyValueError::new_err("no exact field attached"))?;
        let prob = &self.problem;
        let [a, b, c] = py.detach(|| verify::error_norms(prob, sol, exact.as_ref())).map_err(to_py)?;
        Ok((a, b, c))
    }

    /// Displacement vector at parametric point `(s1, s2)` of a patch.
    fn displacement(&self, patch: usize, s1: f64, s2: f64) -> PyResult<[f64; 3]> {
        let pi = self.patch_index(patch)?;
        let st = self.solved()?.state(&self.problem.patches[pi], pi, [s1, s2], 0).map_err(to_py)?;
        Ok(st.u.v)
    }

    /// Membrane forces and bending moments `(N, M)` in contravariant components.
    fn stress_resultants(&self, patch: usize, s1: f64, s2: f64) -> PyResult<([f64; 3], [f64; 3])> {
        let pi = self.patch_index(patch)?;
        let (_, st, _) = self.solved()?.strains(&self.problem.patches[pi], pi, [s1, s2]).map_err(to_py)?;
        Ok((st.n, st.m))
    }

    /// Relative L2 difference of this solution to another one.
    fn difference(&self, other: &Analysis) -> PyResult<f64> {
        relative_difference(&self.problem, self.solved()?, &other.problem, other.solved()?).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!("Analysis(patches={:?}, h={:.4e}, solved={})", self.patch_names(), self.h, self.solution.is_some())
    }
}

/// Plate with a circular hole under the manufactured load.
#[pyfunction]
#[pyo3(signature = (theory, p, tau, nref, mode = "ibcm"))]
fn plate_manufactured(theory: &str, p: usize, tau: f64, nref: usize, mode: &str) -> PyResult<Analysis> {
    let mut o = plate::Options::new(parse_theory(theory)?, p, tau, nref);
    o.mode = parse_mode(mode)?;
    let (prob, h) = plate::manufactured(&o).map_err(to_py)?;
    Ok(Analysis::new(prob, h))
}

/// Clamped plate under uniform pressure, with a Reissner-Mindlin layer when `mixed`.
#[pyfunction]
fn mixed_plate(p: usize, tau: f64, nref: usize, mixed: bool) -> PyResult<Analysis> {
    let (prob, h) = mixed::problem(p, tau, nref, mixed).map_err(to_py)?;
    Ok(Analysis::new(prob, h))
}

/// Two intersecting cylinders joined through boundary layers.
#[pyfunction]
fn intersecting_cylinders(theory: &str, p: usize, level: usize) -> PyResult<Analysis> {
    let prob = cylinders::problem(&cylinders::Options::new(parse_theory(theory)?, p, level)).map_err(to_py)?;
    let h = 2.0 * std::f64::consts::PI * cylinders::RADIUS_B / cylinders::elements(level).1[0] as f64;
    Ok(Analysis::new(prob, h))
}

/// Pressurized cylinder with an axial through crack.
#[pyfunction]
fn cracked_cylinder(theory: &str, p: usize, level: usize) -> PyResult<Analysis> {
    let prob = crack::problem(&crack::Options::new(parse_theory(theory)?, p, level)).map_err(to_py)?;
    Ok(Analysis::new(prob, crack::WIDTH / crack::elements(level).1 as f64))
}

/// `(r/a, N11/(p0 τ))` samples ahead of the crack tip of a solved crack analysis.
#[pyfunction]
fn crack_profile(a: &Analysis) -> PyResult<Vec<(f64, f64)>> {
    cli::crack_profile(&a.problem, a.solved()?).map_err(to_py)
}

/// Folias reference for `N11/(p0 τ)` at distance `r` ahead of a crack tip.
#[pyfunction]
#[pyo3(signature = (r, a, radius, tau, nu = 1.0 / 3.0))]
fn folias_reference(r: f64, a: f64, radius: f64, tau: f64, nu: f64) -> PyResult<f64> {
    verify::folias_reference(r, a, radius, tau, nu).map_err(to_py)
}

/// Trimmed area of the unit square minus the radius-0.2 hole on an `n × n` grid.
#[pyfunction]
#[pyo3(signature = (n, q = 3))]
fn plate_area(n: usize, q: usize) -> PyResult<f64> {
    let region = plate::region(Mode::TrimmedSinglePatch).map_err(to_py)?;
    let b: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();
    let opts = TileOptions { degree: q, ..TileOptions::default() };
    let cl = classify_elements(&region, [&b, &b], &opts).map_err(to_py)?;
    Ok(cl.area(q + 2))
}

/// Runs a batch case from a TOML configuration; returns `(level, h, dofs, spd)` rows.
#[pyfunction]
fn run_config(py: Python<'_>, toml: &str) -> PyResult<Vec<(usize, f64, usize, bool)>> {
    let cfg = RunConfig::from_toml(toml).map_err(to_py)?;
    let out = py.detach(|| cli::run(&cfg)).map_err(to_py)?;
    Ok(out.levels.iter().map(|l| (l.level, l.h, l.dofs, l.spd.spd)).collect())
}

/// Names accepted by `run_config` as `case`.
#[pyfunction]
fn cases() -> Vec<String> {
    [CaseId::Plate, CaseId::Mixed, CaseId::Cylinders, CaseId::Crack].iter().map(|c| format!("{c:?}").to_lowercase()).collect()
}

#[pymodule]
fn ibcm_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Analysis>()?;
    m.add_class::<PySpdReport>()?;
    m.add_function(wrap_pyfunction!(plate_manufactured, m)?)?;
    m.add_function(wrap_pyfunction!(mixed_plate, m)?)?;
    m.add_function(wrap_pyfunction!(intersecting_cylinders, m)?)?;
    m.add_function(wrap_pyfunction!(cracked_cylinder, m)?)?;
    m.add_function(wrap_pyfunction!(crack_profile, m)?)?;
    m.add_function(wrap_pyfunction!(folias_reference, m)?)?;
    m.add_function(wrap_pyfunction!(plate_area, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    m.add_function(wrap_pyfunction!(cases, m)?)?;
    Ok(())
}
