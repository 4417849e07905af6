//! Batch front end: run configuration, case dispatch and artifact output.

use crate::assembly::{FieldSolution, NitscheParams, Problem, SolveOptions, SpdReport};
use crate::cases::{crack, cylinders, mixed, plate, relative_difference, CaseId, Mode};
use crate::error::{IbcmError, Result};
use crate::shell::Theory;
use crate::verify::{error_norms, folias_reference, ConvergenceStudy, ErrorReport, ManufacturedSolution};
use serde::{Deserialize, Serialize};
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

/// Nitsche overrides of a run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NitscheOverrides {
    pub beta: Option<f64>,
    pub gamma1: Option<f64>,
    pub gamma2: Option<f64>,
}

impl NitscheOverrides {
    pub fn apply(&self, mut p: NitscheParams) -> NitscheParams {
        if let Some(b) = self.beta {
            p.beta = b;
        }
        if let Some(g) = self.gamma1 {
            p.gamma1 = g;
        }
        if let Some(g) = self.gamma2 {
            p.gamma2 = g;
        }
        p
    }
}

/// One batch run; the TOML schema mirrors the fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub case: CaseId,
    #[serde(default = "default_theory")]
    pub theory: Theory,
    #[serde(default = "default_degree")]
    pub p: usize,
    /// Number of refinement levels, starting at the case's base level.
    #[serde(default = "default_levels")]
    pub levels: usize,
    /// Section thickness for the plate cases (m).
    #[serde(default)]
    pub tau: Option<f64>,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub nitsche: NitscheOverrides,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    /// Keep going after SPD failures and estimate condition numbers.
    #[serde(default)]
    pub diagnostic: bool,
    /// Samples per direction of the field output grid of each patch (0 disables it).
    #[serde(default = "default_samples")]
    pub samples: usize,
}

fn default_theory() -> Theory {
    Theory::Rm
}
fn default_degree() -> usize {
    3
}
fn default_levels() -> usize {
    1
}
fn default_out() -> PathBuf {
    PathBuf::from("ibcm-out")
}
fn default_samples() -> usize {
    41
}

impl RunConfig {
    pub fn new(case: CaseId) -> Self {
        Self {
            case,
            theory: default_theory(),
            p: default_degree(),
            levels: default_levels(),
            tau: None,
            mode: Mode::Ibcm,
            nitsche: NitscheOverrides::default(),
            out: default_out(),
            diagnostic: false,
            samples: default_samples(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| IbcmError::InvalidInput(format!("config: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 {
            return Err(IbcmError::InvalidInput("at least one refinement level is required".into()));
        }
        if self.p == 0 {
            return Err(IbcmError::InvalidInput("degree must be positive".into()));
        }
        let kl = self.theory == Theory::Kl || self.case == CaseId::Mixed;
        if kl && self.p < 2 {
            return Err(IbcmError::InvalidInput(format!("Kirchhoff-Love patches need p >= 2, got {}", self.p)));
        }
        if self.mode == Mode::TrimmedSinglePatch && !matches!(self.case, CaseId::Plate | CaseId::Mixed) {
            return Err(IbcmError::InvalidInput("the trimmed single-patch mode applies to the plate cases only".into()));
        }
        if let Some(t) = self.tau {
            if !(t > 0.0) {
                return Err(IbcmError::InvalidInput("tau must be positive".into()));
            }
        }
        self.nitsche.apply(NitscheParams::default()).validate()
    }

    fn base_level(&self) -> usize {
        match self.case {
            CaseId::Plate | CaseId::Mixed => 2,
            CaseId::Cylinders | CaseId::Crack => 0,
        }
    }
}

/// Result of one level.
#[derive(Debug, Clone, Serialize)]
pub struct LevelRecord {
    pub level: usize,
    pub h: f64,
    pub dofs: usize,
    pub spd: SpdReport,
}

/// Summary returned to the caller.
#[derive(Debug, Clone, Default)]
pub struct RunOutcome {
    pub levels: Vec<LevelRecord>,
    pub study: Option<ConvergenceStudy>,
    pub files: Vec<PathBuf>,
}

impl RunOutcome {
    pub fn all_spd(&self) -> bool {
        self.levels.iter().all(|l| l.spd.spd)
    }
}

/// Process exit code of an error: configuration, SPD or geometry failure.
pub fn exit_code(e: &IbcmError) -> i32 {
    match e {
        IbcmError::Geometry(_)
        | IbcmError::InvalidOffset(_)
        | IbcmError::SingularGeometry(..)
        | IbcmError::SingularCurve(_)
        | IbcmError::Segmentation(_)
        | IbcmError::RefineRequired { .. }
        | IbcmError::CannotCoupleStrongly(_) => 4,
        IbcmError::NumericalFailure(_) => 3,
        _ => 2,
    }
}

fn solve_level(prob: &Problem, cfg: &RunConfig) -> Result<(Option<FieldSolution>, SpdReport, usize)> {
    let (sol, spd, dm) = prob.solve(SolveOptions { jacobi: true, condition: cfg.diagnostic })?;
    Ok((sol, spd, dm.n_free()))
}

fn write_spd_log(path: &Path, levels: &[LevelRecord]) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    writeln!(f, "level,h,dofs,spd,residual,condition")?;
    for l in levels {
        let c = l.spd.condition.map_or(String::new(), |c| format!("{c:.6e}"));
        let r = if l.spd.residual.is_finite() { format!("{:.6e}", l.spd.residual) } else { String::new() };
        writeln!(f, "{},{:.10e},{},{},{},{}", l.level, l.h, l.dofs, l.spd.spd, r, c)?;
    }
    Ok(())
}

/// Legacy-text structured grid of one patch: positions, displacement, `N^11`, `M^11`,
/// shear strain `γ_1` and an activity mask.
pub fn write_vtk(path: &Path, prob: &Problem, sol: &FieldSolution, pi: usize, n: usize) -> Result<()> {
    let patch = &prob.patches[pi];
    let r = patch.rect();
    let n = n.max(2);
    let mut pts = Vec::with_capacity(n * n);
    let mut u = Vec::with_capacity(n * n);
    let mut scal = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            let s = [
                r[0][0] + (r[0][1] - r[0][0]) * i as f64 / (n - 1) as f64,
                r[1][0] + (r[1][1] - r[1][0]) * j as f64 / (n - 1) as f64,
            ];
            let e1 = patch.space.kv[0].element_of(s[0]);
            let e2 = patch.space.kv[1].element_of(s[1]);
            let active = patch.cells.is_active(e1, e2);
            let (e, st, ps) = sol.strains(patch, pi, s)?;
            pts.push(ps.frame.x);
            u.push(ps.u.v);
            scal.push([st.n[0], st.m[0], e.gam[0], if active { 1.0 } else { 0.0 }]);
        }
    }
    let mut f = BufWriter::new(File::create(path)?);
    writeln!(f, "# vtk DataFile Version 3.0")?;
    writeln!(f, "{} level field", patch.name)?;
    writeln!(f, "ASCII")?;
    writeln!(f, "DATASET STRUCTURED_GRID")?;
    writeln!(f, "DIMENSIONS {n} {n} 1")?;
    writeln!(f, "POINTS {} double", n * n)?;
    for p in &pts {
        writeln!(f, "{:.12e} {:.12e} {:.12e}", p[0], p[1], p[2])?;
    }
    writeln!(f, "POINT_DATA {}", n * n)?;
    writeln!(f, "VECTORS displacement double")?;
    for v in &u {
        writeln!(f, "{:.12e} {:.12e} {:.12e}", v[0], v[1], v[2])?;
    }
    let names = ["N11", "M11", "gamma1", "active"];
    for (k, name) in names.iter().enumerate() {
        if k == 2 && patch.theory == Theory::Kl {
            continue;
        }
        writeln!(f, "SCALARS {name} double 1")?;
        writeln!(f, "LOOKUP_TABLE default")?;
        for s in &scal {
            writeln!(f, "{:.12e}", s[k])?;
        }
    }
    Ok(())
}

fn write_fields(cfg: &RunConfig, prob: &Problem, sol: &FieldSolution, level: usize, files: &mut Vec<PathBuf>) -> Result<()> {
    if cfg.samples == 0 {
        return Ok(());
    }
    for (pi, patch) in prob.patches.iter().enumerate() {
        let path = cfg.out.join(format!("level{level}_{}.vtk", patch.name));
        write_vtk(&path, prob, sol, pi, cfg.samples)?;
        files.push(path);
    }
    Ok(())
}

fn spd_failure(cfg: &RunConfig, levels: &[LevelRecord]) -> Result<()> {
    match levels.iter().find(|l| !l.spd.spd) {
        Some(l) if !cfg.diagnostic => {
            Err(IbcmError::NumericalFailure(format!("stiffness matrix is not SPD at level {} ({} dofs)", l.level, l.dofs)))
        }
        _ => Ok(()),
    }
}

/// Runs the configured analysis and writes its artifacts into `cfg.out`.
pub fn run(cfg: &RunConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.out)?;
    let mut out = RunOutcome::default();
    let levels: Vec<usize> = (cfg.base_level()..cfg.base_level() + cfg.levels).collect();
    match cfg.case {
        CaseId::Plate => {
            let tau = cfg.tau.unwrap_or(0.01);
            let exact = ManufacturedSolution::plate();
            let mut records = Vec::new();
            let mut reports = Vec::new();
            for &l in &levels {
                let mut o = plate::Options::new(cfg.theory, cfg.p, tau, l);
                o.mode = cfg.mode;
                o.params = cfg.nitsche.apply(o.params);
                let (prob, h) = plate::manufactured(&o)?;
                let (sol, spd, dofs) = solve_level(&prob, cfg)?;
                let report = match &sol {
                    Some(sol) => {
                        let [l2, h1, h2] = error_norms(&prob, sol, &exact)?;
                        write_fields(cfg, &prob, sol, l, &mut out.files)?;
                        ErrorReport { h, dofs, l2, h1, h2: (cfg.theory == Theory::Kl).then_some(h2), spd: true }
                    }
                    None => ErrorReport { h, dofs, l2: f64::NAN, h1: f64::NAN, h2: None, spd: false },
                };
                reports.push(report);
                log::info!("plate level {l}: {dofs} dofs, spd {}", spd.spd);
                records.push(LevelRecord { level: l, h, dofs, spd });
            }
            let study = ConvergenceStudy::from_reports(reports, (cfg.theory == Theory::Rm).then_some(cfg.p));
            let path = cfg.out.join("convergence.csv");
            study.write_csv(File::create(&path)?)?;
            out.files.push(path);
            out.study = Some(study);
            out.levels = records;
        }
        CaseId::Mixed => {
            let tau = cfg.tau.unwrap_or(0.001);
            let path = cfg.out.join("mixed.csv");
            let mut f = BufWriter::new(File::create(&path)?);
            writeln!(f, "level,h,dofs,spd,relative_l2_difference_to_kl")?;
            for &l in &levels {
                let mut om = mixed::options(cfg.p, tau, l, true);
                om.params = cfg.nitsche.apply(om.params);
                let mut ok = mixed::options(cfg.p, tau, l, false);
                ok.params = om.params;
                let (pm, h) = plate::clamped(&om, mixed::LOAD)?;
                let (pk, _) = plate::clamped(&ok, mixed::LOAD)?;
                let (sm, spd, dofs) = solve_level(&pm, cfg)?;
                let (sk, spd_k, _) = solve_level(&pk, cfg)?;
                let diff = match (&sm, &sk) {
                    (Some(a), Some(b)) => format!("{:.10e}", relative_difference(&pm, a, &pk, b)?),
                    _ => String::new(),
                };
                writeln!(f, "{l},{h:.10e},{dofs},{},{diff}", spd.spd && spd_k.spd)?;
                if let Some(sol) = &sm {
                    write_fields(cfg, &pm, sol, l, &mut out.files)?;
                }
                out.levels.push(LevelRecord { level: l, h, dofs, spd: SpdReport { spd: spd.spd && spd_k.spd, ..spd } });
            }
            f.flush()?;
            out.files.push(path);
        }
        CaseId::Cylinders => {
            for &l in &levels {
                let mut o = cylinders::Options::new(cfg.theory, cfg.p, l);
                o.params = cfg.nitsche.apply(o.params);
                let prob = cylinders::problem(&o)?;
                let (sol, spd, dofs) = solve_level(&prob, cfg)?;
                if let Some(sol) = &sol {
                    write_fields(cfg, &prob, sol, l, &mut out.files)?;
                }
                let h = 2.0 * std::f64::consts::PI * cylinders::RADIUS_B / cylinders::elements(l).1[0] as f64;
                out.levels.push(LevelRecord { level: l, h, dofs, spd });
            }
        }
        CaseId::Crack => {
            let path = cfg.out.join("crack.csv");
            let mut f = BufWriter::new(File::create(&path)?);
            writeln!(f, "level,r_over_a,n11_over_p0_tau,reference,ratio")?;
            for &l in &levels {
                let mut o = crack::Options::new(cfg.theory, cfg.p, l);
                o.params = cfg.nitsche.apply(o.params);
                let prob = crack::problem(&o)?;
                let (sol, spd, dofs) = solve_level(&prob, cfg)?;
                if let Some(sol) = &sol {
                    for (ra, num) in crack_profile(&prob, sol)? {
                        let reference =
                            folias_reference(ra * crack::HALF_CRACK, crack::HALF_CRACK, crack::RADIUS, crack::THICKNESS, crack::NU)?;
                        writeln!(f, "{l},{ra:.4},{num:.10e},{reference:.10e},{:.6}", num / reference)?;
                    }
                    write_fields(cfg, &prob, sol, l, &mut out.files)?;
                }
                let h = crack::WIDTH / crack::elements(l).1 as f64;
                out.levels.push(LevelRecord { level: l, h, dofs, spd });
            }
            f.flush()?;
            out.files.push(path);
        }
    }
    let log_path = cfg.out.join("spd.log");
    write_spd_log(&log_path, &out.levels)?;
    out.files.push(log_path);
    spd_failure(cfg, &out.levels)?;
    Ok(out)
}

/// `(r/a, N^11/(p0 τ))` on the axial segment ahead of the upper crack tip.
pub fn crack_profile(prob: &Problem, sol: &FieldSolution) -> Result<Vec<(f64, f64)>> {
    (0..=14)
        .map(|k| {
            let ra = 0.3 + 0.05 * k as f64;
            let s = crack::tip_point(ra * crack::HALF_CRACK);
            let (_, st, _) = sol.strains(&prob.patches[crack::TIP_TOP], crack::TIP_TOP, s)?;
            Ok((ra, st.n[0] / (crack::PRESSURE * crack::THICKNESS)))
        })
        .collect()
}

/// Crack-face opening `(u_right − u_left) · a_1` at the crack centre.
pub fn crack_opening(prob: &Problem, sol: &FieldSolution, xi2: f64) -> Result<f64> {
    let l = sol.state(&prob.patches[crack::FACE_LEFT], crack::FACE_LEFT, [0.0, xi2], 1)?;
    let r = sol.state(&prob.patches[crack::FACE_RIGHT], crack::FACE_RIGHT, [0.0, xi2], 1)?;
    let a1 = l.frame.core.a[0];
    Ok((0..3).map(|m| (r.u.v[m] - l.u.v[m]) * a1[m]).sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip() {
        let text = r#"
            case = "plate"
            theory = "kl"
            p = 3
            levels = 2
            tau = 0.01
            mode = "trimmed-single-patch"
            out = "/tmp/x"
            [nitsche]
            beta = 20.0
        "#;
        let c = RunConfig::from_toml(text).unwrap();
        assert_eq!(c.case, CaseId::Plate);
        assert_eq!(c.mode, Mode::TrimmedSinglePatch);
        assert_eq!(c.nitsche.apply(NitscheParams::default()).beta, 20.0);
        let back = RunConfig::from_toml(&toml::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_toml("case = \"plate\"\nfoo = 1").is_err());
    }

    #[test]
    fn kl_degree_one_is_a_config_error() {
        let mut c = RunConfig::new(CaseId::Plate);
        c.theory = Theory::Kl;
        c.p = 1;
        let e = c.validate().unwrap_err();
        assert_eq!(exit_code(&e), 2);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&IbcmError::NumericalFailure("x".into())), 3);
        assert_eq!(exit_code(&IbcmError::Geometry("x".into())), 4);
        assert_eq!(exit_code(&IbcmError::InvalidInput("x".into())), 2);
    }
}
