use ibcm::cases::CaseId;
use ibcm::cli::{run, RunConfig};
use ibcm::shell::Theory;
use std::process::Command;

fn config(case: CaseId, dir: &std::path::Path) -> RunConfig {
    let mut c = RunConfig::new(case);
    c.p = 2;
    c.levels = 2;
    c.samples = 5;
    c.out = dir.to_path_buf();
    c
}

#[test]
fn plate_run_writes_convergence_table() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = config(CaseId::Plate, dir.path());
    c.tau = Some(0.1);
    let out = run(&c).unwrap();
    assert!(out.all_spd());
    let csv = std::fs::read_to_string(dir.path().join("convergence.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "h,dofs,L2,H1,H2,rate,spd");
    assert_eq!(lines.len(), 3);
    let vtk = std::fs::read_to_string(dir.path().join("level3_layer.vtk")).unwrap();
    assert!(vtk.starts_with("# vtk DataFile"));
    assert!(vtk.contains("SCALARS gamma1"));
}

#[test]
fn outputs_are_deterministic() {
    let read = |c: &RunConfig| {
        run(c).unwrap();
        let mut names: Vec<_> = std::fs::read_dir(&c.out).unwrap().map(|e| e.unwrap().path()).collect();
        names.sort();
        names.iter().map(|p| std::fs::read(p).unwrap()).collect::<Vec<_>>()
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let mut ca = config(CaseId::Cylinders, a.path());
    ca.levels = 1;
    let mut cb = ca.clone();
    cb.out = b.path().to_path_buf();
    assert_eq!(read(&ca), read(&cb));
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_ibcm");
    let status = |args: &[&str]| Command::new(bin).args(args).arg("--out").arg(dir.path()).status().unwrap().code();
    assert_eq!(status(&["run", "plate", "--theory", "kl", "--p", "1"]), Some(2));
    assert_eq!(status(&["run", "plate", "--beta", "-1"]), Some(2));
    assert_eq!(status(&["run", "plate", "--p", "3", "--levels", "3", "--mode", "trimmed", "--samples", "0"]), Some(3));
    assert_eq!(status(&["run", "plate", "--p", "3", "--levels", "3", "--mode", "trimmed", "--samples", "0", "--diagnostic"]), Some(0));
    assert_eq!(status(&["run", "crack", "--theory", "kl", "--p", "2", "--samples", "0"]), Some(0));
}

#[test]
fn toml_config_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "case = \"plate\"\ntheory = \"kl\"\np = 1\nlevels = 1\nsamples = 0\n").unwrap();
    let bin = env!("CARGO_BIN_EXE_ibcm");
    let code = |extra: &[&str]| {
        Command::new(bin).args(["run", "plate", "--config"]).arg(&cfg).args(extra).arg("--out").arg(dir.path()).status().unwrap().code()
    };
    assert_eq!(code(&[]), Some(2));
    assert_eq!(code(&["--p", "2"]), Some(0));
    let c = RunConfig::from_toml(&std::fs::read_to_string(&cfg).unwrap()).unwrap();
    assert_eq!(c.theory, Theory::Kl);
}
