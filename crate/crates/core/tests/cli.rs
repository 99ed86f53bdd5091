use std::path::Path;
use std::process::{Command, Output};

use chemotaxis::io::csv::read_timeseries_csv;

fn chemotaxis(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chemotaxis"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

const HOMOGENEOUS: &str = "nx = 16\nny = 16\nlx = 1\nly = 1\nr = 1\nmu = 10\nbeta = 0\nchi = 1\n\
                           t_end = 1\nrecord_every = 0.25\nic_mode = constant\nu_base = 0.1\nv_base = 1\n";

#[test]
fn run_homogeneous_writes_decaying_v() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "h.cfg", HOMOGENEOUS);
    let out = chemotaxis(&["run", &cfg, "--out", "out"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let recs = read_timeseries_csv(&dir.path().join("out/timeseries.csv")).unwrap();
    assert_eq!(recs.len(), 5);
    for r in &recs {
        assert!((r.linf_v - (-0.1 * r.t).exp()).abs() < 1e-4, "t = {}: {}", r.t, r.linf_v);
        assert_eq!(r.linf_u, 0.1);
    }
}

#[test]
fn run_output_is_deterministic_and_snapshots_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "p.cfg",
        "nx = 8\nny = 8\nlx = 1\nly = 1\nr = 1\nmu = 10\nbeta = 0\nchi = 1\nt_end = 0.1\n\
         record_every = 0.05\nic_mode = bump\nu_base = 0.1\nv_base = 1\namplitude = 0.3\n",
    );
    for sub in ["a", "b"] {
        let out = chemotaxis(&["run", &cfg, "--snapshots", "--out", sub], dir.path());
        assert_eq!(out.status.code(), Some(0));
    }
    let a = std::fs::read(dir.path().join("a/timeseries.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b/timeseries.csv")).unwrap();
    assert_eq!(a, b);
    assert!(dir.path().join("a/u_00002.field").exists());
    assert!(dir.path().join("a/v_00000.field").exists());
}

#[test]
fn cfl_safety_above_one_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.cfg", &format!("{HOMOGENEOUS}cfl_safety = 2\n"));
    let out = chemotaxis(&["check", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("cfl_safety"));
}

#[test]
fn sweep_needs_four_mu_values() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "s.cfg", HOMOGENEOUS);
    let out = chemotaxis(&["sweep", &cfg, "--mu", "10,20,40"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_subcommand_and_missing_file_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(chemotaxis(&["simulate"], dir.path()).status.code(), Some(2));
    assert_eq!(chemotaxis(&["run", "absent.cfg"], dir.path()).status.code(), Some(2));
}

#[test]
fn check_passes_on_homogeneous_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "h.cfg", &HOMOGENEOUS.replace("t_end = 1", "t_end = 2"));
    let out = chemotaxis(&["check", &cfg], dir.path());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{stdout}");
    assert!(stdout.contains("PASS mass_ode_residual"));
    assert!(!stdout.contains("FAIL"));
}

#[test]
fn refine_reports_orders() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "r.cfg",
        "nx = 8\nny = 8\nlx = 1\nly = 1\nr = 1\nmu = 10\nbeta = 0\nchi = 1\nt_end = 0.02\n\
         record_every = 0.02\nic_mode = bump\nu_base = 0.1\nv_base = 1\namplitude = 0.5\n",
    );
    let out = chemotaxis(&["refine", &cfg, "--levels", "3"], dir.path());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("spatial_order_u"), "{stdout}");
    assert!(matches!(out.status.code(), Some(0 | 1)));
}
