use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stokes-bdie")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("config.json");
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

fn poly1_config(dir: &Path, out: &Path, extra: &str) -> String {
    let body = format!(
        r#"{{"domain": {{"ball": {{"subdiv": 1, "layers": 1}}}}, "data": {{"case": "poly1"}}, "output": {:?}{extra}}}"#,
        out.to_str().unwrap()
    );
    write_config(dir, &body)
}

#[test]
fn kernel_prints_unit_pressure_kernel() {
    let out = run(&["kernel", "--x", "1", "0", "0", "--y", "0", "0", "0"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("q̊¹ = 0.0795775"), "{text}");
}

#[test]
fn kernel_with_viscosity_prints_parametrix_and_remainder() {
    let out = run(&["kernel", "--x", "0.5", "0", "0", "--y", "0", "0.1", "0", "--n", "1", "0", "0", "--mu", "2 + x1"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("parametrix") && text.contains("R[k][j]") && text.contains("T̊[k][i]"), "{text}");
}

#[test]
fn coincident_kernel_points_are_a_config_error() {
    let out = run(&["kernel", "--x", "0", "0", "0", "--y", "0", "0", "0"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn solve_writes_artifacts_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = poly1_config(dir.path(), &out, "");
    let first = run(&["solve", "--config", &cfg]);
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    for f in ["p_v.csv", "psi.csv", "solution.vtk", "report.json"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let pv = fs::read(out.join("p_v.csv")).unwrap();
    let psi = fs::read(out.join("psi.csv")).unwrap();
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["report"]["unknowns"], 562);
    assert!(report["errors"]["v"].as_f64().unwrap() < 0.05);

    assert!(run(&["solve", "--config", &cfg]).status.success());
    assert_eq!(pv, fs::read(out.join("p_v.csv")).unwrap());
    assert_eq!(psi, fs::read(out.join("psi.csv")).unwrap());
}

#[test]
fn unconstrained_solve_warns_and_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = poly1_config(dir.path(), &out, r#", "constraint": "none""#);
    let res = run(&["solve", "--config", &cfg]);
    assert!(res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("rank deficient"));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["report"]["rank_deficient"], true);
    assert_eq!(report["report"]["unknowns"], 560);
}

#[test]
fn flags_override_config_fields() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("unused");
    let other = dir.path().join("other");
    let cfg = poly1_config(dir.path(), &out, "");
    let res = run(&["solve", "--config", &cfg, "--output", other.to_str().unwrap(), "--system", "d2-split", "--subdiv", "0"]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    assert!(!out.exists() && other.join("report.json").exists());
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(other.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["system"], "d2-split");
    assert_eq!(report["mesh"]["triangles"], 20);
}

#[test]
fn bad_expression_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"domain": {"ball": {"subdiv": 1, "layers": 1}}, "viscosity": "2 + (x1",
            "data": {"expressions": {"f": ["0","0","0"], "g": "0", "phi0": ["0","0","0"]}}}"#,
    );
    let res = run(&["solve", "--config", &cfg]);
    assert_eq!(res.status.code(), Some(2));
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("viscosity") && err.contains("byte"), "{err}");
}

#[test]
fn missing_mesh_exits_with_mesh_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"domain": {"file": "/nonexistent/ball.mesh"}, "data": {"case": "poly1"}}"#);
    assert_eq!(run(&["solve", "--config", &cfg]).status.code(), Some(3));
}

#[test]
fn verify_exit_code_follows_rows() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("kernels.csv");
    let res = run(&["verify", "--suite", "kernels", "--subdiv", "1", "--csv", csv.to_str().unwrap()]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stdout));
    let text = fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("suite,check,level,h,value,relation,tolerance,pass"));
    assert_eq!(run(&["verify", "--suite", "bogus"]).status.code(), Some(2));
}

#[test]
fn convergence_writes_conv_csv() {
    let dir = tempfile::tempdir().unwrap();
    let res = run(&["convergence", "--case", "const-mu-shear", "--levels", "2", "--output", dir.path().to_str().unwrap()]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let text = fs::read_to_string(dir.path().join("conv.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "level,h,err_v,err_p,err_psi,slope");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("s1L1,") && lines[2].starts_with("s1L2,"));
}

#[test]
fn mesh_export_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ball.mesh");
    assert!(run(&["mesh-export", "--subdiv", "1", "--layers", "2", "--output", path.to_str().unwrap()]).status.success());
    let d = stokes_bdie::mesh::Domain::read(&path).unwrap();
    assert_eq!((d.surface.len(), d.volume.len()), (80, 80 * 4));
    let vtk = dir.path().join("ball.vtk");
    assert!(run(&["mesh-export", "--subdiv", "1", "--layers", "1", "--output", vtk.to_str().unwrap()]).status.success());
    assert!(fs::read_to_string(vtk).unwrap().starts_with("# vtk DataFile Version 3.0"));
}
