use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use shapeflow::mesh::io::read_mesh;
use shapeflow::mesh::Marker;

fn shapeflow(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shapeflow")).args(args).current_dir(dir).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn make_mesh(dir: &Path, inner: &str, h: &str, name: &str) {
    let o = shapeflow(&["mesh", "--inner", inner, "--h", h, "-o", name], dir);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn mesh_writes_inner_circle() {
    let dir = tempfile::tempdir().unwrap();
    make_mesh(dir.path(), "circle:0.2", "0.08", "target.mesh");
    assert!(dir.path().join("target.vtk").exists());
    let mesh: shapeflow::Mesh = read_mesh(fs::File::open(dir.path().join("target.mesh")).map(std::io::BufReader::new).unwrap()).unwrap();
    for i in mesh.boundary_loop(Marker::Inner).unwrap() {
        let p = mesh.nodes()[i];
        assert!((p[0].hypot(p[1]) - 0.2).abs() < 1e-10);
    }
}

#[test]
fn mesh_usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&shapeflow(&["mesh", "--inner", "circle:0.2"], dir.path())), 2);
    assert_eq!(code(&shapeflow(&["mesh", "--inner", "square:1", "-o", "x.mesh"], dir.path())), 2);
    assert_eq!(code(&shapeflow(&["mesh", "--inner", "circle:1.5", "-o", "x.mesh"], dir.path())), 2);
}

#[test]
fn solve_reports_and_validates() {
    let dir = tempfile::tempdir().unwrap();
    make_mesh(dir.path(), "circle:0.2", "0.15", "t.mesh");
    let o = shapeflow(&["solve", "--mesh", "t.mesh", "--alpha", "0.1", "-o", "state.vtk"], dir.path());
    assert_eq!(code(&o), 0);
    let out = stdout(&o);
    let res: f64 = out
        .lines()
        .find_map(|l| l.strip_prefix("state_residual "))
        .expect("residual line")
        .parse()
        .unwrap();
    assert!(res <= 1e-10);
    assert!(dir.path().join("state.vtk").exists());
    assert_eq!(code(&shapeflow(&["solve", "--mesh", "t.mesh", "--alpha", "-1"], dir.path())), 2);
    assert_eq!(code(&shapeflow(&["solve", "--mesh", "missing.mesh"], dir.path())), 2);
}

#[test]
fn adjoint_writes_fields() {
    let dir = tempfile::tempdir().unwrap();
    make_mesh(dir.path(), "ellipse:0.6,0.4", "0.15", "e.mesh");
    let o = shapeflow(&["adjoint", "--mesh", "e.mesh", "--cost", "j2", "-o", "adj.vtk"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let vtk = fs::read_to_string(dir.path().join("adj.vtk")).unwrap();
    assert!(vtk.contains("VECTORS adjoint_velocity double"));
    assert!(vtk.contains("VECTORS descent double"));
    assert!(stdout(&o).contains("cost j2 "));
}

fn write_config(dir: &Path, body: &str) {
    fs::write(dir.join("case.json"), body).unwrap();
}

const SMALL: &str = r#"{
  "schema": 1, "alpha": 0.1, "cost": "j1",
  "initial": {"type": "ellipse", "a": 0.6, "b": 0.4},
  "target": {"type": "circle", "radius": 0.2},
  "mesh_h": 0.2, "h0": 20, "max_iter": 3, "snapshot_every": 2
}"#;

#[test]
fn optimize_writes_trace_snapshots_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), SMALL);
    let o = shapeflow(&["optimize", "case.json", "--out", "run"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let trace = fs::read_to_string(dir.path().join("run/trace.csv")).unwrap();
    let lines: Vec<&str> = trace.lines().collect();
    assert_eq!(lines[0], "k,J,h,dnorm,min_angle,accepted");
    assert_eq!(lines.len(), 4);
    for (k, l) in lines[1..].iter().enumerate() {
        assert!(l.starts_with(&format!("{k},")));
        assert!(l.ends_with(",true"));
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("run/manifest.json")).unwrap()).unwrap();
    let outputs = manifest["outputs"].as_array().unwrap();
    assert!(outputs.iter().any(|p| p.as_str().unwrap().ends_with("snapshot_0002.mesh")));
    for p in outputs {
        assert!(dir.path().join(p.as_str().unwrap()).exists(), "{p}");
    }
    assert_eq!(manifest["accepted_iterations"], 3);

    // identical config, identical trace
    let o = shapeflow(&["optimize", "case.json", "--out", "again"], dir.path());
    assert_eq!(code(&o), 0);
    assert_eq!(trace, fs::read_to_string(dir.path().join("again/trace.csv")).unwrap());
}

#[test]
fn optimize_rejects_malformed_config() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), "{\"alpha\": 0.1, ");
    let o = shapeflow(&["optimize", "case.json"], dir.path());
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("config"));
    write_config(dir.path(), &SMALL.replace("\"h0\": 20", "\"h0\": -1"));
    assert_eq!(code(&shapeflow(&["optimize", "case.json"], dir.path())), 2);
    assert_eq!(code(&shapeflow(&["optimize", "nope.json"], dir.path())), 2);
}

#[test]
fn verify_gradient_report_and_threshold() {
    let dir = tempfile::tempdir().unwrap();
    make_mesh(dir.path(), "ellipse:0.6,0.4", "0.2", "e.mesh");
    let o = shapeflow(&["verify-gradient", "--mesh", "e.mesh", "--cost", "j2", "--modes", "3", "--threshold", "10"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    assert_eq!(out.lines().next().unwrap(), "k,adjoint,volume,fd,rel_err,pass");
    assert_eq!(out.lines().count(), 4);
    let o = shapeflow(&["verify-gradient", "--mesh", "e.mesh", "--modes", "1", "--threshold", "1e-12"], dir.path());
    assert_eq!(code(&o), 1);
}

#[test]
fn bad_thread_count_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_shapeflow"))
        .args(["mesh", "--inner", "circle:0.2", "-o", "x.mesh"])
        .env("SHAPEFLOW_THREADS", "lots")
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
}
