use std::path::Path;
use std::process::{Command, Output};

use flagflow::flow_engine::integrate;
use flagflow::{FlagSpec, MetricCoords};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flagflow")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(|v| v.parse::<f64>().unwrap()).collect())
        .collect();
    (header, rows)
}

#[test]
fn field_prints_the_ricci_vector() {
    let s = ok(&["field", "--flag", "A:1,1,1", "1,1,2"]);
    assert!(s.contains("R     = [-8.0000000000000000e0, -8.0000000000000000e0, -1.6000000000000000e1]"), "{s}");
    let s = ok(&["field", "1,0,0"]);
    assert!(s.contains("X     = [0.0000000000000000e0, 0.0000000000000000e0, 0.0000000000000000e0]"), "{s}");
    for bad in [&["field", "1,1"][..], &["field", "a,b,c"], &["field", "--flag", "B:2", "1,1,1"]] {
        assert!(!run(bad).status.success(), "{bad:?}");
    }
}

#[test]
fn flow_csv_is_deterministic_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    for p in [&a, &b] {
        ok(&["flow", "--flag", "A:2,1,1", "--x0", "3/5,3/20,1/4", "--t-max", "4", "--out", p.to_str().unwrap()]);
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let (header, rows) = read_csv(&a);
    assert_eq!(header, ["t", "x1", "x2", "x3", "F", "sum_residual"]);
    let x0 = MetricCoords::on_simplex([0.6, 0.15, 0.25]).unwrap();
    let traj = integrate(&FlagSpec::a(2, 1, 1).unwrap(), &x0, 4.0, 1e-10, 1e-12).unwrap();
    assert_eq!(rows.len(), traj.len());
    for (row, (t, x)) in rows.iter().zip(traj.times.iter().zip(&traj.states)) {
        assert_eq!(row[0], *t);
        assert_eq!(&row[1..4], &x.as_array());
    }
}

#[test]
fn flow_rejects_bad_arguments() {
    assert!(!run(&["flow", "--x0", "1/3,1/3,1/3", "--t-max", "-1"]).status.success());
    assert!(!run(&["flow", "--x0", "1/3,1/3,1/3", "--rtol", "0"]).status.success());
    assert!(!run(&["flow"]).status.success());
}

#[test]
fn disk_start_stays_in_the_disk() {
    let s = ok(&["flow", "--x0", "0.45,0.4,0.15", "--t-max", "30"]);
    let mut r = csv::Reader::from_reader(s.as_bytes());
    for rec in r.records() {
        let f: f64 = rec.unwrap()[4].parse().unwrap();
        assert!(f <= 1e-8);
    }
}

#[test]
fn portrait_has_grid_squared_rows() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("p.csv");
    ok(&["portrait", "--grid", "4", "--t-max", "100", "--out", p.to_str().unwrap()]);
    let mut r = csv::Reader::from_path(&p).unwrap();
    assert_eq!(&r.headers().unwrap().iter().take(4).collect::<Vec<_>>(), &["u", "v", "Yu", "Yv"]);
    let recs: Vec<_> = r.records().map(|r| r.unwrap()).collect();
    assert_eq!(recs.len(), 16);
    assert!(recs.iter().all(|r| &r[8] != "undecided"));
    assert!(!run(&["portrait", "--grid", "0"]).status.success());
}

#[test]
fn equilibria_json() {
    let s = ok(&["equilibria", "--flag", "A:1,1,1"]);
    let v: serde_json::Value = serde_json::from_str(&s).unwrap();
    let list = v.as_array().unwrap();
    assert_eq!(list.len(), 10);
    for e in list {
        for key in ["point", "lambda", "stability", "location"] {
            assert!(e.get(key).is_some(), "{e}");
        }
    }
    assert!(list.iter().any(|e| e["stability"] == "saddle"));
}

#[test]
fn realize_prints_the_projection() {
    let v: serde_json::Value = serde_json::from_str(&ok(&["realize", "1/2,1/2,0"])).unwrap();
    let tau: Vec<Vec<f64>> = serde_json::from_value(v["tau"].clone()).unwrap();
    let want = [[0.5, -0.5], [-0.5, 0.5]];
    for i in 0..2 {
        for j in 0..2 {
            assert!((tau[i][j] - want[i][j]).abs() < 1e-12);
        }
    }
    for key in ["x", "F", "mu_inverse", "H1_omega_coords", "H2_omega_coords"] {
        assert!(v.get(key).is_some());
    }
    assert!(!run(&["realize", "1,0,0"]).status.success());
}

#[test]
fn orbit_export_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    for p in [&a, &b] {
        ok(&["orbit", "--blocks", "2,1,1", "--h1", "0.5,-0.25", "--h2", "-1/3,1", "--count", "7", "--seed", "9", "--out", p.to_str().unwrap()]);
    }
    let bytes = std::fs::read(&a).unwrap();
    assert_eq!(bytes, std::fs::read(&b).unwrap());
    let v: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
    assert_eq!(v["N"], 4);
    assert_eq!(v["count"], 7);
    assert_eq!(v["points"].as_array().unwrap().len(), 7);
    assert_eq!(v["points"][0].as_array().unwrap().len(), 64);
    assert!(!run(&["orbit", "--flag", "D:4", "--h1", "1,0"]).status.success());
}

#[test]
fn collapse_to_a_vertex_fails_with_witness() {
    let out = run(&["collapse", "--at", "0,0,1"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("not realizable") && err.contains("m3"), "{err}");
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["witness"]["kind"], "bracket");
    ok(&["collapse", "--at", "1/2,1/2,0"]);
}

#[test]
fn collapse_run_writes_profile() {
    let dir = tempfile::tempdir().unwrap();
    let (p, j) = (dir.path().join("c.csv"), dir.path().join("v.json"));
    ok(&[
        "collapse", "--x0", "0.45,0.4,0.15", "--times", "0,1,4,16", "--count", "60", "--out", p.to_str().unwrap(),
        "--verdict-out", j.to_str().unwrap(),
    ]);
    let (header, rows) = read_csv(&p);
    assert_eq!(header, ["t", "x1", "x2", "x3", "hausdorff"]);
    assert_eq!(rows.len(), 4);
    assert!(rows[3][4] < rows[0][4]);
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(&j).unwrap()).unwrap();
    assert_eq!(v["verdict"], "realizable");
    assert!(!run(&["collapse", "--x0", "1,0,0"]).status.success());
}

#[test]
fn config_file_supplies_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    std::fs::write(&cfg, "flag = \"D:5\"\nx0 = \"1/2,1/4,1/4\"\nt_max = 2.0\n").unwrap();
    let c = cfg.to_str().unwrap();
    let from_cfg = ok(&["--config", c, "flow"]);
    let explicit = ok(&["flow", "--flag", "D:5", "--x0", "1/2,1/4,1/4", "--t-max", "2"]);
    assert_eq!(from_cfg, explicit);
    let overridden = ok(&["--config", c, "flow", "--flag", "A:1,1,1"]);
    assert_ne!(overridden, from_cfg);
    std::fs::write(&cfg, "count = 0\n").unwrap();
    assert_eq!(run(&["--config", c, "verify", "--quick"]).status.code(), Some(2));
}

#[test]
fn quick_verify_passes() {
    let s = ok(&["verify", "--quick"]);
    assert_eq!(s.lines().filter(|l| l.starts_with("PASS")).count(), 10, "{s}");
}
