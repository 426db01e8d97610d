use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn rds(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rds"))
        .current_dir(dir)
        .env("RDS_THREADS", "1")
        .args(args)
        .output()
        .expect("spawn rds")
}

fn ok(dir: &Path, args: &[&str]) {
    let o = rds(dir, args);
    assert!(o.status.success(), "rds {args:?} failed: {}", String::from_utf8_lossy(&o.stderr));
}

fn lines(path: &Path) -> Vec<String> {
    fs::read_to_string(path).unwrap().lines().map(str::to_string).collect()
}

#[test]
fn density_shape_contract() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &[
            "density",
            "--map",
            "standard-circle",
            "--a",
            "0.05",
            "--eps",
            "0.9",
            "--sigma",
            "0.05",
            "--grid",
            "2048",
        ],
    );
    let l = lines(&dir.path().join("density.csv"));
    assert_eq!(l[0], "x,phi");
    assert_eq!(l.len(), 2049);
    let h = 1.0 / 2048.0;
    let mass: f64 = l[1..].iter().map(|r| r.split(',').nth(1).unwrap().parse::<f64>().unwrap() * h).sum();
    assert!((mass - 1.0).abs() < 1e-10);
    assert!(dir.path().join("density.plt").exists());
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("density.manifest.json")).unwrap()).unwrap();
    assert_eq!(m["config"]["grid"], "2048");
    assert_eq!(m["command"], "density");
    assert!(m["timings"].as_array().unwrap().len() >= 2);
    assert!(m["error"].is_null());
}

#[test]
fn identical_configs_give_identical_bytes() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let escape = [
        "escape",
        "--map",
        "logistic",
        "--a",
        "3.8475",
        "--window",
        "0.1426:0.1652,0.469:0.5303,0.955:0.9613",
        "--grid",
        "1024",
        "--mc",
        "2000",
        "--seed",
        "11",
    ];
    let rotation = [
        "rotation", "--a-min", "0.1", "--a-max", "0.3", "--steps", "5", "--grid", "256", "--n-mc", "10000",
    ];
    for dir in [a.path(), b.path()] {
        ok(dir, &escape);
        ok(dir, &rotation);
        ok(dir, &["spectrum", "--grid", "512", "--k", "6"]);
    }
    for f in ["escape.csv", "rho.csv", "spec.csv", "rho.plt"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    // a different seed changes the Monte Carlo columns only
    ok(b.path(), &[&escape[..escape.len() - 1], &["12"]].concat());
    let (x, y) = (lines(&a.path().join("escape.csv")), lines(&b.path().join("escape.csv")));
    assert_eq!(x[1].split(',').take(2).collect::<Vec<_>>(), y[1].split(',').take(2).collect::<Vec<_>>());
    assert_ne!(x[1], y[1]);
}

#[test]
fn manifest_config_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &[
            "rotation",
            "--a-min",
            "0",
            "--a-max",
            "0.2",
            "--steps",
            "3",
            "--grid",
            "128",
            "--n-mc",
            "10000",
            "--out",
            "first.csv",
        ],
    );
    let manifest = fs::read_to_string(dir.path().join("first.manifest.json")).unwrap();
    let edited = manifest.replace("\"first.csv\"", "\"second.csv\"");
    fs::write(dir.path().join("replay.json"), edited).unwrap();
    ok(dir.path(), &["rotation", "--config", "replay.json"]);
    assert_eq!(
        fs::read(dir.path().join("first.csv")).unwrap(),
        fs::read(dir.path().join("second.csv")).unwrap()
    );
}

#[test]
fn flat_config_file_with_overrides() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("run.conf"),
        "# pure noise\nmap = \"pure-noise\"\nsigma = 0.1\ngrid = 64\nk = 2\n",
    )
    .unwrap();
    ok(dir.path(), &["density", "--config", "run.conf", "--out", "pn.csv"]);
    let l = lines(&dir.path().join("pn.csv"));
    assert_eq!(l.len(), 65);
    for r in &l[1..] {
        let phi: f64 = r.split(',').nth(1).unwrap().parse().unwrap();
        assert!((phi - 1.0).abs() < 1e-10);
    }
    fs::write(dir.path().join("bad.conf"), "grid = 64\ncolour = blue\n").unwrap();
    let o = rds(dir.path(), &["density", "--config", "bad.conf"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("colour"));
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = rds(dir.path(), &["rotation", "--sigma", "-0.1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("sigma"));
    let o = rds(dir.path(), &["density", "--map", "logistic", "--a", "3.999", "--sigma", "0.005"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("invalid parameter"));
    let o = rds(dir.path(), &["density", "--grid", "4"]);
    assert!(String::from_utf8_lossy(&o.stderr).contains("[16, 1048576]"));
    let o = Command::new(env!("CARGO_BIN_EXE_rds"))
        .current_dir(dir.path())
        .env("RDS_THREADS", "zero")
        .args(["density", "--grid", "64"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(rds(dir.path(), &["--help"]).status.code(), Some(0));
    assert!(fs::read_dir(dir.path()).unwrap().next().is_none(), "usage errors write nothing");
}

#[test]
fn module_errors_exit_with_one_and_land_in_the_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let o = rds(dir.path(), &["represent", "--kernel", "quadratic"]);
    assert_eq!(o.status.code(), Some(1));
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("repmap.manifest.json")).unwrap()).unwrap();
    assert!(m["error"].as_str().unwrap().contains("unbounded"));
}

#[test]
fn small_outputs_have_their_columns() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["support", "--map", "logistic", "--a", "3.84", "--grid", "16384", "--method", "setvalued"]);
    let l = lines(&d.join("support.csv"));
    assert_eq!(l[0], "component,lo,hi");
    assert_eq!(l.len(), 4);
    ok(d, &["kernel", "--x", "0.5", "--points", "11"]);
    let l = lines(&d.join("slice.csv"));
    assert_eq!(l[0], "y,density");
    assert_eq!(l.len(), 12);
    ok(
        d,
        &["represent", "--kernel-from-map", "standard-circle", "--probe-x", "0.3", "--mu-points", "9"],
    );
    let l = lines(&d.join("repmap.csv"));
    assert_eq!(l[0], "mu,f_mu_x");
    let f: Vec<f64> = l[1..].iter().map(|r| r.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert!(f.windows(2).all(|w| w[1] > w[0]));
    ok(d, &["matrix", "--grid", "32"]);
    let l = lines(&d.join("matrix.csv"));
    assert_eq!(l[0], "n_cells");
    assert_eq!(l[1], "32");
    assert_eq!(l.len(), 34);
    let row_sum: f64 = l[2].split(',').map(|v| v.parse::<f64>().unwrap()).sum();
    assert!((row_sum - 1.0).abs() < 1e-12);
}

#[test]
fn circle_sweep_files() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(
        d,
        &[
            "sweep",
            "--map",
            "standard-circle",
            "--eps",
            "0.9",
            "--sigma",
            "0.05",
            "--a-min",
            "0.07",
            "--a-max",
            "0.12",
            "--steps",
            "11",
            "--grid",
            "256",
            "--support-grid",
            "4096",
            "--scan-a",
            "40",
            "--scan-x",
            "512",
            "--out",
            "s.csv",
            "--events",
            "e.csv",
        ],
    );
    let s = lines(&d.join("s.csv"));
    assert_eq!(s[0], "a,m,n_components,hausdorff_prev,supdist_prev,eta");
    assert_eq!(s.len(), 12);
    let e = lines(&d.join("e.csv"));
    assert_eq!(e[0], "a_star,bracket,type,label,evidence");
    assert_eq!(e.len(), 2);
    let fields: Vec<&str> = e[1].splitn(5, ',').collect();
    assert_eq!(fields[2], "saddle-node");
    assert_eq!(fields[3], "intermittency");
    let a: f64 = fields[0].parse().unwrap();
    assert!((a - (0.9 / (2.0 * std::f64::consts::PI) - 0.05)).abs() < 0.005);
    assert!(fs::read_to_string(d.join("s.plt")).unwrap().contains("e.csv"));
}
