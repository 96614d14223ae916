use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

const TABLE_CONFIG: &str = "epsilon = 0.01\nu_star = sqrt_eps\n[run]\ngrid = 200\ntimes = 10, 100\n[reduce]\nxi0 = -0.3339\nt0 = 10\ntimes = 100, 1000\n";

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_metashock"));
    c.env_remove("METASHOCK_OUT");
    c
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn run(args: &[&str], config: Option<&Path>, out: &Path) -> Output {
    let mut c = bin();
    c.args(args).arg("--out").arg(out);
    if let Some(p) = config {
        c.arg("--config").arg(p);
    }
    c.output().unwrap()
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(str::to_string).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(|s| s.parse::<f64>().unwrap()).collect())
        .collect();
    (header, rows)
}

fn files_under(dir: &Path, root: &Path, out: &mut BTreeSet<String>) {
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            files_under(&p, root, out);
        } else {
            out.insert(p.strip_prefix(root).unwrap().to_string_lossy().replace('\\', "/"));
        }
    }
}

/// The manifest lists every other file exactly once, with matching checksums.
fn check_manifest(dir: &Path) -> serde_json::Value {
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    let mut on_disk = BTreeSet::new();
    files_under(dir, dir, &mut on_disk);
    assert!(on_disk.remove("manifest.json"));
    let mut listed = BTreeSet::new();
    for f in m["files"].as_array().unwrap() {
        let path = f["path"].as_str().unwrap();
        let body = fs::read(dir.join(path)).unwrap();
        let digest: String = Sha256::digest(&body).iter().map(|b| format!("{b:02x}")).collect();
        assert_eq!(digest, f["sha256"].as_str().unwrap(), "{path}");
        assert!(listed.insert(path.to_string()));
    }
    assert_eq!(listed, on_disk);
    m
}

#[test]
fn steady_with_zero_flux_is_linear() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "z.cfg", "epsilon = 0.5\nflux = zero\nu_minus = 1\nu_plus = -1\n[run]\ngrid = 50\n");
    let out = tmp.path().join("o");
    let r = run(&["steady"], Some(&cfg), &out);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let (header, rows) = read_csv(&out.join("steady.csv"));
    assert_eq!(header, ["x", "u", "slope"]);
    assert_eq!(rows.len(), 51);
    for row in &rows {
        assert!((row[1] + row[0]).abs() < 1e-12);
        assert!((row[2] + 1.0).abs() < 1e-12);
    }
    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("steady.json")).unwrap()).unwrap();
    assert_eq!(meta["direction"], "decreasing");
    // C = eps du / sqrt(du^2 + 4 ell^2)
    let c = meta["C"].as_f64().unwrap();
    assert!((c - 0.5 * -2.0 / 8f64.sqrt()).abs() < 1e-12);
    check_manifest(&out);
}

#[test]
fn spectrum_of_zero_profile_is_dirichlet_laplacian() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "z.cfg",
        "epsilon = 0.5\nell = 2\nflux = zero\nu_minus = 1\nu_plus = -1\n[spectrum]\nprofile = zero\ncount = 4\n",
    );
    let out = tmp.path().join("o");
    let r = run(&["spectrum", "--grid", "400"], Some(&cfg), &out);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let s: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("spectrum.json")).unwrap()).unwrap();
    let eig: Vec<f64> = s["eigenvalues"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert_eq!(eig.len(), 4);
    for (k, lam) in eig.iter().enumerate() {
        let exact = -0.5 * ((k + 1) as f64 * std::f64::consts::PI / 4.0).powi(2);
        assert!(((lam - exact) / exact).abs() < 1e-3, "{lam} vs {exact}");
    }
    let (header, rows) = read_csv(&out.join("eigenfunctions.csv"));
    assert_eq!(header, ["x", "phi1", "phi2", "phi3", "phi4"]);
    assert_eq!(rows.len(), 401);
    check_manifest(&out);
}

#[test]
fn reduce_family_and_evolve_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "t.cfg", TABLE_CONFIG);

    let out = tmp.path().join("reduce");
    assert!(run(&["reduce"], Some(&cfg), &out).status.success());
    let (header, rows) = read_csv(&out.join("reduced.csv"));
    assert_eq!(header, ["t", "xi"]);
    assert_eq!(rows.len(), 2);
    assert!(rows[0][1] > -0.3339 && rows[1][1] > rows[0][1] && rows[1][1] < 0.0);

    let out = tmp.path().join("family");
    assert!(run(&["family"], Some(&cfg), &out).status.success());
    let (header, rows) = read_csv(&out.join("family.csv"));
    assert_eq!(header, ["xi", "kappa_minus", "kappa_plus", "omega", "theta"]);
    assert_eq!(rows.len(), 41);
    assert!(rows.windows(2).all(|w| w[1][3] < w[0][3]));

    let out = tmp.path().join("evolve");
    assert!(run(&["evolve"], Some(&cfg), &out).status.success());
    let (header, rows) = read_csv(&out.join("trajectory.csv"));
    assert_eq!(header, ["t", "xi", "sup_u", "sup_z", "l2_dist", "dt"]);
    assert!(!rows.is_empty());
    for name in ["snapshot_t0e0.csv", "snapshot_t1e1.csv", "snapshot_t1e2.csv"] {
        let (h, r) = read_csv(&out.join(name));
        assert_eq!(h, ["x", "u"]);
        assert_eq!(r.len(), 201);
    }
    let m = check_manifest(&out);
    assert_eq!(m["command"], "evolve");
    assert_eq!(m["grid"]["n_cells"], 200);
}

#[test]
fn identical_config_gives_identical_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "t.cfg", TABLE_CONFIG);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert!(run(&["evolve", "--workers", "1"], Some(&cfg), &a).status.success());
    assert!(run(&["evolve", "--workers", "3"], Some(&cfg), &b).status.success());
    let mut files = BTreeSet::new();
    files_under(&a, &a, &mut files);
    for f in files.iter().filter(|f| f.ends_with(".csv")) {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn tables_write_one_column_per_epsilon() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "t.cfg", "epsilon = 0.03\nu_star = sqrt_eps\n[tables]\nepsilons = 0.03, 0.01\n");
    let out = tmp.path().join("t1");
    let r = run(&["tables", "--table", "1", "--grid", "200"], Some(&cfg), &out);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let (header, rows) = read_csv(&out.join("table1.csv"));
    assert_eq!(header, ["t", "xi_eps_0.03", "xi_eps_0.01"]);
    assert_eq!(rows.len(), 8);
    assert!((rows[1][1] + 0.1607).abs() < 0.03, "{}", rows[1][1]);
    check_manifest(&out);

    let out = tmp.path().join("t2");
    assert!(run(&["tables", "--table", "2"], Some(&cfg), &out).status.success());
    let (header, rows) = read_csv(&out.join("table2.csv"));
    assert_eq!(header, ["epsilon", "measured_speed", "predicted_speed"]);
    assert_eq!(rows.len(), 2);
}

#[test]
fn figures_write_a_subdirectory_per_run() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("f3");
    let r = run(&["figures", "--figure", "3", "--grid", "200"], None, &out);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    assert!(out.join("increasing/snapshot_t1e2.csv").exists());
    assert!(out.join("decreasing/trajectory.csv").exists());
    // increasing data settle onto the steady state reference
    let (header, rows) = read_csv(&out.join("increasing/trajectory.csv"));
    let col = header.iter().position(|h| h == "l2_dist").unwrap();
    let (first, last) = (&rows[0], rows.last().unwrap());
    assert_eq!(last[0], 100.0);
    assert!(last[col] < 2e-3 && last[col] < first[col] / 10.0, "{} -> {}", first[col], last[col]);
    check_manifest(&out);
}

#[test]
fn env_var_overrides_out() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "z.cfg", "epsilon = 0.5\nflux = zero\nu_minus = 1\nu_plus = -1\n[run]\ngrid = 20\n");
    let env_out = tmp.path().join("from_env");
    let flag_out = tmp.path().join("from_flag");
    let r = bin()
        .env("METASHOCK_OUT", &env_out)
        .args(["steady", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&flag_out)
        .output()
        .unwrap();
    assert!(r.status.success());
    assert!(env_out.join("manifest.json").exists());
    assert!(!flag_out.exists());
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let bad = write_config(tmp.path(), "bad.cfg", "epsilon = 0.01\nflux = quartic\n");
    let r = run(&["steady"], Some(&bad), &out);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("line 2"));
    assert_eq!(run(&["steady"], None, &out).status.code(), Some(2));
    let missing = tmp.path().join("nope.cfg");
    assert_eq!(run(&["steady"], Some(&missing), &out).status.code(), Some(2));
    // M - m = 1.5 eps
    let gap = write_config(tmp.path(), "gap.cfg", "epsilon = 0.01\nu_star = 0.17320508075688773\n");
    assert_eq!(run(&["steady"], Some(&gap), &out).status.code(), Some(4));
    // domain shorter than the threshold
    let short = write_config(tmp.path(), "short.cfg", "epsilon = 0.1\nell = 0.001\nu_star = sqrt_eps\n");
    assert_eq!(run(&["steady"], Some(&short), &out).status.code(), Some(4));
    // interface outside the admissible range
    let far = write_config(tmp.path(), "far.cfg", "epsilon = 0.01\nu_star = sqrt_eps\n[spectrum]\nxi = 5\n");
    assert_eq!(run(&["spectrum"], Some(&far), &out).status.code(), Some(3));
    assert_eq!(run(&["figures", "--figure", "42"], None, &out).status.code(), Some(2));
    assert!(!out.exists());
}
