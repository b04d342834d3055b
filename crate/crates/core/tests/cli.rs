use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use moldflux::io::csv::read_rows;

fn moldflux(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_moldflux"))
        .current_dir(dir)
        .args(args)
        .env_remove("MOLDFLUX_THREADS")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = moldflux(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn metric(path: &Path, name: &str) -> f64 {
    let (_, rows) = read_rows(path).unwrap();
    rows.iter().find(|r| r[0] == name).unwrap()[1].parse().unwrap()
}

#[test]
fn invert_param_writes_weights_flux_and_errors() {
    let tmp = tempfile::tempdir().unwrap();
    ok(tmp.path(), &["invert", "--preset", "analytical", "--method", "param", "--eta", "0.1", "--cells", "16,16,16", "--out", "run"]);
    let run = tmp.path().join("run");
    for f in ["weights.csv", "flux.vtk", "flux.csv", "errors.csv", "readings.csv", "manifest.json", "config.toml"] {
        assert!(run.join(f).exists(), "{f} missing");
    }
    let (header, rows) = read_rows(&run.join("weights.csv")).unwrap();
    assert_eq!(header, ["index", "value"]);
    assert_eq!(rows.len(), 16);
    assert!(metric(&run.join("errors.csv"), "l2_rel") < 1e-2);
    let m = manifest(&run);
    assert_eq!(m["status"], "ok");
    assert_eq!(m["command"], "invert");
    assert_eq!(m["config"]["method"]["eta"], 0.1);
    assert_eq!(m["input_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn converge_reports_second_order() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ok(tmp.path(), &["converge", "--preset", "analytical", "--levels", "10,20,40", "--out", "conv"]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("slope"));
    let slope = manifest(&tmp.path().join("conv"))["results"]["slope"].as_f64().unwrap();
    assert!((1.8..=2.2).contains(&slope), "slope {slope}");
    let (_, rows) = read_rows(&tmp.path().join("conv/convergence.csv")).unwrap();
    assert_eq!(rows.len(), 3);
}

#[test]
fn alifanov_invert_writes_a_trace() {
    let tmp = tempfile::tempdir().unwrap();
    ok(tmp.path(), &["invert", "--method", "alifanov", "--cells", "12,12,12", "--out", "cg"]);
    let (header, rows) = read_rows(&tmp.path().join("cg/trace.csv")).unwrap();
    assert_eq!(header, ["iter", "J", "beta", "gamma", "err_L2", "err_Linf"]);
    assert!(rows.len() >= 2);
    // the final row stops before computing a step
    assert_eq!(rows.last().unwrap()[2], "");
    assert_eq!(manifest(&tmp.path().join("cg"))["results"]["stop_reason"], "cost_tolerance");
}

#[test]
fn online_against_a_foreign_artifact_is_an_integrity_error() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["offline", "--cells", "10,10,10", "--eta", "0.5", "--out", "off"]);
    ok(d, &["direct", "--cells", "10,10,10", "--out", "dir"]);
    let readings = fs::read(d.join("dir/readings.csv")).unwrap();
    let artifact = fs::read(d.join("off/artifact.bin")).unwrap();

    ok(d, &["online", "--cells", "10,10,10", "--eta", "0.5", "--artifact", "off/artifact.bin", "--measurements", "dir/readings.csv", "--out", "on"]);
    assert!(metric(&d.join("on/errors.csv"), "l2_rel") < 1e-2);

    let out = moldflux(d, &["online", "--cells", "10,10,12", "--eta", "0.5", "--artifact", "off/artifact.bin", "--measurements", "dir/readings.csv", "--out", "bad"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("integrity"));
    let m = manifest(&d.join("bad"));
    assert_eq!(m["status"], "error");
    assert!(m["error"].as_str().unwrap().contains("integrity"));

    // inputs are never modified
    assert_eq!(fs::read(d.join("dir/readings.csv")).unwrap(), readings);
    assert_eq!(fs::read(d.join("off/artifact.bin")).unwrap(), artifact);

    let out = ok(d, &["inspect-artifact", "--artifact", "off/artifact.bin", "--out", "insp"]);
    let meta: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(meta["cols"], 16);
    assert_eq!(meta["metadata"]["eta"], 0.5);
}

#[test]
fn corrupted_artifact_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["offline", "--cells", "8,8,8", "--out", "off"]);
    let mut bytes = fs::read(d.join("off/artifact.bin")).unwrap();
    let n = bytes.len();
    bytes[n - 3] ^= 0xff;
    fs::write(d.join("broken.bin"), bytes).unwrap();
    let out = moldflux(d, &["inspect-artifact", "--artifact", "broken.bin", "--out", "insp"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let text = moldflux::config::ANALYTICAL_PRESET.replace("[grid]", "[grid]\nspacing = 0.1");
    fs::write(d.join("bad.toml"), text).unwrap();
    let out = moldflux(d, &["direct", "--config", "bad.toml", "--out", "o1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("spacing"));
    assert_eq!(manifest(&d.join("o1"))["status"], "error");

    let out = moldflux(d, &["invert", "--reg", "ridge", "--out", "o2"]);
    assert_eq!(out.status.code(), Some(2));
    let out = moldflux(d, &["direct", "--preset", "analytical", "--full", "--out", "o3"]);
    assert_eq!(out.status.code(), Some(2));
    let out = moldflux(d, &["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn solver_failure_exits_with_three() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let text = moldflux::config::ANALYTICAL_PRESET
        .replace("tol = 1e-12", "tol = 1e-30")
        .replace("max_iter = 20000", "max_iter = 5");
    fs::write(d.join("tight.toml"), text).unwrap();
    let out = moldflux(d, &["direct", "--config", "tight.toml", "--cells", "8,8,8", "--out", "o"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("did not converge"));
}

#[test]
fn rerunning_the_resolved_config_reproduces_the_csvs() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["noise-study", "--cells", "10,10,10", "--omegas", "0,0.08", "--reps", "6", "--seed", "7", "--threads", "2", "--out", "a"]);
    let first = fs::read(d.join("a/noise.csv")).unwrap();
    fs::copy(d.join("a/config.toml"), d.join("again.toml")).unwrap();
    ok(d, &["noise-study", "--config", "again.toml", "--out", "b"]);
    assert_eq!(fs::read(d.join("b/noise.csv")).unwrap(), first);
    assert_eq!(manifest(&d.join("a"))["seed"], 7);

    let (_, rows) = read_rows(&d.join("a/noise.csv")).unwrap();
    // zero noise gives a zero-width band
    assert_eq!(rows[0][3], rows[0][4]);
    assert_ne!(rows[1][3], rows[1][4]);
}

#[test]
fn sweeps_emit_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["eta-sweep", "--cells", "10,10,10", "--etas", "0.1,0.7", "--out", "eta"]);
    let (h, rows) = read_rows(&d.join("eta/eta.csv")).unwrap();
    assert_eq!(h[0], "eta");
    assert_eq!(rows.len(), 2);
    ok(d, &["pg-sweep", "--cells", "10,10,10", "--pg-values", "0,10", "--out", "pg"]);
    let (h, rows) = read_rows(&d.join("pg/pg.csv")).unwrap();
    assert_eq!(h, ["p_g", "l2", "linf", "total_heat_rel_err"]);
    assert_eq!(rows.len(), 2);
}

#[test]
fn custom_benchmark_inverts_user_readings() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["direct", "--cells", "10,10,10", "--out", "syn"]);
    let text = moldflux::config::ANALYTICAL_PRESET
        .replace("kind = \"analytical\"", "kind = \"custom\"")
        .replace("robin = \"series\"", "robin = \"series\"\ncoolant_temperature = 300.0")
        .replace("counts = [4, 4]", "counts = [4, 4]\nfile = \"syn/readings.csv\"");
    fs::write(d.join("custom.toml"), text).unwrap();
    ok(d, &["invert", "--config", "custom.toml", "--cells", "10,10,10", "--out", "inv"]);
    assert!(d.join("inv/flux.vtk").exists());
    assert!(!d.join("inv/errors.csv").exists(), "no truth, no error table");
    let m = manifest(&d.join("inv"));
    assert!(m["inputs"].as_array().unwrap().iter().any(|p| p.as_str().unwrap().ends_with("readings.csv")));
}
