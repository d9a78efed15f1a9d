use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tdsr::io::read_csv;

fn tdsr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tdsr"))
        .args(args)
        .env_remove("TDSR_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL_SOLITON: [&str; 8] = [
    "--set", "n_s=512", "--set", "t_end=0.4", "--set", "block=0.2", "--set", "snapshots=0.2",
];

fn column(path: &Path, name: &str) -> Vec<f64> {
    let (header, rows) = read_csv(path).unwrap();
    let k = header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name} in {header:?}"));
    rows.iter().map(|r| r[k].parse().unwrap()).collect()
}

#[test]
fn list_is_complete_stable_and_tabular() {
    let a = tdsr(&["list"]);
    assert_eq!(code(&a), 0);
    let text = String::from_utf8(a.stdout.clone()).unwrap();
    for name in [
        "kdv-soliton-momentum",
        "zabusky-kruskal",
        "ac-travelling-wave",
        "ac-metastable",
        "kdv-mass-momentum",
        "kdv-two-soliton",
        "kdv-mass-hamiltonian",
        "kdv-three-laws",
        "nls2d-townes",
    ] {
        assert!(text.contains(name), "{name} missing");
    }
    assert_eq!(tdsr(&["list"]).stdout, a.stdout);
    let tsv = String::from_utf8(tdsr(&["list", "--tsv"]).stdout).unwrap();
    let lines: Vec<&str> = tsv.lines().collect();
    assert_eq!(lines.len(), 9);
    assert!(lines.iter().all(|l| l.split('\t').count() == 3));
    assert!(lines[0].starts_with("kdv-soliton-momentum\t"));
}

#[test]
fn run_writes_artifacts_and_enforces_momentum() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path().join("run");
    let mut args = vec!["run", "kdv-soliton-momentum", "-q", "--out", out.to_str().unwrap()];
    args.extend(SMALL_SOLITON);
    args.extend(["--set", "store_full=true"]);
    let o = tdsr(&args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for f in [
        "manifest.toml",
        "invariants.csv",
        "error.csv",
        "history.csv",
        "blocks.csv",
        "timing.csv",
        "final.csv",
        "field.bin",
        "field.txt",
        "snapshot_00_t0.200000.csv",
    ] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let rel = column(&out.join("invariants.csv"), "kdv_momentum_rel");
    assert_eq!(rel.len(), 21);
    assert!(*rel.last().unwrap() <= 1e-13);
    let err = column(&out.join("error.csv"), "delta_u");
    assert!(err.iter().all(|e| *e < 1e-6));
    let head = fs::read_to_string(out.join("invariants.csv")).unwrap();
    assert!(head.starts_with("# schema: invariants v1\n"));
}

#[test]
fn manifest_replays_to_identical_bytes() {
    let d = tempfile::tempdir().unwrap();
    let a = d.path().join("a");
    let b = d.path().join("b");
    let mut args = vec!["run", "kdv-soliton-momentum", "-q", "--seed", "7", "--out", a.to_str().unwrap()];
    args.extend(SMALL_SOLITON);
    args.extend(["--set", "guess=random"]);
    assert_eq!(code(&tdsr(&args)), 0);
    let manifest = a.join("manifest.toml");
    let o = tdsr(&["run", "-q", "--config", manifest.to_str().unwrap(), "--out", b.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for f in ["manifest.toml", "invariants.csv", "error.csv", "history.csv", "blocks.csv", "final.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
}

#[test]
fn output_dir_from_environment() {
    let d = tempfile::tempdir().unwrap();
    let mut args = vec!["run", "kdv-soliton-momentum", "-q"];
    args.extend(SMALL_SOLITON);
    let o = Command::new(env!("CARGO_BIN_EXE_tdsr"))
        .args(&args)
        .env("TDSR_OUT_DIR", d.path().join("env"))
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert!(d.path().join("env/manifest.toml").is_file());
}

#[test]
fn config_errors_exit_2() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path().join("x");
    let out = out.to_str().unwrap();
    let o = tdsr(&["run", "kdv-soliton-momentum", "--set", "laws=nls_power", "--out", out]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("nls_power"), "{}", stderr(&o));
    assert_eq!(code(&tdsr(&["run", "kdv-soliton-momentum", "--set", "bogus=1", "--out", out])), 2);
    assert_eq!(code(&tdsr(&["run", "no-such-scenario", "--out", out])), 2);
    assert_eq!(code(&tdsr(&["run", "kdv-soliton-momentum", "--set", "dt=0.03", "--out", out])), 2);
    let cfg = d.path().join("bad.toml");
    fs::write(&cfg, "scenario = \"kdv-soliton-momentum\"\n[extra]\n").unwrap();
    assert_eq!(code(&tdsr(&["run", "--config", cfg.to_str().unwrap(), "--out", out])), 2);
}

#[test]
fn non_convergence_exits_3_and_keeps_artifacts() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path().join("nc");
    let mut args = vec!["run", "kdv-soliton-momentum", "-q", "--out", out.to_str().unwrap()];
    args.extend(SMALL_SOLITON);
    args.extend(["--set", "max_iter=2"]);
    let o = tdsr(&args);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    let manifest = fs::read_to_string(out.join("manifest.toml")).unwrap();
    assert!(manifest.contains("status = \"not_converged\""));
    assert!(out.join("history.csv").is_file());
}

#[test]
fn unwritable_output_exits_4() {
    let d = tempfile::tempdir().unwrap();
    let file = d.path().join("plain");
    fs::write(&file, "not a directory").unwrap();
    let out = file.join("sub");
    let mut args = vec!["run", "kdv-soliton-momentum", "-q", "--out", out.to_str().unwrap()];
    args.extend(SMALL_SOLITON);
    assert_eq!(code(&tdsr(&args)), 4);
}

#[test]
fn zabusky_kruskal_fission_has_eight_peaks() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path().join("zk");
    let o = tdsr(&[
        "run",
        "zabusky-kruskal",
        "-q",
        "--set",
        "t_end=3.6/pi",
        "--set",
        "snapshots=3.6/pi",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let u = column(&out.join("final.csv"), "u");
    let n = u.len();
    let peaks = (0..n).filter(|&i| u[i] > u[(i + n - 1) % n] && u[i] > u[(i + 1) % n]).count();
    assert_eq!(peaks, 8);
}

#[test]
fn sweep_fits_fourth_order() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path().join("sw");
    let o = tdsr(&[
        "sweep",
        "kdv-soliton-momentum",
        "-q",
        "--set",
        "n_s=512",
        "--set",
        "t_end=2",
        "--set",
        "block=2",
        "--dts",
        "0.2,0.1,0.05",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let (_, rows) = read_csv(&out.join("sweep.csv")).unwrap();
    assert_eq!(rows.len(), 3);
    let text = fs::read_to_string(out.join("sweep_order.txt")).unwrap();
    let slope: f64 = text.lines().next().unwrap().trim_start_matches("slope = ").parse().unwrap();
    assert!((slope - 4.0).abs() < 0.5, "slope {slope}");
}

#[test]
fn compare_against_etdrk4() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path().join("cmp");
    let mut args = vec!["compare", "kdv-soliton-momentum", "-q", "--out", out.to_str().unwrap()];
    args.extend(SMALL_SOLITON);
    let o = tdsr(&args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = fs::read_to_string(out.join("compare.txt")).unwrap();
    let diff: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("max_diff = "))
        .unwrap()
        .parse()
        .unwrap();
    assert!(diff < 1e-8, "{diff}");
    assert!(out.join("final_reference.csv").is_file());
}
