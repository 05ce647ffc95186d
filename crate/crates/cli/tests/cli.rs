use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn nlfp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nlfp"))
        .args(args)
        .env_remove("NLFP_THREADS")
        .output()
        .expect("binary runs")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// Every artifact except the wall-clock record, keyed by relative path.
fn artifacts(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().unwrap() != "timing.json" {
                let rel = p.strip_prefix(dir).unwrap().display().to_string();
                out.push((rel, fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

const SMALL: &[&str] = &["--set", "n=64", "--set", "t_end=0.1", "--set", "time_step=0.01"];

fn with<'a>(base: &[&'a str], extra: &[&'a str]) -> Vec<&'a str> {
    let mut v = base.to_vec();
    v.extend_from_slice(extra);
    v
}

#[test]
fn run_pde_writes_artifacts() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("pde");
    let o = out.to_str().unwrap();
    let r = nlfp(&with(&["run-pde", "--out", o, "--set", "csv=true"], SMALL));
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    for f in ["trajectory.json", "summary.json", "manifest.txt", "timing.json", "snapshots/00000.bin", "snapshots/00010.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let summary = json(&out.join("summary.json"));
    assert!(summary["relative_mass_drift"].as_f64().unwrap() <= 1e-10);
    let meta = json(&out.join("trajectory.json"));
    assert_eq!(meta["times"].as_array().unwrap().len(), 11);
    assert_eq!(meta["model"], "LINEAR");
    assert!(json(&out.join("timing.json"))["seconds"].as_f64().is_some());
}

#[test]
fn manifest_reruns_bitwise() {
    let tmp = TempDir::new().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let r = nlfp(&with(
        &["run-pde", "--out", a.to_str().unwrap(), "--set", "model=CUBIC-DRIFT", "--set", "snapshot_stride=3"],
        SMALL,
    ));
    assert!(r.status.success());
    let manifest = a.join("manifest.txt");
    let r = nlfp(&["run-pde", "--scenario", manifest.to_str().unwrap(), "--out", b.to_str().unwrap()]);
    assert!(r.status.success());
    assert_eq!(artifacts(&a), artifacts(&b));
}

#[test]
fn malformed_scenario_exits_2_with_line() {
    let tmp = TempDir::new().unwrap();
    let file = tmp.path().join("bad.txt");
    fs::write(&file, "model = LINEAR\nthis line has no equals sign\n").unwrap();
    let out = tmp.path().join("out");
    let r = nlfp(&["run-pde", "--scenario", file.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(2));
    let err = String::from_utf8_lossy(&r.stderr);
    assert!(err.contains("line 2"), "{err}");
    assert_eq!(json(&out.join("error.json"))["line"], 2);

    fs::write(&file, "newton_tolerance = 1e-9\n").unwrap();
    let r = nlfp(&["run-pde", "--scenario", file.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("unknown key"));
}

#[test]
fn unknown_model_exits_3() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let r = nlfp(&["run-pde", "--out", out.to_str().unwrap(), "--set", "model=QUINTIC"]);
    assert_eq!(r.status.code(), Some(3));
    let rec = json(&out.join("error.json"));
    assert_eq!(rec["error"], "unknown model");
    let known: Vec<&str> = rec["known"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    assert_eq!(known, nlfp::model::REGISTRY);
}

#[test]
fn solver_failure_exits_4() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    // round-off in hΔβ(u) alone exceeds the tolerance at this step and resolution
    let r = nlfp(&[
        "run-pde",
        "--out",
        out.to_str().unwrap(),
        "--set",
        "model=CUBIC",
        "--set",
        "time_step=1",
        "--set",
        "t_end=1",
        "--set",
        "newton_tol=1e-14",
        "--set",
        "newton_max_iter=2",
    ]);
    assert_eq!(r.status.code(), Some(4), "{}", String::from_utf8_lossy(&r.stderr));
    let rec = json(&out.join("error.json"));
    assert_eq!(rec["error"], "solver");
    assert_eq!(rec["step"], 0);
    assert_eq!(rec["status"], 4);
}

#[test]
fn particles_against_reference_are_deterministic() {
    let tmp = TempDir::new().unwrap();
    let pde = tmp.path().join("pde");
    let common = with(SMALL, &["--set", "snapshot_stride=5", "--set", "particle_dt=0.01", "--set", "particles=2000"]);
    let r = nlfp(&with(&["run-pde", "--out", pde.to_str().unwrap()], &common));
    assert!(r.status.success());
    let reference = format!("reference={}", pde.display());
    let run = |name: &str| {
        let dir = tmp.path().join(name);
        let r = nlfp(&with(
            &["run-particles", "--out", dir.to_str().unwrap(), "--set", &reference, "--set", "particle_dump=true"],
            &common,
        ));
        assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
        dir
    };
    let a = run("p1");
    let b = run("p2");
    let csv = fs::read_to_string(a.join("distances.csv")).unwrap();
    assert!(csv.starts_with("time,l1_distance\n"));
    assert_eq!(csv.lines().count(), 4);
    let d = json(&a.join("summary.json"))["l1_distance_to_reference"].clone();
    assert_eq!(d.as_array().unwrap().len(), 3);
    assert!(a.join("particles.bin").exists());
    assert_eq!(artifacts(&a), artifacts(&b));

    let cmp = nlfp(&["compare", a.to_str().unwrap(), pde.to_str().unwrap()]);
    assert!(cmp.status.success());
    let text = String::from_utf8(cmp.stdout).unwrap();
    assert_eq!(text.lines().skip(1).collect::<Vec<_>>(), csv.lines().skip(1).collect::<Vec<_>>());
}

#[test]
fn zero_particles_rejected() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let r = nlfp(&with(&["run-particles", "--out", out.to_str().unwrap(), "--set", "particles=0"], SMALL));
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn full_verify_suite_on_linear_passes() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("verify");
    let r = nlfp(&[
        "run-verify",
        "--out",
        out.to_str().unwrap(),
        "--set",
        "n=128",
        "--set",
        "t_end=0.1",
        "--set",
        "time_step=0.005",
        "--set",
        "particle_dt=0.005",
        "--set",
        "particles=5000",
        "--set",
        "particle_cap=0.2",
    ]);
    assert_eq!(r.status.code(), Some(0), "{}", String::from_utf8_lossy(&r.stdout));
    let report = fs::read_to_string(out.join("report.txt")).unwrap();
    for c in nlfp::verify::CHECKS.iter().filter(|c| **c != "pde_particle") {
        assert!(report.contains(&format!("check: {c}\n")), "{c}");
    }
    assert!(report.contains("check: pde_particle_cap\n"));
    let csv = fs::read_to_string(out.join("report.csv")).unwrap();
    assert!(csv.starts_with("check,pass,measured,bound,tolerance,provenance\n"));
}

#[test]
fn failing_check_exits_1() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("verify");
    let r = nlfp(&with(
        &["run-verify", "--out", out.to_str().unwrap(), "--checks", "pde_particle", "--set", "particles=200", "--set", "particle_cap=1e-6", "--set", "particle_dt=0.01"],
        SMALL,
    ));
    assert_eq!(r.status.code(), Some(1));
    assert!(fs::read_to_string(out.join("report.csv")).unwrap().contains("pde_particle_cap,false"));
}

#[test]
fn empty_and_unknown_check_lists() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("empty");
    let r = nlfp(&["run-verify", "--out", out.to_str().unwrap(), "--checks", ""]);
    assert_eq!(r.status.code(), Some(0));
    assert_eq!(fs::read_to_string(out.join("report.txt")).unwrap(), "");
    let out = tmp.path().join("unknown");
    let r = nlfp(&["run-verify", "--out", out.to_str().unwrap(), "--checks", "barrier,telepathy"]);
    assert_eq!(r.status.code(), Some(3));
    assert_eq!(json(&out.join("error.json"))["error"], "unknown check");
}

#[test]
fn convergence_writes_distances() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("conv");
    let r = nlfp(&[
        "convergence",
        "--out",
        out.to_str().unwrap(),
        "--set",
        "n=128",
        "--set",
        "t_end=0.2",
        "--set",
        "convergence_steps=8e-3,4e-3,2e-3",
    ]);
    assert!(r.status.success());
    let rep = json(&out.join("convergence.json"));
    assert_eq!(rep["distances"].as_array().unwrap().len(), 2);
    assert!((rep["order"].as_f64().unwrap() - 1.0).abs() < 0.1);
    assert_eq!(fs::read_to_string(out.join("convergence.csv")).unwrap().lines().count(), 3);

    let r = nlfp(&["convergence", "--out", out.to_str().unwrap(), "--set", "convergence_steps=8e-3,3e-3,2e-3"]);
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn compare_mismatch_is_invalid() {
    let tmp = TempDir::new().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert!(nlfp(&with(&["run-pde", "--out", a.to_str().unwrap()], SMALL)).status.success());
    assert!(nlfp(&with(&["run-pde", "--out", b.to_str().unwrap(), "--set", "snapshot_stride=2"], SMALL)).status.success());
    let r = nlfp(&["compare", a.to_str().unwrap(), b.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(2));
    let dir = tmp.path().join("cmp");
    let r = nlfp(&["compare", a.to_str().unwrap(), a.to_str().unwrap(), "--out", dir.to_str().unwrap()]);
    assert!(r.status.success());
    let rec = json(&dir.join("compare.json"));
    assert!(rec["l1_distance"].as_array().unwrap().iter().all(|v| v.as_f64() == Some(0.0)));
}

#[test]
fn thread_count_variable() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("t");
    let run = |v: &str| {
        Command::new(env!("CARGO_BIN_EXE_nlfp"))
            .args(with(&["run-pde", "--out", out.to_str().unwrap()], SMALL))
            .env("NLFP_THREADS", v)
            .output()
            .unwrap()
    };
    assert!(run("2").status.success());
    assert_eq!(run("zero").status.code(), Some(2));
}
