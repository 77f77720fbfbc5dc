use serde_json::Value;
use sha2::{Digest, Sha256};
use std::fs;
use std::path::Path;
use std::process::{Command, Output};
use vzpulse_core::examples::{spin_example, three_qubit_example, Example, SpinFamily};
use vzpulse_core::{Phase, SampledFunction, Unit, VirtualZProgram};

fn vzpulse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vzpulse"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&o.stdout)))
}

fn write_problem(dir: &Path, e: &Example) {
    fs::create_dir_all(dir).unwrap();
    fs::write(dir.join("model.json"), serde_json::to_string(&e.model).unwrap()).unwrap();
    fs::write(dir.join("schedule.json"), serde_json::to_string(&e.schedule).unwrap()).unwrap();
    fs::write(dir.join("program.json"), serde_json::to_string(&e.program).unwrap()).unwrap();
}

fn zeroed(p: &VirtualZProgram) -> VirtualZProgram {
    VirtualZProgram {
        v: p.v.iter().map(|v| v.scaled(0.0)).collect(),
        v0: vec![0.0; p.v0.len()],
    }
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn classify_prints_case_and_table() {
    let o = vzpulse(&["classify", "--pauli", "XX=1,YY=1,ZZ=1"]);
    assert!(o.status.success());
    let v = stdout_json(&o);
    assert_eq!(v["result"]["case"], "z-c-minus");
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("case: Z+C-"), "{err}");
    assert!(err.contains("XX+YY"));
}

#[test]
fn malformed_json_is_a_validation_error_with_position() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("op.json");
    fs::write(&f, "{\"pauli\": {\"XX\": 1.0,\n}").unwrap();
    let o = vzpulse(&["classify", "--op", path(&f)]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 2"), "{err}");
}

#[test]
fn missing_input_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = vzpulse(&["compile", path(&dir.path().join("absent.json"))]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn bad_thread_count_is_rejected() {
    let o = Command::new(env!("CARGO_BIN_EXE_vzpulse"))
        .args(["normalizer-check", "--gate", "swap"])
        .env("VZPULSE_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn compile_is_deterministic_and_hashes_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("three");
    write_problem(&input, &three_qubit_example(801).unwrap());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = vzpulse(&["compile", path(&input), "--model", "direct-xy", "--out", path(out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let mut names: Vec<String> = fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    assert!(names.contains(&"compile.json".to_string()));
    assert!(names.iter().any(|n| n.starts_with("dilation_L1_")));
    for n in &names {
        assert_eq!(fs::read(a.join(n)).unwrap(), fs::read(b.join(n)).unwrap(), "{n} differs");
        if n.ends_with(".dat") {
            assert!(fs::read_to_string(a.join(n)).unwrap().starts_with("# tau (ns)"), "{n}");
        }
    }
    let meta: Value = serde_json::from_slice(&fs::read(a.join("metadata.json")).unwrap()).unwrap();
    let model = input.join("model.json");
    let want = hex::encode(Sha256::digest(fs::read(&model).unwrap()));
    assert_eq!(meta["inputs"][model.display().to_string()], want);
    assert_eq!(meta["command"], "compile");
    assert!(meta["settings"]["solve"]["dfdtau_cap"].is_number());
}

#[test]
fn model_mismatch_exits_with_validation() {
    let dir = tempfile::tempdir().unwrap();
    write_problem(dir.path(), &three_qubit_example(401).unwrap());
    let o = vzpulse(&["compile", path(dir.path()), "--model", "spin"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn verify_zero_program_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let mut e = spin_example(SpinFamily::Gaussian, 0.5, 801).unwrap();
    e.program = zeroed(&e.program);
    write_problem(dir.path(), &e);
    let o = vzpulse(&["verify", path(dir.path())]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = &stdout_json(&o)["result"]["report"];
    assert!(r["infidelity_rwa_oracle"].as_f64().unwrap() < 1e-10);
    assert!(r["infidelity_lab_exact_target"].as_f64().unwrap() < 1e-10);
}

#[test]
fn verify_batch_reports_every_input() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    write_problem(&a, &three_qubit_example(801).unwrap());
    write_problem(&b, &three_qubit_example(1201).unwrap());
    let o = vzpulse(&["verify", path(&a), path(&b), "--frame", "rotating"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = stdout_json(&o);
    let rows = v["result"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    for r in rows {
        assert!(r["report"]["infidelity_rwa_oracle"].as_f64().unwrap() < 1e-9);
    }
}

#[test]
fn sweep_writes_columns() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in");
    write_problem(&input, &three_qubit_example(801).unwrap());
    let out = dir.path().join("out");
    let o = vzpulse(&[
        "sweep",
        path(&input),
        "--scales",
        "0.5,1.0",
        "--frame",
        "rotating",
        "--out",
        path(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let dat = fs::read_to_string(out.join("sweep.dat")).unwrap();
    assert!(dat.starts_with("# scale (1)\tinfidelity (1)"));
    assert_eq!(dat.lines().count(), 3);
}

fn dilation_problem(v_amp: f64) -> Value {
    let mhz = 2.0 * std::f64::consts::PI * 1e6;
    let t = 50e-9;
    let v = SampledFunction::from_fn(0.0, t, 801, Unit::Radians, |x| v_amp * (x / t)).unwrap();
    serde_json::json!({
        "case": "z-c-minus",
        "phi_i": Phase::linear(40.0 * mhz),
        "phi_j": Phase::linear(-10.0 * mhz),
        "big_v_i": v,
        "big_v_j": SampledFunction::constant(0.0, t, 0.0, Unit::Radians).unwrap(),
        "span": [0.0, t],
    })
}

#[test]
fn dilate_solves_and_reports_residual() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("p.json");
    fs::write(&f, dilation_problem(1.0).to_string()).unwrap();
    let o = vzpulse(&["dilate", path(&f)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = stdout_json(&o);
    assert!(v["result"]["equation_residual"].as_f64().unwrap() < 1e-8);
    assert_eq!(v["result"]["record"]["case"], "z-c-minus");
}

#[test]
fn dilate_turning_point_is_a_solver_error() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("p.json");
    // V falls faster than the frame phase rises
    fs::write(&f, dilation_problem(-200.0).to_string()).unwrap();
    let o = vzpulse(&["dilate", path(&f)]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("NonMonotone"));
}

#[test]
fn iq_encode_then_decode() {
    let dir = tempfile::tempdir().unwrap();
    let t = 200e-9;
    let q = serde_json::json!({
        "i": SampledFunction::constant(0.0, t, 1.0, Unit::Dimensionless).unwrap().resample(0.0, t, 20001).unwrap(),
        "q": SampledFunction::constant(0.0, t, 0.0, Unit::Dimensionless).unwrap().resample(0.0, t, 20001).unwrap(),
    });
    let qf = dir.path().join("q.json");
    fs::write(&qf, q.to_string()).unwrap();
    let enc = dir.path().join("enc");
    let o = vzpulse(&["iq", "encode", path(&qf), "--carrier-ghz", "1.0", "--mu", "2.0", "--out", path(&enc)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = vzpulse(&["iq", "decode", path(&enc.join("iq.json")), "--carrier-ghz", "1.0", "--mu", "2.0"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = stdout_json(&o);
    let i: Vec<f64> = serde_json::from_value(v["result"]["i"]["samples"].clone()).unwrap();
    let q: Vec<f64> = serde_json::from_value(v["result"]["q"]["samples"].clone()).unwrap();
    let n = i.len();
    for k in n / 10..n - n / 10 {
        assert!((i[k] - 1.0).abs() < 1e-3 && q[k].abs() < 1e-3, "k {k}: {} {}", i[k], q[k]);
    }
}

#[test]
fn normalizer_zoo_matches_oracle() {
    let o = vzpulse(&["normalizer-check", "--gate", "all"]);
    assert!(o.status.success());
    let v = stdout_json(&o);
    let rows = v["result"].as_array().unwrap();
    assert!(rows.len() >= 20);
    for r in rows {
        assert_eq!(r["verdict"]["member"], r["oracle_member"], "{}", r["gate"]);
    }
    let o = vzpulse(&["normalizer-check", "--gate", "iswap"]);
    assert_eq!(stdout_json(&o)["result"]["verdict"]["member"], true);
    let o = vzpulse(&["normalizer-check", "--gate", "nope"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn normalizer_reads_matrix_files() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("h.json");
    let s = 0.5f64.sqrt();
    fs::write(&f, format!("{{\"re\": [[{s}, {s}], [{s}, {}]]}}", -s)).unwrap();
    let o = vzpulse(&["normalizer-check", "--matrix", path(&f)]);
    assert!(o.status.success());
    assert_eq!(stdout_json(&o)["result"]["verdict"]["member"], false);
}
